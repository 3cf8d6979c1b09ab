"""Gaussian-mixture message-passing receiver for time-correlated Rayleigh
fading with an unpiloted co-channel interferer, with baseline receivers, an
LDPC-coded joint detection/decoding loop, and a Monte Carlo harness."""

from .baselines import (
    MmseConfig,
    NoPilotsInWindow,
    analytic_error_floor,
    full_csi_ml_detect,
    genie_detect,
    mmse_detect,
    mmse_estimate,
)
from .channel import (
    ChannelParams,
    FadingTrace,
    FrameRealization,
    PilotPattern,
    gen_clarke,
    gen_gauss_markov,
    gen_symbols,
    simulate_frame,
)
from .detector import (
    DetectorConfig,
    DetectorOutput,
    Hypothesis,
    SingularInnovation,
    backward_pass,
    detect_frame,
    forward_pass,
    hard_decisions,
    pilot_priors,
    predict_update,
    symbol_posteriors,
)
from .gaussian import (
    EmptyMixture,
    GaussianDensity,
    GaussianMixture,
    IndefiniteFusion,
    MixtureComponent,
    SingularCovariance,
    cn_logpdf,
    fuse_product,
    fuse_quotient,
    mixture_collapse,
    mixture_normalize,
    mixture_prune,
    sample_cscg,
)
from .harness import ExperimentConfig, SweepRow
from .ldpc import (
    CodeSpec,
    ConstructionFailed,
    JointResult,
    RankDeficient,
    Schedule,
    SparseParityMatrix,
    code_500_250,
    construct_code,
    decode,
    encode,
    from_alist,
    joint_receive,
    to_alist,
)
from .streams import substream

__version__ = "0.1.0"
