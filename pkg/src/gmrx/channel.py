"""Fading traces, pilot/data symbol streams, and noisy frame observations.

The world model: two users (desired + interferer) send BPSK over independent
flat Rayleigh channels to n_rx antennas,

    y_i = h_i x_i + h'_i x'_i + n_i,

with each channel either a first-order Gauss-Markov process
(h_i = alpha h_{i-1} + sqrt(1 - alpha^2) w_i, stationary variance sigma_h^2
per antenna) or a Clarke process with Bessel autocorrelation.  Only the
desired user carries pilots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

__all__ = [
    "ChannelParams",
    "PilotPattern",
    "FadingTrace",
    "FrameRealization",
    "gen_gauss_markov",
    "gen_clarke",
    "gen_symbols",
    "simulate_frame",
]


@dataclass
class ChannelParams:
    """Process and noise parameters shared by simulator and receivers."""

    alpha: float
    sigma_h2: float
    sigma_hp2: float
    sigma_n2: float
    n_rx: int = 2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.sigma_h2 <= 0:
            raise ValueError("sigma_h2 must be positive")
        if self.sigma_hp2 < 0 or self.sigma_n2 < 0:
            raise ValueError("variances must be non-negative")
        if self.n_rx < 1:
            raise ValueError("n_rx must be >= 1")

    @property
    def state_dim(self) -> int:
        """Dimension of the stacked channel vector [h; h']."""
        return 2 * self.n_rx

    def stacked_prior_cov(self, interferer_floor: float = 0.0) -> np.ndarray:
        """Stationary covariance of the stacked channel vector.

        A tiny floor keeps the interferer block invertible when
        sigma_hp2 = 0 (no interferer).
        """
        var_p = max(self.sigma_hp2, interferer_floor)
        return np.diag(
            np.r_[np.full(self.n_rx, self.sigma_h2), np.full(self.n_rx, var_p)]
        ).astype(np.complex128)


@dataclass
class PilotPattern:
    """One pilot every `period` symbols, at phase `offset`."""

    period: int
    offset: int = 0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if not 0 <= self.offset < self.period:
            raise ValueError("offset must lie in [0, period)")

    def mask(self, length: int) -> np.ndarray:
        idx = np.arange(length)
        return idx % self.period == self.offset


@dataclass
class FadingTrace:
    """Per-symbol channel vectors for desired (h) and interferer (hp)."""

    h: np.ndarray  # (l, n_rx) complex
    hp: np.ndarray  # (l, n_rx) complex

    def __post_init__(self):
        if self.h.shape != self.hp.shape:
            raise ValueError("h and hp must have equal shapes")

    @property
    def length(self) -> int:
        return self.h.shape[0]

    def stacked(self) -> np.ndarray:
        """(l, 2 n_rx) array of [h_i; hp_i]."""
        return np.concatenate([self.h, self.hp], axis=1)


@dataclass
class FrameRealization:
    """Everything one trial produces: symbols, pilots, channels, observations."""

    x: np.ndarray  # (l,) +-1, desired user
    xp: np.ndarray  # (l,) +-1, interferer
    pilots: np.ndarray  # (l,) bool
    trace: FadingTrace
    y: np.ndarray  # (l, n_rx) complex

    @property
    def length(self) -> int:
        return self.x.shape[0]


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance CSCG samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _ar1(rng: np.random.Generator, alpha: float, sigma2: float, n_rx: int, l: int):
    w = np.sqrt(sigma2) * _cn(rng, (l, n_rx))
    out = np.empty_like(w)
    out[0] = w[0]
    scale = np.sqrt(1.0 - alpha * alpha)
    for i in range(1, l):
        out[i] = alpha * out[i - 1] + scale * w[i]
    return out


def gen_gauss_markov(rng: np.random.Generator, p: ChannelParams, l: int) -> FadingTrace:
    """Stationary AR(1) traces for both users, independent randomness.

    Initialized from the stationary distribution so the marginal variance is
    sigma_h2 (resp. sigma_hp2) at every index.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    h = _ar1(rng, p.alpha, p.sigma_h2, p.n_rx, l)
    hp = _ar1(rng, p.alpha, p.sigma_hp2, p.n_rx, l)
    return FadingTrace(h, hp)


def gen_clarke(
    rng: np.random.Generator, fd_norm: float, sigma2: float, n_rx: int, l: int
) -> np.ndarray:
    """Stationary process with autocorrelation sigma2 * J0(2 pi fd_norm k).

    Frequency-domain synthesis: the spectrum of white CSCG noise is shaped by
    the sampled Doppler spectrum (the DFT of the target autocorrelation) on a
    4x padded grid, then transformed back; the padding removes circular
    leakage so lags up to 2 l match the Bessel target exactly up to the tiny
    clamping of negative spectral samples.
    """
    if not 0.0 < fd_norm < 0.5:
        raise ValueError("fd_norm must lie in (0, 0.5)")
    if l < 1:
        raise ValueError("l must be >= 1")
    n = 4 * max(l, 64)
    lags = np.arange(n)
    lags = np.minimum(lags, n - lags)  # symmetric circular lag
    acf = j0(2.0 * np.pi * fd_norm * lags)
    spectrum = np.clip(np.fft.fft(acf).real, 0.0, None)
    spectrum *= n / spectrum.sum()  # exact unit marginal variance
    shaped = np.sqrt(spectrum)[:, None] * _cn(rng, (n, n_rx))
    traces = np.fft.ifft(shaped, axis=0) * np.sqrt(n)
    return np.sqrt(sigma2) * traces[:l]


def gen_symbols(
    rng: np.random.Generator, pattern: PilotPattern, l: int
) -> tuple[np.ndarray, np.ndarray]:
    """BPSK stream with +1 pilots at pattern positions, fair coins elsewhere."""
    if l < 1:
        raise ValueError("l must be >= 1")
    pilots = pattern.mask(l)
    x = rng.choice(np.array([-1, 1]), size=l)
    x[pilots] = 1
    return x.astype(np.int8), pilots


def simulate_frame(
    rng: np.random.Generator,
    p: ChannelParams,
    trace: FadingTrace,
    x: np.ndarray,
    xp: np.ndarray,
    pilots: np.ndarray | None = None,
) -> FrameRealization:
    """Observe y_i = h_i x_i + h'_i x'_i + n_i with CSCG noise."""
    x = np.asarray(x)
    xp = np.asarray(xp)
    if not (len(x) == len(xp) == trace.length):
        raise ValueError("symbol and trace lengths disagree")
    if pilots is None:
        pilots = np.zeros(len(x), dtype=bool)
    noise = np.sqrt(p.sigma_n2) * _cn(rng, trace.h.shape)
    y = trace.h * x[:, None] + trace.hp * xp[:, None] + noise
    return FrameRealization(x, xp, pilots, trace, y)
