"""Two-pass Gaussian-mixture message passing over the fading/interference chain.

State: the stacked channel vector g_i = [h_i; h'_i] of the desired and
interfering users.  Conditioned on the symbol pair (x_i, x'_i), the model is
linear-Gaussian, so each message p(g_i | y-segment) is a Gaussian mixture with
one component per surviving symbol-hypothesis history.  A forward and a
backward sweep of hypothesis-conditioned Kalman predict/update steps, followed
by a per-symbol combination of the two sweeps against the stationary prior,
yields the exact symbol posteriors when no components are discarded; capping
the component count gives the constant-complexity approximation.

Everything is batched: the sweeps stack (hypothesis x component) into single
kernel calls, and the combination stage flattens (index, hypothesis, component
pair) into one batch per frame, reduced per symbol with segment operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams
from .gaussian import (
    LOG_PI,
    GaussianDensity,
    GaussianMixture,
    MixtureComponent,
    logsumexp,
    mixture_collapse,
    mixture_normalize,
    mixture_prune,
)

try:  # compiled sweep inner loop; the numpy path below is the reference
    from . import _kernels
except ImportError:  # pragma: no cover - numba not installed
    _kernels = None

__all__ = [
    "Hypothesis",
    "DetectorConfig",
    "DetectorOutput",
    "SingularInnovation",
    "predict_update",
    "forward_pass",
    "backward_pass",
    "symbol_posteriors",
    "detect_frame",
    "hard_decisions",
    "pilot_priors",
]

# Relative floor applied to a vanishing interferer variance so the stacked
# prior stays invertible; also the eigenvalue floor of the PSD repair.
_VAR_FLOOR = 1e-12

# Symbol pairs (x, x'); the x = +1 block leads so that per-symbol posterior
# blocks keep all x = +1 entries contiguous and mirror-pair weights tie.
HYPOTHESES = ((1, 1), (1, -1), (-1, 1), (-1, -1))


class SingularInnovation(np.linalg.LinAlgError):
    """Innovation covariance not positive definite (needs sigma_n2 = 0)."""


@dataclass
class Hypothesis:
    """One joint assignment of the desired and interfering BPSK symbols."""

    x: int
    xp: int

    def __post_init__(self):
        if self.x not in (-1, 1) or self.xp not in (-1, 1):
            raise ValueError("symbols must be +-1")


@dataclass
class DetectorConfig:
    params: ChannelParams
    cap: int | None = 8  # None: keep every component (exact inference)
    collapse: bool = False  # moment-match to one Gaussian per step instead

    def __post_init__(self):
        if self.cap is not None and self.cap < 1:
            raise ValueError("cap must be >= 1 (or None)")


@dataclass
class DetectorOutput:
    post_x: np.ndarray  # (l,) P(x_i = +1 | y_1^l)
    g_post: list[GaussianMixture] | None  # per-symbol channel posterior
    g_mmse: np.ndarray  # (l, 2 n_rx) posterior-mean channel estimate
    fusion_fallbacks: int = 0  # pairs fused without the prior quotient


@dataclass
class _Model:
    """Receiver-side constants derived from a DetectorConfig."""

    alpha: float
    sigma_n2: float
    n_rx: int
    q: np.ndarray  # stationary state covariance (floored interferer block)
    lam_q: np.ndarray  # its inverse
    c_q: float  # log-normalizer constant of the stationary prior
    trace_q: float  # anchor scale for the PSD-repair floor

    @classmethod
    def from_config(cls, cfg: DetectorConfig) -> "_Model":
        p = cfg.params
        q = p.stacked_prior_cov(interferer_floor=_VAR_FLOOR * p.sigma_h2)
        q_diag = np.diag(q).real
        lam_q = np.diag(1.0 / q_diag).astype(np.complex128)
        c_q = -2 * p.n_rx * LOG_PI - float(np.sum(np.log(q_diag)))
        return cls(p.alpha, p.sigma_n2, p.n_rx, q, lam_q, c_q, float(q_diag.sum()))

    def prior_mixture(self) -> GaussianMixture:
        r = 2 * self.n_rx
        return GaussianMixture(
            np.zeros(1), np.zeros((1, r), dtype=np.complex128), self.q[None]
        )


def _log_prior(p_plus: float, sym: int) -> float:
    p = p_plus if sym == 1 else 1.0 - p_plus
    return float(np.log(p)) if p > 0.0 else -np.inf


def _psd_repair(covs: np.ndarray, scale: float = 0.0) -> np.ndarray:
    """Symmetrize and clamp eigenvalues below 1e-12 * trace up to that floor.

    `scale` anchors the floor to the stationary trace so that fully
    degenerate runs (alpha = 1, sigma_n2 = 0, where exact measurements keep
    shrinking the trace itself) cannot spiral into underflow.
    """
    covs = (covs + covs.conj().transpose(0, 2, 1)) / 2.0
    tr = np.einsum("cii->c", covs).real
    floor = _VAR_FLOOR * np.maximum(tr, scale)
    r = covs.shape[-1]
    shifted = covs - floor[:, None, None] * np.eye(r)
    try:
        np.linalg.cholesky(shifted)
        return covs
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(covs)
        w = np.maximum(w, floor[:, None])
        return (v * w[:, None, :]) @ v.conj().transpose(0, 2, 1)


def _inv_hermitian(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched inverse + log determinant of Hermitian PD matrices.

    Closed forms for sizes 1 and 2 and a Schur block form for size 4 (the
    innovation and one-/two-antenna state sizes); Cholesky otherwise.  Raises
    SingularInnovation when any matrix in the batch fails PD.
    """
    n = mats.shape[-1]
    if n == 1:
        s = mats[..., 0, 0].real
        if np.any(s <= 0):
            raise SingularInnovation("non-positive innovation variance")
        return (1.0 / s)[..., None, None].astype(np.complex128), np.log(s)
    if n == 2:
        a = mats[..., 0, 0].real
        d = mats[..., 1, 1].real
        b = mats[..., 0, 1]
        det = a * d - np.abs(b) ** 2
        if np.any(a <= 0) or np.any(det <= 0):
            raise SingularInnovation("covariance not PD")
        inv = np.empty_like(mats)
        inv[..., 0, 0] = d
        inv[..., 1, 1] = a
        inv[..., 0, 1] = -b
        inv[..., 1, 0] = -b.conj()
        return inv / det[..., None, None], np.log(det)
    if n == 4:
        # Invert by 2x2 blocks: PD iff the leading block and its Schur
        # complement are both PD.
        blk_a = mats[..., :2, :2]
        blk_b = mats[..., :2, 2:]
        blk_c = mats[..., 2:, 2:]
        inv_a, logdet_a = _inv_hermitian(blk_a)
        aib = inv_a @ blk_b
        schur = blk_c - blk_b.conj().swapaxes(-1, -2) @ aib
        inv_s, logdet_s = _inv_hermitian(schur)
        cross = aib @ inv_s
        inv = np.empty_like(mats)
        inv[..., :2, :2] = inv_a + cross @ aib.conj().swapaxes(-1, -2)
        inv[..., :2, 2:] = -cross
        inv[..., 2:, :2] = -cross.conj().swapaxes(-1, -2)
        inv[..., 2:, 2:] = inv_s
        return inv, logdet_a + logdet_s
    try:
        chol = np.linalg.cholesky(mats)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    ident = np.broadcast_to(np.eye(n, dtype=np.complex128), mats.shape)
    inv = np.linalg.solve(
        chol.conj().swapaxes(-1, -2), np.linalg.solve(chol, ident.copy())
    )
    logdet = 2.0 * np.sum(np.log(np.einsum("...ii->...i", chol).real), axis=-1)
    return inv, logdet


def _robust_inv(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Invert a batch, bisecting around any non-PD members.

    Returns (inverses, log determinants, indices left unset); the caller
    substitutes a fallback matrix at the reported indices.
    """
    inv = np.empty_like(mats)
    logdet = np.empty(len(mats))
    bad: list[int] = []
    stack = [(0, len(mats))]
    while stack:
        lo, hi = stack.pop()
        try:
            inv[lo:hi], logdet[lo:hi] = _inv_hermitian(mats[lo:hi])
        except SingularInnovation:
            if hi - lo == 1:
                bad.append(lo)
            else:
                mid = (lo + hi) // 2
                stack.append((lo, mid))
                stack.append((mid, hi))
    return inv, logdet, sorted(bad)


def _gauss_update(means, covs, xs, xps, y_rows, sigma_n2, n, want_covs=True):
    """Condition CN(means, covs) states on y = Z g + noise, batched.

    xs/xps are per-element symbol values; Z = [x I, x' I] is never
    materialized, only its block action.  Returns (loglike, posterior means,
    posterior covs or None, innovation inverse).
    """
    xs = np.asarray(xs, dtype=float)[:, None]
    xps = np.asarray(xps, dtype=float)[:, None]
    zm = xs * means[:, :n] + xps * means[:, n:]
    a = xs[..., None] * covs[:, :, :n] + xps[..., None] * covs[:, :, n:]  # K Z^H
    zkz = xs[..., None] * a[:, :n, :] + xps[..., None] * a[:, n:, :]
    s = sigma_n2 * np.eye(n) + zkz
    try:
        s_inv, logdet = _inv_hermitian(s)
    except SingularInnovation:
        if sigma_n2 > 0:
            raise
        # Zero-noise degenerate run: rank-deficient states can make the
        # innovation numerically singular; lift it by the relative floor.
        tr = np.einsum("cii->c", s).real
        s = s + (_VAR_FLOOR * tr)[:, None, None] * np.eye(n)
        s_inv, logdet = _inv_hermitian(s)
    v = y_rows - zm
    siv = (s_inv @ v[..., None])[..., 0]
    quad = np.sum(v.conj() * siv, axis=-1).real
    loglike = -n * LOG_PI - logdet - quad
    post_means = means + (a @ siv[..., None])[..., 0]
    post_covs = covs - (a @ s_inv) @ a.conj().transpose(0, 2, 1) if want_covs else None
    return loglike, post_means, post_covs, s_inv


def _predict_update_batch(means, covs, xs, xps, y_prev, mdl: _Model):
    """One hypothesis-conditioned Kalman step: measure y_prev, predict ahead.

    Mean: alpha (m + K Z^H S^-1 (y - Z m)); covariance: the Riccati recursion
    alpha^2 (K - K Z^H S^-1 Z K) + (1 - alpha^2) Q with process noise
    (1 - alpha^2) Q matching the stationary state dynamics.
    """
    loglike, post_means, post_covs, _ = _gauss_update(
        means, covs, xs, xps, y_prev[None, :], mdl.sigma_n2, mdl.n_rx
    )
    a2 = mdl.alpha * mdl.alpha
    new_means = mdl.alpha * post_means
    new_covs = _psd_repair(a2 * post_covs + (1.0 - a2) * mdl.q, mdl.trace_q)
    return loglike, new_means, new_covs


def predict_update(
    msg: MixtureComponent, hyp: Hypothesis, y_prev: np.ndarray, cfg: DetectorConfig
) -> tuple[float, MixtureComponent]:
    """Advance one mixture component past one observation under one hypothesis.

    Returns the observation log likelihood and the stepped component; the
    symbol priors p(x) p(x') are the caller's to fold in.
    """
    mdl = _Model.from_config(cfg)
    y_prev = np.asarray(y_prev, dtype=np.complex128).reshape(mdl.n_rx)
    ll, m2, k2 = _predict_update_batch(
        msg.density.mean[None],
        msg.density.cov[None],
        np.array([hyp.x]),
        np.array([hyp.xp]),
        y_prev,
        mdl,
    )
    out = MixtureComponent(msg.log_weight + float(ll[0]), GaussianDensity(m2[0], k2[0]))
    return float(ll[0]), out


def _allowed_hyps(p_plus: float, p_plus_int: float):
    """(x, xp, log p(x) + log p(xp)) for hypotheses with positive prior."""
    out = []
    for x, xp in HYPOTHESES:
        lp = _log_prior(p_plus, x) + _log_prior(p_plus_int, xp)
        if lp != -np.inf:
            out.append((x, xp, lp))
    return out


def _expand(mix: GaussianMixture, y_prev, p_plus, p_plus_int, mdl) -> GaussianMixture:
    """Grow the mixture by every positive-prior symbol-pair hypothesis."""
    hyps = _allowed_hyps(p_plus, p_plus_int)
    c = len(mix)
    xs = np.repeat([h[0] for h in hyps], c)
    xps = np.repeat([h[1] for h in hyps], c)
    lps = np.repeat([h[2] for h in hyps], c)
    means = np.tile(mix.means, (len(hyps), 1))
    covs = np.tile(mix.covs, (len(hyps), 1, 1))
    logw = np.tile(mix.log_weights, len(hyps)) + lps
    ll, m2, k2 = _predict_update_batch(means, covs, xs, xps, y_prev, mdl)
    return GaussianMixture(logw + ll, m2, k2)


def _reduce(mix: GaussianMixture, cfg: DetectorConfig) -> GaussianMixture:
    if cfg.collapse:
        return GaussianMixture.single(mixture_collapse(mixture_normalize(mix)))
    if cfg.cap is not None:
        return mixture_prune(mix, cfg.cap)
    return mixture_normalize(mix)


def _sweep_py(y, priors_x, priors_xp, cfg, mdl) -> list[GaussianMixture]:
    msgs = [mdl.prior_mixture()]
    for i in range(1, len(y)):
        grown = _expand(msgs[-1], y[i - 1], priors_x[i - 1], priors_xp[i - 1], mdl)
        msgs.append(_reduce(grown, cfg))
    return msgs


def _sweep(y, priors_x, priors_xp, cfg, mdl) -> list[GaussianMixture]:
    if _kernels is None or cfg.cap is None:
        return _sweep_py(y, priors_x, priors_xp, cfg, mdl)
    try:
        counts, logw, means, covs = _kernels.sweep_kernel(
            np.ascontiguousarray(y),
            np.ascontiguousarray(priors_x),
            np.ascontiguousarray(priors_xp),
            mdl.alpha,
            mdl.sigma_n2,
            np.diag(mdl.q).real.copy(),
            int(cfg.cap),
            bool(cfg.collapse),
        )
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    return [
        GaussianMixture(logw[i, :c], means[i, :c], covs[i, :c])
        for i, c in enumerate(counts)
    ]


def _as_priors(priors_x, l) -> np.ndarray:
    p = np.asarray(priors_x, dtype=float)
    if p.shape != (l,):
        raise ValueError("need one prior per symbol")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("priors must lie in [0, 1]")
    return p


def _as_obs(y, n_rx: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[1] != n_rx:
        raise ValueError(f"observations must be (l, {n_rx})")
    return y


def forward_pass(
    y: np.ndarray,
    priors_x: np.ndarray,
    cfg: DetectorConfig,
    priors_xp: np.ndarray | None = None,
) -> list[GaussianMixture]:
    """Predictive messages p(g_i | y_1 .. y_{i-1}) for every index.

    Starts from the stationary prior, then alternates hypothesis expansion
    with survivor reduction.  `priors_xp` (interferer symbol priors) defaults
    to the uninformed 1/2 and exists for tests that pin the interferer.
    """
    mdl = _Model.from_config(cfg)
    y = _as_obs(y, mdl.n_rx)
    l = len(y)
    priors_x = _as_priors(priors_x, l)
    priors_xp = np.full(l, 0.5) if priors_xp is None else _as_priors(priors_xp, l)
    return _sweep(y, priors_x, priors_xp, cfg, mdl)


def backward_pass(
    y: np.ndarray,
    priors_x: np.ndarray,
    cfg: DetectorConfig,
    priors_xp: np.ndarray | None = None,
) -> list[GaussianMixture]:
    """Messages p(g_i | y_{i+1} .. y_l); the stationary chain is reversible,
    so this is the forward sweep over the index-reversed observations."""
    mdl = _Model.from_config(cfg)
    y = _as_obs(y, mdl.n_rx)
    l = len(y)
    priors_x = _as_priors(priors_x, l)
    priors_xp = np.full(l, 0.5) if priors_xp is None else _as_priors(priors_xp, l)
    rev = _sweep(y[::-1], priors_x[::-1], priors_xp[::-1], cfg, mdl)
    return rev[::-1]


def _stack_messages(msgs: list[GaussianMixture]):
    """Concatenate per-index mixtures plus their precision-form parameters."""
    counts = np.array([len(m) for m in msgs])
    offsets = np.concatenate([[0], np.cumsum(counts)])
    logw = np.concatenate([m.log_weights for m in msgs])
    means = np.concatenate([m.means for m in msgs])
    covs = np.concatenate([m.covs for m in msgs])
    r = covs.shape[-1]
    lam, logdet_cov, bad = _robust_inv(covs)
    for idx in bad:  # zero-noise degenerate runs: lift by the relative floor
        lam[idx], logdet_cov[idx] = _inv_with_lift(covs[idx])
    lam = (lam + lam.conj().transpose(0, 2, 1)) / 2.0
    eta = np.einsum("cij,cj->ci", lam, means)
    c = -r * LOG_PI - logdet_cov - np.einsum("ci,ci->c", means.conj(), eta).real
    return counts, offsets, logw, lam, eta, c


def _inv_with_lift(mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Invert one Hermitian matrix, lifting the diagonal until cancellation
    no longer defeats positive definiteness.

    Only zero-noise degenerate runs reach this: condition numbers there hit
    1/_VAR_FLOOR, where the block inverses legitimately round indefinite.
    """
    try:
        inv1, ld1 = _inv_hermitian(mat[None])
        return inv1[0], float(ld1[0])
    except SingularInnovation:
        pass
    r = mat.shape[-1]
    lift = _VAR_FLOOR * abs(np.trace(mat).real)
    for _ in range(40):
        try:
            inv1, ld1 = _inv_hermitian((mat + lift * np.eye(r))[None])
            return inv1[0], float(ld1[0])
        except SingularInnovation:
            lift *= 10.0
    raise SingularInnovation("matrix defeated the diagonal lift")


def _quotient_fusion(lam_f, eta_f, c_f, lam_b, eta_b, c_b, lam_q, c_q):
    """Batched N_f N_b / N_prior -> exp(scale) N(mean, cov) in precision form.

    Pairs whose combined precision is indefinite fall back to the plain
    product N_f N_b (prior term dropped); returns their count.
    """
    r = lam_q.shape[-1]
    lam = lam_f + lam_b - lam_q
    eta = eta_f + eta_b
    c_in = c_f + c_b - c_q
    covs, logdet_lam, bad = _robust_inv(lam)
    for idx in bad:  # the product of two PD precisions is always PD
        covs[idx], logdet_lam[idx] = _inv_with_lift(lam_f[idx] + lam_b[idx])
        c_in[idx] += c_q
    means = np.einsum("pij,pj->pi", covs, eta)
    c_out = -r * LOG_PI + logdet_lam - np.einsum("pi,pi->p", means.conj(), eta).real
    covs = (covs + covs.conj().transpose(0, 2, 1)) / 2.0
    return c_in - c_out, means, covs, len(bad)


def _fuse_pairs_reference(fwd: GaussianMixture, bwd: GaussianMixture, prior: GaussianDensity):
    """All (forward, backward) pairs fused against the prior.

    Test hook: the batched path cross-checked against gaussian.fuse_quotient.
    """
    _, _, f_logw, lam_f, eta_f, c_f = _stack_messages([fwd])
    _, _, b_logw, lam_b, eta_b, c_b = _stack_messages([bwd])
    lam_q, logdet_q = _inv_hermitian(prior.cov[None])
    if np.abs(prior.mean).max() > 0:
        raise ValueError("reference path assumes a zero-mean prior")
    c_q = -prior.dim * LOG_PI - float(logdet_q[0])
    nf, nb = len(fwd), len(bwd)
    idx_f = np.repeat(np.arange(nf), nb)
    idx_b = np.tile(np.arange(nb), nf)
    scale, means, covs, _ = _quotient_fusion(
        lam_f[idx_f], eta_f[idx_f], c_f[idx_f],
        lam_b[idx_b], eta_b[idx_b], c_b[idx_b],
        lam_q[0], c_q,
    )
    return scale, means, covs


def symbol_posteriors(
    y: np.ndarray,
    priors_x: np.ndarray,
    fwd: list[GaussianMixture],
    bwd: list[GaussianMixture],
    cfg: DetectorConfig,
    priors_xp: np.ndarray | None = None,
    channel_posterior: bool = True,
) -> DetectorOutput:
    """Combine the two sweeps into symbol posteriors and channel estimates.

    Per index, per symbol-pair hypothesis, per (forward, backward) component
    pair: fuse the pair against the stationary prior (precision-form quotient
    Lambda_f + Lambda_b - Lambda_prior), score the fused Gaussian against the
    local observation in closed form, and accumulate log weights.  Pairs with
    an indefinite quotient precision fall back to the plain product.  The same
    weighted components, conditioned on the local observation, form the
    channel posterior mixture whose mean is the MMSE estimate.
    """
    mdl = _Model.from_config(cfg)
    y = _as_obs(y, mdl.n_rx)
    l = len(y)
    priors_x = _as_priors(priors_x, l)
    priors_xp = np.full(l, 0.5) if priors_xp is None else _as_priors(priors_xp, l)
    if not (len(fwd) == len(bwd) == l):
        raise ValueError("need one forward and one backward message per symbol")
    n = mdl.n_rx
    r = 2 * n

    f_cnt, f_off, f_logw, lam_f, eta_f, c_f = _stack_messages(fwd)
    b_cnt, b_off, b_logw, lam_b, eta_b, c_b = _stack_messages(bwd)

    # Flatten all (index, forward comp, backward comp) pairs.
    pair_counts = f_cnt * b_cnt
    pair_off = np.concatenate([[0], np.cumsum(pair_counts)])
    pair_index = np.repeat(np.arange(l), pair_counts)
    rank = np.arange(pair_off[-1]) - pair_off[pair_index]
    pf = f_off[pair_index] + rank // b_cnt[pair_index]
    pb = b_off[pair_index] + rank % b_cnt[pair_index]

    scale, means, covs, n_bad = _quotient_fusion(
        lam_f[pf], eta_f[pf], c_f[pf], lam_b[pb], eta_b[pb], c_b[pb], mdl.lam_q, mdl.c_q
    )
    pair_logw = f_logw[pf] + b_logw[pb] + scale

    # Expand by symbol-pair hypotheses, entries grouped by index with the
    # x = +1 hypotheses leading each block.
    hyp_x = np.array([h[0] for h in HYPOTHESES], dtype=float)
    hyp_xp = np.array([h[1] for h in HYPOTHESES], dtype=float)
    with np.errstate(divide="ignore"):
        lp_table = np.where(
            hyp_x > 0, np.log(priors_x)[:, None], np.log1p(-priors_x)[:, None]
        ) + np.where(
            hyp_xp > 0, np.log(priors_xp)[:, None], np.log1p(-priors_xp)[:, None]
        )  # (l, 4)
    allowed = np.isfinite(lp_table)
    nh = allowed.sum(axis=1)
    hyp_rank_ids = np.argsort(~allowed, axis=1, kind="stable")  # allowed first
    plus_cnt = allowed[:, :2].sum(axis=1) * pair_counts

    ent_cnt = nh * pair_counts
    starts = np.concatenate([[0], np.cumsum(ent_cnt)])[:-1]
    ent_index = np.repeat(np.arange(l), ent_cnt)
    erank = np.arange(ent_cnt.sum()) - starts[ent_index]
    ent_hyp = hyp_rank_ids[ent_index, erank // pair_counts[ent_index]]
    ent_pair = pair_off[ent_index] + erank % pair_counts[ent_index]
    ent_x = hyp_x[ent_hyp]
    ent_xp = hyp_xp[ent_hyp]
    ent_lp = lp_table[ent_index, ent_hyp]

    loglike, post_means, post_covs, _ = _gauss_update(
        means[ent_pair],
        covs[ent_pair],
        ent_x,
        ent_xp,
        y[ent_index],
        mdl.sigma_n2,
        n,
        want_covs=channel_posterior,
    )
    ent_logw = pair_logw[ent_pair] + ent_lp + loglike

    # Segment reductions per index.
    seg_max = np.maximum.reduceat(ent_logw, starts)
    shifted = np.exp(ent_logw - seg_max[ent_index])
    seg_sum = np.add.reduceat(shifted, starts)
    w_norm = shifted / seg_sum[ent_index]

    is_plus = (np.arange(len(ent_logw)) - starts[ent_index]) < plus_cnt[ent_index]
    post_x = np.add.reduceat(np.where(is_plus, w_norm, 0.0), starts)
    # Degenerate priors decide the symbol outright; pin them exactly.
    post_x = np.where(plus_cnt == ent_cnt, 1.0, post_x)
    post_x = np.where(plus_cnt == 0, 0.0, post_x)

    g_mmse = np.add.reduceat(w_norm[:, None] * post_means, starts, axis=0)

    g_post = None
    if channel_posterior:
        post_covs = _psd_repair(post_covs, mdl.trace_q)
        log_norm = seg_max + np.log(seg_sum)
        ent_logw_n = ent_logw - log_norm[ent_index]
        g_post = [
            GaussianMixture(
                ent_logw_n[lo:hi], post_means[lo:hi], post_covs[lo:hi]
            )
            for lo, hi in zip(starts, np.append(starts[1:], len(ent_logw)))
        ]

    return DetectorOutput(post_x, g_post, g_mmse, n_bad)


def detect_frame(
    y: np.ndarray,
    priors_x: np.ndarray,
    cfg: DetectorConfig,
    priors_xp: np.ndarray | None = None,
    channel_posterior: bool = True,
) -> DetectorOutput:
    """Full two-pass detection of one frame."""
    fwd = forward_pass(y, priors_x, cfg, priors_xp)
    bwd = backward_pass(y, priors_x, cfg, priors_xp)
    return symbol_posteriors(
        y, priors_x, fwd, bwd, cfg, priors_xp, channel_posterior=channel_posterior
    )


def hard_decisions(post_x: np.ndarray) -> np.ndarray:
    """Sign decisions on P(x = +1), ties resolved toward +1."""
    return np.where(np.asarray(post_x) >= 0.5, 1, -1).astype(np.int8)


def pilot_priors(pilots: np.ndarray) -> np.ndarray:
    """Degenerate prior 1 at pilot positions, uninformed 1/2 elsewhere."""
    return np.where(np.asarray(pilots, dtype=bool), 1.0, 0.5)
