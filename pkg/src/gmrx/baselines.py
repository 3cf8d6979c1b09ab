"""Reference receivers and the analytic error floor.

Three benchmarks bracket the mixture detector: a pilot-based linear (Wiener)
channel estimator that treats the interference as white noise, a genie
receiver that is handed every channel coefficient except the current pair,
and maximum-likelihood detection with the full channel state revealed.  The
closed-form floor approximates the genie receiver's bit error rate in the
noise-free limit for dual receive antennas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import ChannelParams, FadingTrace

__all__ = [
    "MmseConfig",
    "NoPilotsInWindow",
    "mmse_estimate",
    "mmse_detect",
    "genie_detect",
    "full_csi_ml_detect",
    "analytic_error_floor",
]


class NoPilotsInWindow(ValueError):
    """Some symbol has no pilot within the estimator window."""


@dataclass
class MmseConfig:
    """Window half-width (in symbols) of pilots used per estimate."""

    window: int

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")


def mmse_estimate(
    y: np.ndarray, pilots: np.ndarray, p: ChannelParams, cfg: MmseConfig
) -> np.ndarray:
    """Linear MMSE estimate of the desired channel from nearby pilots.

    For each index, combines the pilot observations within the window with
    Wiener weights built from the AR(1) autocovariance alpha^|i-j| sigma_h^2
    and effective white noise (sigma_hp2 + sigma_n2) I; the same scalar
    weights apply to every antenna.
    """
    y = np.asarray(y, dtype=np.complex128)
    pilots = np.asarray(pilots, dtype=bool)
    l = len(pilots)
    pilot_idx = np.flatnonzero(pilots)
    noise_var = p.sigma_hp2 + p.sigma_n2
    est = np.empty_like(y)
    weights_cache: dict[tuple[int, ...], np.ndarray] = {}
    for i in range(l):
        nearby = pilot_idx[np.abs(pilot_idx - i) <= cfg.window]
        if nearby.size == 0:
            raise NoPilotsInWindow(f"no pilot within {cfg.window} of index {i}")
        offsets = tuple(int(j - i) for j in nearby)
        w = weights_cache.get(offsets)
        if w is None:
            gram = p.sigma_h2 * p.alpha ** np.abs(
                np.subtract.outer(offsets, offsets)
            ) + noise_var * np.eye(len(offsets))
            cross = p.sigma_h2 * p.alpha ** np.abs(np.asarray(offsets, dtype=float))
            w = np.linalg.lstsq(gram, cross, rcond=None)[0]
            weights_cache[offsets] = w
        est[i] = w @ y[nearby]
    return est


def mmse_detect(h_est: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Maximal-ratio combining against the estimate; ties decide +1."""
    metric = np.sum(h_est.conj() * y, axis=-1).real
    return np.where(metric >= 0, 1, -1).astype(np.int8)


def _nearest_of_four(h_hat, hp_hat, y):
    """Joint minimum-distance decision over the four symbol pairs."""
    pairs = np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=np.int8)
    d = np.stack(
        [np.sum(np.abs(y - h_hat * x - hp_hat * xp) ** 2, axis=-1) for x, xp in pairs]
    )
    best = np.argmin(d, axis=0)  # ties take the earlier pair, i.e. +1 first
    return pairs[best, 0], pairs[best, 1]


def genie_detect(
    trace: FadingTrace, y: np.ndarray, p: ChannelParams
) -> tuple[np.ndarray, np.ndarray]:
    """Joint ML symbol-pair decisions given all neighboring coefficients.

    Interior estimates condition each channel on both neighbors,
    alpha (h_{i-1} + h_{i+1}) / (1 + alpha^2); frame edges condition on the
    single available neighbor (mean alpha h).  The residual uncertainty is
    white and hypothesis-independent, so ML reduces to nearest of the four
    signal points.
    """
    y = np.asarray(y, dtype=np.complex128)
    l = trace.length
    shrink = p.alpha / (1.0 + p.alpha**2)

    def cond_mean(h):
        est = np.empty_like(h)
        if l >= 3:
            est[1:-1] = shrink * (h[:-2] + h[2:])
        if l >= 2:
            est[0] = p.alpha * h[1]
            est[-1] = p.alpha * h[-2]
        else:
            est[0] = 0.0
        return est

    return _nearest_of_four(cond_mean(trace.h), cond_mean(trace.hp), y)


def full_csi_ml_detect(
    trace: FadingTrace, y: np.ndarray, p: ChannelParams
) -> np.ndarray:
    """Per-symbol ML for the desired symbol with the true channels revealed.

    The interferer symbol is marginalized, not decided:
    P(x | y, h, h') ~ sum_xp exp(-||y - h x - h' xp||^2 / sigma_n2).
    The noise-free limit degenerates to a minimum-distance rule.
    """
    y = np.asarray(y, dtype=np.complex128)
    d = np.stack(
        [
            np.sum(np.abs(y - trace.h * x - trace.hp * xp) ** 2, axis=-1)
            for (x, xp) in ((1, 1), (1, -1), (-1, 1), (-1, -1))
        ]
    )  # (4, l)
    if p.sigma_n2 > 0:
        ll = -d / p.sigma_n2
        metric = logsumexp(ll[:2], axis=0) - logsumexp(ll[2:], axis=0)
    else:
        metric = np.minimum(d[2], d[3]) - np.minimum(d[0], d[1])
    return np.where(metric >= 0, 1, -1).astype(np.int8)


def analytic_error_floor(p: ChannelParams) -> float:
    """Closed-form approximation of the genie receiver's bit error rate.

    Valid for dual receive antennas only (the exponents are specific to two
    diversity branches); other antenna counts are rejected rather than
    extrapolated.
    """
    if p.n_rx != 2:
        raise ValueError("floor formula is specific to n_rx = 2")
    a2 = p.alpha**2
    resid = (1.0 - a2) / (1.0 + a2) * (p.sigma_h2 + p.sigma_hp2) + p.sigma_n2
    mu1 = np.sqrt(a2 * p.sigma_h2 / (a2 * p.sigma_h2 + (1.0 + a2) * resid))
    both = p.sigma_h2 + p.sigma_hp2
    mu2 = np.sqrt(a2 * both / (a2 * both + (1.0 + a2) * resid))
    return float(
        ((1.0 - mu1) / 2.0) ** 2 * (2.0 + mu1)
        + ((1.0 - mu2) / 2.0) ** 2 * (2.0 + mu2)
    )
