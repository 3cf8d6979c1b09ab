"""Circularly-symmetric complex Gaussian (CSCG) densities and mixtures.

Conventions: a density CN(m, K) on C^r has pdf
``pi^-r det(K)^-1 exp(-(x-m)^H K^-1 (x-m))``, i.e. K = E[(x-m)(x-m)^H] and the
pseudo-covariance is zero.  Mixture weights live in the log domain end to end;
normalization and marginalization use logsumexp so that weight ratios up to
e^+-700 survive.

All objects are treated as immutable values: operations return new instances
and never mutate their arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def logsumexp(a, axis=None):
    """Stable log-sum-exp; tolerates -inf entries (zero weights).

    Local replacement for the scipy version, which spends more time in
    dispatch plumbing than this library spends on arithmetic.
    """
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)

__all__ = [
    "GaussianDensity",
    "MixtureComponent",
    "GaussianMixture",
    "SingularCovariance",
    "IndefiniteFusion",
    "EmptyMixture",
    "cn_logpdf",
    "sample_cscg",
    "fuse_quotient",
    "fuse_product",
    "mixture_normalize",
    "mixture_prune",
    "mixture_collapse",
]

LOG_PI = float(np.log(np.pi))


class SingularCovariance(np.linalg.LinAlgError):
    """Covariance factorization failed (not positive definite)."""


class IndefiniteFusion(np.linalg.LinAlgError):
    """Precision combination of a Gaussian quotient is not positive definite."""


class EmptyMixture(ValueError):
    """Mixture has no component with finite weight."""


@dataclass
class GaussianDensity:
    """A CSCG density with mean vector and Hermitian PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.complex128)
        self.cov = np.asarray(self.cov, dtype=np.complex128)
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("mean/cov dimensions disagree")

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass
class MixtureComponent:
    """One weighted component; log_weight is the natural log of its mass."""

    log_weight: float
    density: GaussianDensity


class GaussianMixture:
    """Array-backed ordered list of weighted CSCG components.

    Stored as stacked arrays (log_weights (C,), means (C, r), covs (C, r, r))
    so that message-passing kernels can run batched over components.
    """

    __slots__ = ("log_weights", "means", "covs")

    def __init__(self, log_weights, means, covs):
        self.log_weights = np.atleast_1d(np.asarray(log_weights, dtype=float))
        self.means = np.asarray(means, dtype=np.complex128)
        self.covs = np.asarray(covs, dtype=np.complex128)
        if self.means.ndim != 2 or self.covs.ndim != 3:
            raise ValueError("means must be (C, r) and covs (C, r, r)")
        if not (len(self.log_weights) == len(self.means) == len(self.covs)):
            raise ValueError("component counts disagree")

    @classmethod
    def from_components(cls, components) -> "GaussianMixture":
        comps = list(components)
        if not comps:
            raise EmptyMixture("mixture needs at least one component")
        return cls(
            [c.log_weight for c in comps],
            np.stack([c.density.mean for c in comps]),
            np.stack([c.density.cov for c in comps]),
        )

    @classmethod
    def single(cls, density: GaussianDensity) -> "GaussianMixture":
        return cls(np.zeros(1), density.mean[None, :], density.cov[None, :, :])

    def __len__(self) -> int:
        return len(self.log_weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[MixtureComponent]:
        return [
            MixtureComponent(float(w), GaussianDensity(m.copy(), K.copy()))
            for w, m, K in zip(self.log_weights, self.means, self.covs)
        ]

    def mean(self) -> np.ndarray:
        """Overall mean under normalized weights."""
        w = np.exp(self.log_weights - logsumexp(self.log_weights))
        return w @ self.means

    def logpdf(self, x: np.ndarray) -> float:
        """Log density of the normalized mixture at a point."""
        shift = logsumexp(self.log_weights)
        comp = cn_logpdf(x[None, :], self.means, self.covs)
        return float(logsumexp(self.log_weights - shift + comp))


def cn_logpdf(x, mean, cov):
    """Log density of CN(mean, cov) at x; batched over leading axes.

    Computed from a Cholesky factor of the covariance so neither the
    determinant nor the inverse of K is ever formed explicitly.
    """
    x = np.asarray(x, dtype=np.complex128)
    mean = np.asarray(mean, dtype=np.complex128)
    cov = np.asarray(cov, dtype=np.complex128)
    r = cov.shape[-1]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    diff = np.broadcast_to(x - mean, np.broadcast_shapes(x.shape, mean.shape))
    z = np.linalg.solve(chol, diff[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.einsum("...ii->...i", chol).real), axis=-1)
    quad = np.sum(np.abs(z) ** 2, axis=-1)
    out = -r * LOG_PI - logdet - quad
    return float(out) if out.ndim == 0 else out


def sample_cscg(rng: np.random.Generator, cov, size=None) -> np.ndarray:
    """Draw zero-mean CSCG vectors with the given covariance.

    Real and imaginary parts each carry half the variance.  PSD covariances
    (including singular ones) are handled through an eigenfactorization.
    """
    cov = np.asarray(cov, dtype=np.complex128)
    r = cov.shape[0]
    w, v = np.linalg.eigh((cov + cov.conj().T) / 2.0)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    shape = (r,) if size is None else (int(size), r)
    white = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return white @ root.T if size is not None else root @ white


def _precision(density: GaussianDensity):
    """Return (Lambda, eta, c) with c the log-normalizer constant such that
    log CN(x; m, K) = -x^H Lambda x + 2 Re(x^H eta) + c."""
    r = density.dim
    try:
        chol = np.linalg.cholesky(density.cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    ident = np.eye(r, dtype=np.complex128)
    lam = np.linalg.solve(chol.conj().T, np.linalg.solve(chol, ident))
    lam = (lam + lam.conj().T) / 2.0
    eta = lam @ density.mean
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol).real)))
    c = -r * LOG_PI - logdet - float(np.real(density.mean.conj() @ eta))
    return lam, eta, c


def fuse_quotient(
    f: GaussianDensity, b: GaussianDensity, prior: GaussianDensity
) -> tuple[float, GaussianDensity]:
    """Combine N_f * N_b / N_prior into exp(log_scale) * N_fused pointwise.

    Works in precision form: Lambda = Lf + Lb - Lp, eta = ef + eb - ep.
    Raises IndefiniteFusion when the combined precision is not positive
    definite; callers may then retry with the prior term dropped (the
    product N_f * N_b is always a valid Gaussian).
    """
    if not (f.dim == b.dim == prior.dim):
        raise ValueError("densities must share a dimension")
    lam_f, eta_f, c_f = _precision(f)
    lam_b, eta_b, c_b = _precision(b)
    lam_p, eta_p, c_p = _precision(prior)
    lam = lam_f + lam_b - lam_p
    eta = eta_f + eta_b - eta_p
    try:
        return _finish_fusion(lam, eta, c_f + c_b - c_p)
    except SingularCovariance as exc:
        raise IndefiniteFusion("combined precision is not PD") from exc


def fuse_product(f: GaussianDensity, b: GaussianDensity) -> tuple[float, GaussianDensity]:
    """Pointwise product N_f * N_b = exp(log_scale) * N_fused.

    The fallback for an indefinite quotient: both precisions are PD, so the
    sum always is.
    """
    lam_f, eta_f, c_f = _precision(f)
    lam_b, eta_b, c_b = _precision(b)
    return _finish_fusion(lam_f + lam_b, eta_f + eta_b, c_f + c_b)


def _finish_fusion(lam, eta, c_in) -> tuple[float, GaussianDensity]:
    r = lam.shape[0]
    lam = (lam + lam.conj().T) / 2.0
    try:
        chol = np.linalg.cholesky(lam)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    ident = np.eye(r, dtype=np.complex128)
    cov = np.linalg.solve(chol.conj().T, np.linalg.solve(chol, ident))
    cov = (cov + cov.conj().T) / 2.0
    mean = cov @ eta
    logdet_lam = 2.0 * float(np.sum(np.log(np.diag(chol).real)))
    c_out = -r * LOG_PI + logdet_lam - float(np.real(mean.conj() @ eta))
    return c_in - c_out, GaussianDensity(mean, cov)


def mixture_normalize(m: GaussianMixture) -> GaussianMixture:
    """Shift log weights so they sum (in probability) to one."""
    total = logsumexp(m.log_weights)
    if not np.isfinite(total):
        raise EmptyMixture("all component weights are zero")
    return GaussianMixture(m.log_weights - total, m.means, m.covs)


def mixture_prune(m: GaussianMixture, cap: int) -> GaussianMixture:
    """Keep the cap heaviest components (stable: earlier index wins ties)."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if len(m) <= cap:
        return mixture_normalize(m)
    order = np.argsort(-m.log_weights, kind="stable")[:cap]
    keep = np.sort(order)
    return mixture_normalize(
        GaussianMixture(m.log_weights[keep], m.means[keep], m.covs[keep])
    )


def mixture_collapse(m: GaussianMixture) -> GaussianDensity:
    """Moment-matched single Gaussian: exact first two moments of the mixture."""
    w = np.exp(m.log_weights - logsumexp(m.log_weights))
    mean = w @ m.means
    centered = m.means - mean
    spread = np.einsum("c,ci,cj->ij", w, centered, centered.conj())
    cov = np.einsum("c,cij->ij", w, m.covs) + spread
    return GaussianDensity(mean, (cov + cov.conj().T) / 2.0)
