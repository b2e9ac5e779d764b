"""Symmetric eigendecomposition and spectral filters built on it."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NotPSDError

log = logging.getLogger(__name__)

CLAMP_TOL = 1e-8
PSD_TOL = 1e-6
SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class SpectralDecomposition:
    """K = U diag(s) U^T with eigenvalues sorted in descending order."""

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        self.eigenvectors.setflags(write=False)
        self.eigenvalues.setflags(write=False)

    @property
    def n(self):
        return self.eigenvalues.shape[0]

    @property
    def s_max(self):
        return float(self.eigenvalues[0])

    @property
    def s_min(self):
        return float(self.eigenvalues[-1])

    def to_eigenbasis(self, v):
        return self.eigenvectors.T @ v

    def from_eigenbasis(self, c):
        return self.eigenvectors @ c

    def reconstruct(self):
        U, s = self.eigenvectors, self.eigenvalues
        return (U * s) @ U.T

    def feature_map(self):
        """Explicit features Phi = U diag(sqrt(s)) with Phi Phi^T = K."""
        return self.eigenvectors * np.sqrt(self.eigenvalues)


def eig_sym(K):
    """Eigendecomposition of a symmetric PSD matrix, eigenvalues descending.

    Eigenvalues in [-1e-6, 0) are treated as round-off and set to 0; anything
    more negative raises NotPSDError.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"expected a square matrix, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise InputError("matrix contains non-finite entries")
    s, U = np.linalg.eigh(K)
    s = s[::-1].copy()
    U = U[:, ::-1].copy()
    if s.size and s[-1] < -PSD_TOL:
        raise NotPSDError(f"matrix is not PSD: smallest eigenvalue {s[-1]:.3e}")
    neg = s < 0
    if np.any(s < -CLAMP_TOL):
        log.warning("clamping eigenvalues down to %.3e to zero", s[-1])
    s[neg] = 0.0
    return SpectralDecomposition(U, s)


def phi_stable(s, t):
    """(1 - exp(-t s)) / s, with its series expansion when t*s is tiny.

    Vectorized over `s` and `t`; equals t in the s -> 0 limit.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    x = t * s
    small = x < SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = -np.expm1(-x) / s
    series = t * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0)
    out = np.where(small, series, direct)
    return out if out.ndim else float(out)


def krr_rewritten_gain(s, lam):
    """(1 - 1/(1 + s/lam)) / s, the ridge gain written as a resolvent difference.

    Algebraically equal to 1/(s + lam); the s -> 0 branch uses the series in
    u = s/lam so that the expression stays accurate on near-null eigenvalues.
    """
    s = np.asarray(s, dtype=float)
    u = s / lam
    small = u < SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (1.0 - 1.0 / (1.0 + u)) / s
    # 1 - 1/(1+u) = u - u^2 + u^3 - u^4 + ...
    series = (1.0 - u + u * u - u * u * u) / lam
    out = np.where(small, series, direct)
    return out if out.ndim else float(out)


def _check_gamma(gamma):
    if not (0.0 <= gamma < 1.0):
        raise InputError(f"momentum must lie in [0, 1), got {gamma}")


@dataclass(frozen=True)
class SpectralFilter:
    """A function of the eigenvalues; build with the classmethod constructors."""

    kind: str
    lam: float = None
    t: float = None
    gamma: float = 0.0

    @classmethod
    def krr(cls, lam):
        if not (np.isfinite(lam) and lam > 0):
            raise InputError(f"ridge penalty must be positive, got {lam}")
        return cls("krr", lam=float(lam))

    @classmethod
    def krr_residual(cls, lam):
        if not (np.isfinite(lam) and lam > 0):
            raise InputError(f"ridge penalty must be positive, got {lam}")
        return cls("krr_residual", lam=float(lam))

    @classmethod
    def kgf(cls, t, gamma=0.0):
        if not (t >= 0):
            raise InputError(f"flow time must be nonnegative, got {t}")
        _check_gamma(gamma)
        return cls("kgf", t=float(t), gamma=float(gamma))

    @classmethod
    def kgf_residual(cls, t, gamma=0.0):
        if not (t >= 0):
            raise InputError(f"flow time must be nonnegative, got {t}")
        _check_gamma(gamma)
        return cls("kgf_residual", t=float(t), gamma=float(gamma))

    def gains(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "krr":
            return 1.0 / (s + self.lam)
        if self.kind == "krr_residual":
            return self.lam / (s + self.lam)
        t_eff = self.t / (1.0 - self.gamma)
        if self.kind == "kgf":
            return phi_stable(s, t_eff) * np.ones_like(s)
        if self.kind == "kgf_residual":
            return np.exp(-t_eff * s)
        raise InputError(f"unknown filter kind {self.kind!r}")


def apply_filter(decomp, filt, y):
    """U diag(g(s)) U^T y for the filter's gain function g."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != decomp.n:
        raise InputError(f"vector length {y.shape[0]} does not match matrix size {decomp.n}")
    c = decomp.to_eigenbasis(y)
    g = filt.gains(decomp.eigenvalues)
    if y.ndim == 2:
        g = g[:, None]
    return decomp.from_eigenbasis(g * c)


def apply_gains(decomp, gains, y):
    """Batch filter: `gains` has shape (m, n); returns an (n, m) array of filtered vectors."""
    c = decomp.to_eigenbasis(np.asarray(y, dtype=float))
    return decomp.eigenvectors @ (np.asarray(gains).T * c[:, None])
