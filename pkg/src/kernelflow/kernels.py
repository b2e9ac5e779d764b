"""Stationary kernel functions and Gram matrix construction."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputError


class Kernel(str, Enum):
    GAUSSIAN = "gaussian"
    MATERN12 = "matern12"
    MATERN32 = "matern32"
    MATERN52 = "matern52"
    CAUCHY = "cauchy"


_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth."""

    family: Kernel
    bandwidth: float

    def __post_init__(self):
        try:
            family = Kernel(self.family)
        except ValueError:
            raise InputError(
                f"unknown kernel family {self.family!r}; "
                f"choose from {[k.value for k in Kernel]}"
            ) from None
        bw = float(self.bandwidth)
        if not np.isfinite(bw) or bw <= 0:
            raise InputError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "bandwidth", bw)

    def to_dict(self):
        return {"family": self.family.value, "bandwidth": self.bandwidth}

    @classmethod
    def from_dict(cls, d):
        return cls(Kernel(d["family"]), float(d["bandwidth"]))

    def profile(self, sqdist):
        """Kernel value as a function of squared Euclidean distance."""
        sqdist = np.asarray(sqdist, dtype=float)
        bw = self.bandwidth
        fam = self.family
        if fam is Kernel.GAUSSIAN:
            return np.exp(-sqdist / (2.0 * bw * bw))
        if fam is Kernel.CAUCHY:
            return 1.0 / (1.0 + sqdist / (bw * bw))
        r = np.sqrt(sqdist) / bw
        if fam is Kernel.MATERN12:
            return np.exp(-r)
        if fam is Kernel.MATERN32:
            return (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)
        # MATERN52
        return (1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-_SQRT5 * r)


def _as_2d(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"{name} must be a 1-D or 2-D array, got shape {X.shape}")
    if X.shape[0] < 1:
        raise InputError(f"{name} has no rows")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite values")
    return X


def _sqdist(A, B):
    # explicit differences instead of the |a|^2 + |b|^2 - 2ab expansion: no cancellation,
    # and (a-b)^2 == (b-a)^2 bitwise so the Gram matrix comes out exactly symmetric
    out = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        diff = A[:, j, None] - B[None, :, j]
        out += diff * diff
    return out


def eval_kernel(spec, x, x2):
    """Evaluate k(x, x2) for two points of equal dimension."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.ndim != 1:
        raise InputError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    diff = x - x2
    return float(spec.profile(np.dot(diff, diff)))


def kernel_matrix(spec, X, jitter=0.0):
    """Symmetric Gram matrix of the rows of X, with `jitter` added to the diagonal."""
    if jitter < 0 or not np.isfinite(jitter):
        raise InputError(f"jitter must be a nonnegative finite number, got {jitter}")
    X = _as_2d(X, "X")
    K = spec.profile(_sqdist(X, X))
    if jitter:
        K[np.diag_indices_from(K)] += jitter
    return K


def cross_kernel_matrix(spec, Xstar, X):
    """Rectangular matrix with entry (i, j) = k(Xstar[i], X[j])."""
    Xstar = _as_2d(Xstar, "Xstar")
    X = _as_2d(X, "X")
    if Xstar.shape[1] != X.shape[1]:
        raise InputError(
            f"feature dimension mismatch: Xstar has {Xstar.shape[1]}, X has {X.shape[1]}"
        )
    return spec.profile(_sqdist(Xstar, X))


def median_pairwise_distance(X):
    """Median Euclidean distance over distinct pairs of rows (bandwidth grid anchor)."""
    X = _as_2d(X, "X")
    n = X.shape[0]
    if n < 2:
        return 1.0
    d = np.sqrt(_sqdist(X, X)[np.triu_indices(n, k=1)])
    med = float(np.median(d))
    return med if med > 0 else 1.0
