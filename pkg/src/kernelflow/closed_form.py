"""Closed-form kernel ridge regression and kernel gradient flow."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .kernels import KernelSpec, cross_kernel_matrix
from .spectral import SpectralFilter, apply_filter, apply_gains, eig_sym, phi_stable

REGULARIZER_KINDS = ("ridge", "flow_time", "prox", "steps")


@dataclass(frozen=True)
class Regularizer:
    """Which regularization coordinate produced a coefficient vector.

    kind is one of "ridge" (value = lambda), "flow_time" (value = t),
    "prox" (value = lambda, norm = "l1" | "linf") or "steps" (value = k * eta).
    """

    kind: str
    value: float
    norm: str = None

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise InputError(f"unknown regularizer kind {self.kind!r}")

    def to_dict(self):
        d = {"kind": self.kind, "value": self.value}
        if self.norm is not None:
            d["norm"] = self.norm
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d["value"]), d.get("norm"))


@dataclass
class DualCoefficients:
    alpha: np.ndarray
    regularizer: Regularizer
    kernel: KernelSpec = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.ndim != 1:
            raise InputError("coefficient vector must be 1-D")
        if not np.all(np.isfinite(self.alpha)):
            raise InputError("coefficient vector contains non-finite values")

    def to_dict(self):
        return {
            "alpha": self.alpha.tolist(),
            "regularizer": self.regularizer.to_dict(),
            "kernel": None if self.kernel is None else self.kernel.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        kernel = None if d.get("kernel") is None else KernelSpec.from_dict(d["kernel"])
        return cls(
            np.asarray(d["alpha"], dtype=float),
            Regularizer.from_dict(d["regularizer"]),
            kernel,
            dict(d.get("meta", {})),
        )


@dataclass
class FitModel:
    """Dual coefficients together with the training inputs they weight."""

    dual: DualCoefficients
    training_inputs: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.training_inputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != self.dual.alpha.shape[0]:
            raise InputError(
                f"{X.shape[0]} training rows but {self.dual.alpha.shape[0]} coefficients"
            )
        self.training_inputs = X


def _validate(K, y):
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"kernel matrix must be square, got {K.shape}")
    if y.ndim != 1 or y.shape[0] != K.shape[0]:
        raise InputError(f"target length {y.shape} does not match kernel matrix {K.shape}")
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(y))):
        raise InputError("non-finite values in kernel matrix or targets")
    return K, y


def fit_krr(K, y, lam, decomp=None, kernel=None):
    """Ridge solution (K + lam I)^{-1} y, evaluated through the eigendecomposition."""
    K, y = _validate(K, y)
    filt = SpectralFilter.krr(lam)
    decomp = decomp if decomp is not None else eig_sym(K)
    alpha = apply_filter(decomp, filt, y)
    return DualCoefficients(alpha, Regularizer("ridge", float(lam)), kernel)


def fit_kgf(K, y, t, gamma=0.0, decomp=None, kernel=None):
    """Gradient-flow solution (I - exp(-t K / (1 - gamma))) K^+ y.

    Stays finite for singular K: the gain on a zero eigenvalue is t / (1 - gamma).
    """
    K, y = _validate(K, y)
    filt = SpectralFilter.kgf(t, gamma)
    decomp = decomp if decomp is not None else eig_sym(K)
    alpha = apply_filter(decomp, filt, y)
    meta = {"momentum": float(gamma)} if gamma else {}
    return DualCoefficients(alpha, Regularizer("flow_time", float(t)), kernel, meta)


def kgd_gains(s, eta, steps):
    """Gain (1 - (1 - eta s)^k) / s of k plain gradient steps from zero.

    Exact for the discrete iteration; reduces to k * eta on a zero eigenvalue.
    """
    s = np.asarray(s, dtype=float)
    steps = np.asarray(steps, dtype=float)
    x = eta * s
    below = x < 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        # 1 - (1 - x)^k via log1p/expm1 keeps full accuracy when x is tiny
        stable = -np.expm1(steps * np.log1p(-np.where(below, x, 0.0)))
        raw = 1.0 - np.power(1.0 - x, steps)
        gain = np.where(below, stable, raw) / s
    return np.where(s > 0, gain, steps * eta)


def krr_path(decomp, y, lams):
    """Ridge coefficients for every penalty in `lams`; returns an (n, m) array."""
    lams = np.asarray(lams, dtype=float)
    gains = 1.0 / (decomp.eigenvalues[None, :] + lams[:, None])
    return apply_gains(decomp, gains, y)


def kgf_path(decomp, y, times, gamma=0.0):
    """Gradient-flow coefficients for every time in `times`; returns an (n, m) array."""
    times = np.asarray(times, dtype=float) / (1.0 - gamma)
    gains = phi_stable(decomp.eigenvalues[None, :], times[:, None])
    return apply_gains(decomp, gains, y)


def kgd_path(decomp, y, eta, steps):
    """Plain gradient-descent iterates at the given step counts; returns (n, m)."""
    steps = np.asarray(steps, dtype=float)
    gains = kgd_gains(decomp.eigenvalues[None, :], eta, steps[:, None])
    return apply_gains(decomp, gains, y)


def predict(model, Xstar, spec=None):
    """Predictions k(Xstar, X_train) @ alpha."""
    spec = spec if spec is not None else model.dual.kernel
    if spec is None:
        raise InputError("no kernel available for prediction; pass one explicitly")
    Kstar = cross_kernel_matrix(spec, Xstar, model.training_inputs)
    return Kstar @ model.dual.alpha
