"""Explicit l1 / l-infinity penalized kernel regression by proximal gradient descent."""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.exceptions import ConvergenceWarning as SklearnConvergenceWarning
from sklearn.linear_model import lars_path_gram

from . import _backend
from ._core_py import L1, LINF
from .closed_form import DualCoefficients, Regularizer
from .errors import ConvergenceWarning, InputError
from .spectral import eig_sym

PENALTIES = ("l1", "linf")
_CODES = {"l1": L1, "linf": LINF}


def soft_threshold(v, tau):
    """Elementwise sign(v) * max(|v| - tau, 0); the prox of tau * ||.||_1."""
    if tau < 0:
        raise InputError(f"threshold must be nonnegative, got {tau}")
    return _backend.core.soft_threshold(np.atleast_1d(np.asarray(v, dtype=float)), float(tau))


def project_l1_ball(v, radius):
    """Euclidean projection onto {u : ||u||_1 <= radius}.

    The threshold is found exactly by sorting magnitudes and scanning the
    piecewise-linear equation ||soft_threshold(v, tau)||_1 = radius.
    """
    if not radius > 0:
        raise InputError(f"radius must be positive, got {radius}")
    return _backend.core.project_l1_ball(np.atleast_1d(np.asarray(v, dtype=float)), float(radius))


def prox_linf(v, tau):
    """Prox of tau * ||.||_inf, via the Moreau identity v - P_{l1 ball of radius tau}(v)."""
    if tau < 0:
        raise InputError(f"threshold must be nonnegative, got {tau}")
    return _backend.core.prox_linf(np.atleast_1d(np.asarray(v, dtype=float)), float(tau))


def penalty_value(alpha, penalty):
    a = np.abs(alpha)
    return float(a.sum()) if penalty == "l1" else float(a.max(initial=0.0))


@dataclass(frozen=True)
class ProxConfig:
    """Settings for fit_prox; step_size=None means 1 / s_max(K)."""

    penalty: str
    lam: float
    step_size: float = None
    max_iter: int = 1_000_000
    tol: float = 1e-8

    def __post_init__(self):
        if self.penalty not in _CODES:
            raise InputError(f"unknown penalty {self.penalty!r}; choose from {PENALTIES}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InputError(f"penalty weight must be positive, got {self.lam}")
        if self.step_size is not None and not (self.step_size > 0):
            raise InputError(f"step size must be positive, got {self.step_size}")
        if not self.tol > 0 or int(self.max_iter) < 1:
            raise InputError("tol must be positive and max_iter at least 1")


def objective(decomp, y, alpha, penalty, lam, floor=1e-12):
    """0.5 ||y - K alpha||^2 in the K^{-1} norm plus lam * penalty, in the eigenbasis.

    The y-only constant uses a pseudo-inverse: eigenvalues at or below `floor`
    (relative to s_max) are left out.
    """
    s = decomp.eigenvalues
    c = decomp.to_eigenbasis(y)
    a = decomp.to_eigenbasis(alpha)
    keep = s > floor * max(s[0], 1.0)
    const = 0.5 * np.sum(c[keep] ** 2 / s[keep])
    smooth = 0.5 * np.sum(s * a * a) - c @ a + const
    return float(smooth + lam * penalty_value(alpha, penalty))


def fit_prox(K, y, config, alpha0=None, s_max=None, kernel=None):
    """Proximal gradient descent on the penalized equivalent objective.

    The smooth part's gradient is K alpha - y. Iterates
    alpha <- prox(alpha - eta (K alpha - y), eta * lam) until the largest
    coordinate change is at most tol * eta. Hitting max_iter first emits a
    ConvergenceWarning and sets meta["converged"] = False.
    """
    K = np.ascontiguousarray(K, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or y.shape != (K.shape[0],):
        raise InputError(f"incompatible shapes: K {K.shape}, y {y.shape}")
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(y))):
        raise InputError("non-finite values in kernel matrix or targets")
    eta = config.step_size
    if eta is None:
        if s_max is None:
            s_max = eig_sym(K).s_max
        eta = 1.0 / s_max
    start = np.zeros_like(y) if alpha0 is None else np.asarray(alpha0, dtype=float)
    alpha, iters, converged = _backend.core.prox_run(
        K, y, _CODES[config.penalty], float(config.lam), float(eta), start,
        int(config.max_iter), float(config.tol),
    )
    if not converged:
        warnings.warn(
            f"proximal gradient stopped after {iters} iterations without reaching "
            f"tol={config.tol:g}", ConvergenceWarning, stacklevel=2,
        )
    return DualCoefficients(
        alpha,
        Regularizer("prox", float(config.lam), config.penalty),
        kernel,
        {"converged": bool(converged), "iterations": int(iters), "step_size": float(eta)},
    )


def l1_kkt_violation(K, y, alpha, lam):
    """Largest violation of the optimality conditions of the l1 problem:
    residual equal to lam * sign(alpha) on the support, at most lam elsewhere."""
    g = np.asarray(y, dtype=float) - np.asarray(K, dtype=float) @ alpha
    on = alpha != 0
    viol = np.where(on, np.abs(g - lam * np.sign(alpha)), np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max(initial=0.0))


def l1_homotopy_path(K, y, lams, max_iter=100_000, tol=1e-8, kkt_tol=1e-7):
    """Exact l1-penalized solutions on a penalty grid from the piecewise-linear
    homotopy (LARS-lasso) path of 1/2 a^T K a - y^T a + lam ||a||_1.

    Columns whose optimality violation exceeds kkt_tol * (1 + max|y|), which
    happens on exact ties and near-singular K, are polished by fit_prox
    started from the homotopy solution. Returns an (n, m) array whose columns
    follow the order of `lams`.
    """
    K = np.ascontiguousarray(K, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    lams = np.asarray(lams, dtype=float)
    if np.any(lams <= 0):
        raise InputError("penalties must be positive")
    with warnings.catch_warnings():
        # degenerate active sets on near-singular K are handled by the solver
        warnings.simplefilter("ignore", SklearnConvergenceWarning)
        knots, _, coefs = lars_path_gram(Xy=y, Gram=K, n_samples=1, method="lasso",
                                         alpha_min=float(lams.min()))
    # the path is linear in lam between knots; knots are in decreasing order
    out = np.array([np.interp(-lams, -knots, row) for row in coefs])
    limit = kkt_tol * (1.0 + np.abs(y).max(initial=0.0))
    s_max = None
    for j, lam in enumerate(lams):
        if l1_kkt_violation(K, y, out[:, j], lam) > limit:
            if s_max is None:
                s_max = eig_sym(K).s_max
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                cfg = ProxConfig("l1", float(lam), None, max_iter, tol)
                out[:, j] = fit_prox(K, y, cfg, alpha0=out[:, j], s_max=s_max).alpha
    return out


def prox_path(K, y, penalty, lams, step_size=None, max_iter=1_000_000, tol=1e-8,
              s_max=None, solver="auto"):
    """Solutions over a penalty grid.

    solver="prox" runs fit_prox warm-started from large to small penalties;
    "homotopy" (l1 only) reads the exact solutions off l1_homotopy_path;
    "auto" uses the homotopy for l1 and proximal gradient for linf.
    Returns an (n, m) array whose columns follow the order of `lams`.
    """
    lams = np.asarray(lams, dtype=float)
    if solver == "auto":
        solver = "homotopy" if penalty == "l1" else "prox"
    if solver == "homotopy":
        if penalty != "l1":
            raise InputError("the homotopy solver handles the l1 penalty only")
        return l1_homotopy_path(K, y, lams, max_iter, tol)
    if solver != "prox":
        raise InputError(f"unknown solver {solver!r}")
    if s_max is None and step_size is None:
        s_max = eig_sym(K).s_max
    out = np.zeros((np.asarray(y).shape[0], lams.shape[0]))
    alpha = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for j in np.argsort(-lams, kind="stable"):
            cfg = ProxConfig(penalty, float(lams[j]), step_size, max_iter, tol)
            alpha = fit_prox(K, y, cfg, alpha0=alpha, s_max=s_max).alpha
            out[:, j] = alpha
    return out
