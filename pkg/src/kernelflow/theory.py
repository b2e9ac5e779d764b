"""Numerical certification of the gradient-flow versus ridge comparison bounds.

Everything is computed in the eigenbasis of K, so the checks involve no
matrix exponentials and no truncation error beyond the eigensolver.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .descent import MONOTONE_NORM, direction, step_size_limit
from .errors import InputError
from .kernels import Kernel, KernelSpec, kernel_matrix
from .spectral import eig_sym, phi_stable

GAP_BOUND = 0.0415
RISK_BOUND = 1.6862

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, lo, hi, xtol=1e-9):
    """Maximize a unimodal scalar function on [lo, hi] by golden-section search."""
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return float(x), float(f(x))


def gap_profile(x):
    """Squared gap (1/(1+x) - exp(-x))^2 between ridge and flow shrinkage at x = t*s."""
    return (1.0 / (1.0 + x) - np.exp(-x)) ** 2


def gap_constant():
    """Maximizer and maximum of gap_profile on [0, 50]."""
    return golden_max(lambda x: (1.0 / (1.0 + x) - np.exp(-x)) ** 2, 0.0, 50.0)


def risk_constant():
    """Maximizer and maximum of the squared variance-gain ratio ((1-e^-x)(1+x)/x)^2."""
    def ratio(x):
        return (-np.expm1(-x) * (1.0 + x) / x) ** 2
    return golden_max(ratio, 1e-6, 50.0)


def gap_over_s(s, t):
    """(1/(1+ts) - exp(-ts)) / s, finite as s -> 0 (where it tends to 0)."""
    s = np.asarray(s, dtype=float)
    x = t * s
    small = x < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (1.0 / (1.0 + x) - np.exp(-x)) / s
    series = t * x * (0.5 - x * (5.0 / 6.0) + x * x * (23.0 / 24.0) - x ** 3 * (119.0 / 120.0))
    return np.where(small, series, direct)


def _ratio(lhs, rhs):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))


@dataclass
class GapReport:
    """Squared distances between flow and ridge solutions at matched t = 1/lambda.

    `lhs`/`rhs` have one row per time: column 0 is the coefficient gap against
    GAP_BOUND * ||K^+ y||^2, column 1 the in-sample prediction gap against
    GAP_BOUND * ||y||^2.
    """

    t_grid: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    pseudo_inverse: bool


def check_gap_bounds(K, y, t_grid, decomp=None):
    decomp = decomp if decomp is not None else eig_sym(K)
    y = np.asarray(y, dtype=float)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid < 0):
        raise InputError("times must be nonnegative")
    s = decomp.eigenvalues
    c = decomp.to_eigenbasis(y)
    pos = s > 0
    ref_coef = np.sum((c[pos] / s[pos]) ** 2)
    ref_pred = float(y @ y)
    lhs = np.empty((t_grid.size, 2))
    for j, t in enumerate(t_grid):
        lhs[j, 0] = np.sum((gap_over_s(s, t) * c) ** 2)
        lhs[j, 1] = np.sum(((1.0 / (1.0 + t * s) - np.exp(-t * s)) * c) ** 2)
    rhs = np.tile([GAP_BOUND * ref_coef, GAP_BOUND * ref_pred], (t_grid.size, 1))
    ratios = _ratio(lhs, rhs)
    return GapReport(t_grid, lhs, rhs, ratios, float(ratios.max(initial=0.0)), bool(not pos.all()))


@dataclass(frozen=True)
class RiskScenario:
    """Prior on the true coefficients plus observation noise level.

    mode "fixed" uses the vector `alpha0`; "isotropic" means covariance
    `variance` * I; "feature_space" means covariance `variance` * K^{-1}.
    """

    mode: str
    noise_sd: float = 0.0
    alpha0: np.ndarray = None
    variance: float = 1.0

    def __post_init__(self):
        if self.mode not in ("fixed", "isotropic", "feature_space"):
            raise InputError(f"unknown prior mode {self.mode!r}")
        if self.mode == "fixed" and self.alpha0 is None:
            raise InputError("fixed mode needs alpha0")
        if self.noise_sd < 0 or self.variance < 0:
            raise InputError("variances must be nonnegative")

    @classmethod
    def fixed(cls, alpha0, noise_sd=0.0):
        return cls("fixed", float(noise_sd), np.asarray(alpha0, dtype=float))

    @classmethod
    def isotropic(cls, variance, noise_sd=0.0):
        return cls("isotropic", float(noise_sd), variance=float(variance))

    @classmethod
    def feature_space(cls, variance, noise_sd=0.0):
        return cls("feature_space", float(noise_sd), variance=float(variance))

    def signal_power(self, decomp):
        """Expected (U_i^T alpha0)^2 for every eigenvector."""
        s = decomp.eigenvalues
        if self.mode == "fixed":
            return decomp.to_eigenbasis(self.alpha0) ** 2
        if self.mode == "isotropic":
            return np.full_like(s, self.variance)
        with np.errstate(divide="ignore"):
            return np.where(s > 0, self.variance / np.where(s > 0, s, 1.0), 0.0)


def _risk_terms(s, t, method):
    """Per-eigenvalue (bias gain, noise gain) of the coefficient error."""
    x = t * s
    if method == "kgf":
        return np.exp(-x), phi_stable(s, t) * np.ones_like(s)
    if method == "krr":
        return 1.0 / (x + 1.0), t / (x + 1.0)
    raise InputError(f"risk is defined for 'kgf' and 'krr', got {method!r}")


def risk_closed_form(decomp, scenario, t, method, target="parameter"):
    """Expected squared error of flow (time t) or ridge (lambda = 1/t) estimates.

    target="parameter" measures ||alpha_hat - alpha0||^2; target="in_sample"
    measures ||K alpha_hat - K alpha0||^2.
    """
    if not t > 0:
        raise InputError(f"time must be positive, got {t}")
    s = decomp.eigenvalues
    bias, noise = _risk_terms(s, t, method)
    power = scenario.signal_power(decomp)
    terms = power * bias ** 2 + scenario.noise_sd ** 2 * noise ** 2
    if target == "in_sample":
        terms = terms * s * s
    elif target != "parameter":
        raise InputError(f"unknown risk target {target!r}")
    return float(np.sum(terms))


def risk_out_of_sample(decomp, scenario, t, method, kstar_rows):
    """Expected squared prediction error at test points with kernel rows `kstar_rows`.

    Returns one value per row. Random-prior modes average over alpha0.
    """
    W = np.atleast_2d(kstar_rows) @ decomp.eigenvectors  # (m, n) weights U^T k(x*)
    s = decomp.eigenvalues
    bias, noise = _risk_terms(s, t, method)
    var_part = scenario.noise_sd ** 2 * (W ** 2) @ (noise ** 2)
    if scenario.mode == "fixed":
        a = decomp.to_eigenbasis(scenario.alpha0)
        bias_part = (W @ (a * bias)) ** 2
    else:
        bias_part = (W ** 2) @ (scenario.signal_power(decomp) * bias ** 2)
    return bias_part + var_part


@dataclass
class RiskReport:
    t_grid: np.ndarray
    parameter_ratio: np.ndarray
    in_sample_ratio: np.ndarray
    out_of_sample_ratio: np.ndarray
    max_ratio: float


def check_risk_ratio(decomp, scenario, t_grid, kstar_rows=None):
    """Flow-to-ridge risk ratios over a time grid for parameter, in-sample and
    (if kernel rows are given) out-of-sample risk."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    par = np.empty(t_grid.size)
    ins = np.empty(t_grid.size)
    oos = np.zeros(t_grid.size)
    for j, t in enumerate(t_grid):
        par[j] = _ratio(risk_closed_form(decomp, scenario, t, "kgf"),
                        risk_closed_form(decomp, scenario, t, "krr"))
        ins[j] = _ratio(risk_closed_form(decomp, scenario, t, "kgf", "in_sample"),
                        risk_closed_form(decomp, scenario, t, "krr", "in_sample"))
        if kstar_rows is not None:
            oos[j] = _ratio(risk_out_of_sample(decomp, scenario, t, "kgf", kstar_rows),
                            risk_out_of_sample(decomp, scenario, t, "krr", kstar_rows)).max()
    worst = max(par.max(initial=0.0), ins.max(initial=0.0), oos.max(initial=0.0))
    return RiskReport(t_grid, par, ins, oos if kstar_rows is not None else None, float(worst))


def check_gap_expectation(decomp, scenario, t_grid, kstar_rows=None):
    """Worst ratio of expected squared coefficient (and test-prediction) gaps to
    GAP_BOUND times the matching unregularized second moment.

    Uses E[y y^T] = Sigma K^2 + noise^2 I, which is diagonal in the eigenbasis
    for the isotropic and feature-space priors.
    """
    if scenario.mode == "fixed":
        raise InputError("expectation bounds need a random prior mode")
    s = decomp.eigenvalues
    pos = s > 0
    moment = scenario.signal_power(decomp) * s * s + scenario.noise_sd ** 2
    inv_sq = np.where(pos, moment / np.where(pos, s, 1.0) ** 2, 0.0)
    U2 = decomp.eigenvectors ** 2
    ref_coord = U2 @ inv_sq
    W2 = None if kstar_rows is None else (np.atleast_2d(kstar_rows) @ decomp.eigenvectors) ** 2
    ref_test = None if W2 is None else W2 @ inv_sq
    worst = 0.0
    for t in np.atleast_1d(t_grid):
        gap_sq = np.where(pos, gap_over_s(s, t) ** 2 * moment, 0.0)
        worst = max(worst, _ratio(U2 @ gap_sq, GAP_BOUND * ref_coord).max())
        if W2 is not None:
            worst = max(worst, _ratio(W2 @ gap_sq, GAP_BOUND * ref_test).max())
    return float(worst)


class ShrinkageExtremes(NamedTuple):
    """Worst-case shrinkage factors of flow versus ridge at t = 1/lambda."""

    flow_residual: float  # exp(-t s_min)
    ridge_residual: float  # 1 / (1 + t s_min)
    ridge_fit: float  # 1 - 1 / (1 + t s_max)
    flow_fit: float  # 1 - exp(-t s_max)

    def holds(self, rtol=4 * np.finfo(float).eps):
        # both sides agree to within rounding when t * s is tiny
        return (self.flow_residual <= self.ridge_residual * (1 + rtol)
                and self.ridge_fit <= self.flow_fit * (1 + rtol))


def shrinkage_extremes(s_min, s_max, t):
    if not (0 < s_min <= s_max):
        raise InputError(f"need 0 < s_min <= s_max, got {s_min}, {s_max}")
    if t < 0:
        raise InputError(f"time must be nonnegative, got {t}")
    if np.isinf(t):
        out = ShrinkageExtremes(0.0, 0.0, 1.0, 1.0)
    else:
        out = ShrinkageExtremes(
            float(np.exp(-t * s_min)),
            float(1.0 / (1.0 + t * s_min)),
            float(t * s_max / (1.0 + t * s_max)),
            float(-np.expm1(-t * s_max)) + 0.0,
        )
    if not out.holds():
        raise ArithmeticError(f"shrinkage ordering violated: {tuple(out)}")
    return out


def diag_signflow(k_diag, y, t, space="alpha", n_test=0):
    """Closed-form sign-gradient-flow path for a diagonal kernel matrix.

    space="alpha": sign(y/k) * min(t, |y/k|) per coordinate.
    space="f": sign(y) * min(t, |y|) on the len(y) training coordinates
    followed by `n_test` exact zeros for the test coordinates.
    """
    k = np.asarray(k_diag, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(k <= 0):
        raise InputError("diagonal entries must be positive")
    if t < 0:
        raise InputError(f"time must be nonnegative, got {t}")
    if space == "alpha":
        if k.shape != y.shape:
            raise InputError("diagonal and target lengths differ")
        target = y / k
        return np.sign(target) * np.minimum(t, np.abs(target))
    if space == "f":
        train = np.sign(y) * np.minimum(t, np.abs(y))
        return np.concatenate([train, np.zeros(int(n_test))])
    raise InputError(f"unknown space {space!r}")


def linf_level_penalty(k_diag, y, level):
    """Penalty weight whose l-infinity penalized solution on a diagonal K has
    sup-norm `level`: sum_i (|y_i| - k_i * level)_+."""
    k = np.asarray(k_diag, dtype=float)
    return float(np.sum(np.maximum(np.abs(y) - k * level, 0.0)))


def f_space_sign_descent(k_diag, y, n_test, step_size, steps):
    """Discretized sign descent on the stacked (train, test) prediction vector for
    a diagonal extended kernel; test coordinates have zero gradient."""
    k = np.asarray(k_diag, dtype=float)
    f = np.zeros(y.shape[0] + int(n_test))
    for _ in range(int(steps)):
        grad = np.concatenate([k[: y.shape[0]] * (y - f[: y.shape[0]]), np.zeros(int(n_test))])
        f = f + step_size * np.sign(grad)
    return f


def feature_space_descent(Phi, y, method, step_size, steps, momentum=0.0, elastic_mix=0.9):
    """Run the descent recursion on explicit weights beta with predictions Phi beta.

    The update direction is computed from the residual y - Phi beta and mapped to
    weight space through Phi^T. Returns the predictions after every step, (steps+1, n).
    """
    beta = np.zeros(Phi.shape[1])
    vel = np.zeros(Phi.shape[0])
    preds = [np.zeros(Phi.shape[0])]
    for _ in range(int(steps)):
        vel = momentum * vel + direction(method, y - Phi @ beta, elastic_mix)
        beta = beta + step_size * (Phi.T @ vel)
        preds.append(Phi @ beta)
    return np.array(preds)


def _abs_change(r, delta):
    """|r + delta| - |r| per entry without cancelling against |r|."""
    same_side = np.sign(r) * (r + delta) >= 0
    flipped = np.abs(r + delta) - np.abs(r)
    return np.where(same_side & (r != 0), np.sign(r) * delta, flipped)


def norm_change(r, delta, norm):
    """Relative change ||r + delta|| / ||r|| - 1, computed so that tiny steps keep
    their sign instead of rounding to zero."""
    r = np.asarray(r, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if norm == 2:
        q = (2.0 * (r @ delta) + delta @ delta) / (r @ r)
        return float(q / (np.sqrt(1.0 + q) + 1.0))
    if norm == 1:
        return float(np.sum(_abs_change(r, delta)) / np.sum(np.abs(r)))
    if norm == np.inf:
        old = float(np.max(np.abs(r)))
        return float(np.max((np.abs(r) - old) + _abs_change(r, delta)) / old)
    raise InputError(f"unsupported norm {norm!r}")


def step_norm_change(K, y, alpha, method, factor=0.99, elastic_mix=0.9, s_max=None):
    """Relative change of the method's residual norm after one step at
    factor * step_size_limit from `alpha`. Returns (change, step size).

    Negative means the norm decreased; the sign stays exact even when the
    step is far below the rounding level of the norm itself.
    """
    norm = MONOTONE_NORM[method]
    r = y - K @ alpha
    eta = factor * step_size_limit(K, r, method, elastic_mix, s_max=s_max)
    if not np.any(r):
        return 0.0, eta
    delta = -eta * (K @ direction(method, r, elastic_mix))
    return norm_change(r, delta, norm), eta


@dataclass
class Instance:
    X: np.ndarray
    bandwidth: float
    y: np.ndarray
    K: np.ndarray

    def to_dict(self):
        return {"X": self.X.tolist(), "bandwidth": self.bandwidth, "y": self.y.tolist()}


def random_instance(rng, n_max=40, n_min=5, dims=(1, 5), jitter=1e-8):
    """Gaussian-kernel test problem: uniform inputs, random bandwidth, normal targets."""
    n = int(rng.integers(n_min, n_max + 1))
    p = int(rng.choice(dims))
    X = rng.uniform(-3.0, 3.0, size=(n, p))
    bandwidth = float(np.exp(rng.uniform(np.log(0.3), np.log(3.0)))) * np.sqrt(p)
    K = kernel_matrix(KernelSpec(Kernel.GAUSSIAN, bandwidth), X, jitter=jitter)
    y = rng.standard_normal(n)
    return Instance(X, bandwidth, y, K)
