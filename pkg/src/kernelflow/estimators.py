"""Uniform fit / validation interface over every regression method in the package."""

import warnings
from dataclasses import dataclass

import numpy as np

from .closed_form import (DualCoefficients, FitModel, Regularizer, fit_kgf, fit_krr,
                          kgd_path, kgf_path, krr_path)
from .descent import DescentConfig, DescentRunner
from .errors import ConvergenceWarning, InputError
from .kernels import Kernel, KernelSpec, cross_kernel_matrix, kernel_matrix
from .prox import ProxConfig, fit_prox, l1_homotopy_path, prox_path
from .spectral import eig_sym

PENALIZED = ("krr", "kl1r", "klinfr")
EARLY_STOPPED = ("kgf", "kgd", "ksgd", "kcd", "kegd")
METHODS = PENALIZED + EARLY_STOPPED
_PENALTY = {"kl1r": "l1", "klinfr": "linf"}


@dataclass(frozen=True)
class Estimator:
    """A regression method plus the solver settings shared by all of its fits.

    For penalized methods the regularization coordinate is lambda; for the
    gradient-based ones it is the (effective) training time t.
    `patience` stops a validation scan once t >= patience * best t without
    improvement; `max_time` caps the scanned training time.
    """

    method: str
    kernel: Kernel = Kernel.GAUSSIAN
    step_size: float = 1e-4
    momentum: float = None
    elastic_mix: float = 0.9
    jitter: float = 0.0
    prox_max_iter: int = 100_000
    prox_tol: float = 1e-8
    patience: float = 10.0
    max_time: float = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}; choose from {METHODS}")
        object.__setattr__(self, "kernel", Kernel(self.kernel))

    @property
    def reg_kind(self):
        return "lambda" if self.method in PENALIZED else "time"

    @property
    def stronger_first(self):
        """Sort key sign: regs ordered from strongest to weakest regularization."""
        return -1.0 if self.reg_kind == "lambda" else 1.0

    def descent_config(self, max_steps=1):
        return DescentConfig(
            self.method, self.step_size, self.momentum, self.elastic_mix,
            max_steps=max(int(max_steps), 1),
        )

    def _spectral_kgd(self, decomp):
        # with eta * s_max <= 2 no residual component grows, so the divergence
        # guard of the iteration cannot trigger and the closed form is exact
        return (self.method == "kgd" and not self.descent_config().momentum
                and self.step_size * decomp.s_max <= 2.0)

    def steps_for(self, t):
        return max(int(np.rint(t / self.step_size)), 0)

    # fitting ----------------------------------------------------------------

    def fit_dual(self, K, y, reg, spec=None):
        m = self.method
        if m == "krr":
            return fit_krr(K, y, reg, kernel=spec)
        if m == "kgf":
            return fit_kgf(K, y, reg, self.momentum or 0.0, kernel=spec)
        if m in _PENALTY:
            cfg = ProxConfig(_PENALTY[m], reg, None, self.prox_max_iter, self.prox_tol)
            # the exact l1 solution makes the proximal iteration a fixed-point check
            start = l1_homotopy_path(K, y, [reg])[:, 0] if m == "kl1r" else None
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                return fit_prox(K, y, cfg, alpha0=start, kernel=spec)
        steps = self.steps_for(reg)
        decomp = eig_sym(K) if m == "kgd" else None
        if decomp is not None and self._spectral_kgd(decomp):
            alpha = kgd_path(decomp, y, self.step_size, [steps])[:, 0]
        else:
            runner = DescentRunner(K, y, self.descent_config(steps))
            runner.advance(steps)
            alpha = runner.alpha
        meta = {"step_size": self.step_size, "steps": steps}
        return DualCoefficients(alpha, Regularizer("steps", steps * self.step_size), spec, meta)

    def fit(self, X, y, bandwidth, reg):
        spec = KernelSpec(self.kernel, bandwidth)
        K = kernel_matrix(spec, X, self.jitter)
        return FitModel(self.fit_dual(K, y, reg, spec), X)

    # validation -------------------------------------------------------------

    def validation_mse(self, X_tr, y_tr, X_val, y_val, bandwidth, regs):
        """Validation MSE of fits on (X_tr, y_tr) for every value in `regs`."""
        spec = KernelSpec(self.kernel, bandwidth)
        K = kernel_matrix(spec, X_tr, self.jitter)
        Kv = cross_kernel_matrix(spec, X_val, X_tr)
        regs = np.asarray(regs, dtype=float)
        m = self.method
        decomp = eig_sym(K) if m in ("krr", "kgf", "kgd") else None
        if m in ("krr", "kgf") or (m == "kgd" and self._spectral_kgd(decomp)):
            if m == "krr":
                alphas = krr_path(decomp, y_tr, regs)
            elif m == "kgf":
                alphas = kgf_path(decomp, y_tr, regs, self.momentum or 0.0)
            else:
                steps = np.array([self.steps_for(t) for t in regs])
                alphas = kgd_path(decomp, y_tr, self.step_size, steps)
            return np.mean((Kv @ alphas - y_val[:, None]) ** 2, axis=0)
        if m in _PENALTY:
            alphas = prox_path(K, y_tr, _PENALTY[m], regs, None, self.prox_max_iter,
                               self.prox_tol)
            return np.mean((Kv @ alphas - y_val[:, None]) ** 2, axis=0)
        return self._scan_path(K, y_tr, Kv, y_val, regs)

    def _scan_path(self, K, y, Kv, y_val, times):
        order = np.argsort(times, kind="stable")
        mse = np.empty(times.shape[0])
        runner = DescentRunner(K, y, self.descent_config(1))
        best_t, best = 0.0, np.mean(y_val ** 2)
        last = best
        done = 0
        for j in order:
            t = times[j]
            if self.max_time is not None and t > self.max_time:
                break
            if t > 0 and t >= self.patience * best_t and last >= best and best_t > 0:
                break
            runner.advance(self.steps_for(t))
            last = float(np.mean((Kv @ runner.state[0] - y_val) ** 2))
            mse[j] = last
            done += 1
            if last < best:
                best, best_t = last, t
        mse[order[done:]] = last
        return mse
