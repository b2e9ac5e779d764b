"""Iterative solvers on the residual y - K alpha: plain, sign, coordinate and elastic descent."""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._core_py import CONVERGED, DIVERGED
from .errors import DivergenceError, InputError

METHODS = ("kgd", "ksgd", "kcd", "kegd")
_CODES = {m: i for i, m in enumerate(METHODS)}

# residual norm that each method's step-size rule is designed to decrease
MONOTONE_NORM = {"kgd": 2, "ksgd": 1, "kcd": np.inf}


@dataclass(frozen=True)
class DescentConfig:
    """Settings for run_descent.

    momentum=None picks the per-method default (0.5 for kegd, 0 otherwise).
    checkpoint_times are effective times k * step_size that get an exact
    checkpoint at step round(t / step_size) in addition to the stride.
    """

    method: str
    step_size: float = 1e-4
    momentum: float = None
    elastic_mix: float = 0.9
    max_steps: int = 100_000
    checkpoint_stride: int = 100
    checkpoint_times: tuple = ()
    stop_tol: float = 1e-10
    diverge_factor: float = 1e3
    resync_every: int = 4096

    def __post_init__(self):
        if self.method not in _CODES:
            raise InputError(f"unknown descent method {self.method!r}; choose from {METHODS}")
        if not (np.isfinite(self.step_size) and self.step_size > 0):
            raise InputError(f"step size must be positive, got {self.step_size}")
        if self.momentum is None:
            object.__setattr__(self, "momentum", 0.5 if self.method == "kegd" else 0.0)
        if not (0.0 <= self.momentum < 1.0):
            raise InputError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not (0.0 <= self.elastic_mix <= 1.0):
            raise InputError(f"elastic mix must lie in [0, 1], got {self.elastic_mix}")
        if int(self.max_steps) < 1 or int(self.checkpoint_stride) < 1:
            raise InputError("max_steps and checkpoint_stride must be positive integers")
        object.__setattr__(self, "max_steps", int(self.max_steps))
        object.__setattr__(self, "checkpoint_stride", int(self.checkpoint_stride))
        object.__setattr__(self, "checkpoint_times", tuple(float(t) for t in self.checkpoint_times))

    def record_steps(self):
        stride = np.arange(self.checkpoint_stride, self.max_steps + 1, self.checkpoint_stride)
        forced = np.rint(np.asarray(self.checkpoint_times) / self.step_size).astype(np.int64)
        forced = forced[(forced >= 1) & (forced <= self.max_steps)]
        return np.unique(np.concatenate([stride.astype(np.int64), forced]))


def residual_norms(r):
    a = np.abs(r)
    return np.array([a.sum(), np.sqrt(r @ r), a.max() if a.size else 0.0])


@dataclass
class SolutionPath:
    """Checkpointed iterates of a descent run; times are step * step_size."""

    steps: np.ndarray
    times: np.ndarray
    alphas: np.ndarray  # (m, n), row j is the iterate at times[j]
    residual_norms: np.ndarray  # (m, 3): l1, l2, linf of y - K alpha
    method: str = None
    step_size: float = None
    converged: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.shape[0]

    @property
    def final_alpha(self):
        return self.alphas[-1]

    @property
    def final_time(self):
        return float(self.times[-1])

    def at(self, t):
        """Iterate at effective time t; linear interpolation between checkpoints.

        Times beyond the last checkpoint return the last iterate.
        """
        if t <= 0:
            return self.alphas[0].copy()
        j = int(np.searchsorted(self.times, t, side="left"))
        if j >= len(self.times):
            return self.alphas[-1].copy()
        if self.times[j] == t:
            return self.alphas[j].copy()
        t0, t1 = self.times[j - 1], self.times[j]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.alphas[j - 1] + w * self.alphas[j]

    def nnz(self, threshold=1e-10):
        return (np.abs(self.alphas) > threshold).sum(axis=1)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "time", "l1_residual", "l2_residual", "linf_residual", "nnz"])
            for k, t, norms, nz in zip(self.steps, self.times, self.residual_norms, self.nnz()):
                w.writerow([int(k), repr(float(t)), *(repr(float(x)) for x in norms), int(nz)])


def _prepare(K, y):
    K = np.ascontiguousarray(K, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or y.shape != (K.shape[0],):
        raise InputError(f"incompatible shapes: K {K.shape}, y {y.shape}")
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(y))):
        raise InputError("non-finite values in kernel matrix or targets")
    return K, y


class DescentRunner:
    """Resumable descent from alpha = 0; advance(step) continues where the last call stopped."""

    def __init__(self, K, y, config):
        self.K, self.y = _prepare(K, y)
        self.config = config
        self.y_norms = residual_norms(self.y)
        self.stop_tol = config.stop_tol * (1.0 + self.y_norms[2])
        self.limit = config.diverge_factor * max(self.y_norms[1], np.finfo(float).tiny)
        self.state = _backend.core.new_state(self.y)
        self.step = 0
        self.converged = False

    @property
    def alpha(self):
        return self.state[0].copy()

    @property
    def residual(self):
        return self.state[1].copy()

    def advance(self, to_step, record_steps=()):
        """Run until step `to_step` (or convergence); returns snapshots at `record_steps`.

        Raises DivergenceError if the residual norm passes the guard.
        """
        cfg = self.config
        record = np.asarray(record_steps, dtype=np.int64)
        if self.converged or to_step <= self.step:
            empty = np.zeros((0, self.y.shape[0]))
            return empty, np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
        snap_a, snap_n, snap_k, _, norms, k, status = _backend.core.descent_run(
            self.K, self.y, _CODES[cfg.method], cfg.step_size, cfg.momentum, cfg.elastic_mix,
            int(to_step), record, self.stop_tol, self.limit, cfg.resync_every,
            self.state, self.step,
        )
        self.step = k
        self.last_norms = norms
        if status == DIVERGED:
            raise DivergenceError(k, float(norms[1]), self.limit)
        self.converged = status == CONVERGED
        return snap_a, snap_n, snap_k


def run_descent(K, y, config):
    """Run the configured method from alpha = 0 and return its checkpointed path.

    Raises DivergenceError when ||y - K alpha||_2 exceeds diverge_factor * ||y||_2.
    """
    cfg = config
    runner = DescentRunner(K, y, cfg)
    snap_a, snap_n, snap_k = runner.advance(cfg.max_steps, cfg.record_steps())
    k = runner.step
    n = runner.y.shape[0]
    steps = np.concatenate([[0], snap_k]).astype(np.int64)
    alphas = np.vstack([np.zeros((1, n)), snap_a])
    norms_all = np.vstack([runner.y_norms, snap_n])
    if steps[-1] != k:
        steps = np.append(steps, k)
        alphas = np.vstack([alphas, runner.alpha])
        norms_all = np.vstack([norms_all, runner.last_norms])
    return SolutionPath(
        steps=steps,
        times=steps * cfg.step_size,
        alphas=alphas,
        residual_norms=norms_all,
        method=cfg.method,
        step_size=cfg.step_size,
        converged=runner.converged,
        meta={"momentum": cfg.momentum, "elastic_mix": cfg.elastic_mix, "steps_run": int(k)},
    )


def direction(method, residual, elastic_mix=0.9):
    """Update direction applied to alpha for the given residual (before scaling by the step)."""
    r = np.asarray(residual, dtype=float)
    if method == "kgd":
        return r.copy()
    if method == "ksgd":
        return np.sign(r)
    d = np.zeros_like(r)
    a = np.abs(r)
    if method == "kcd":
        m = int(np.argmax(a))
        d[m] = np.sign(r[m])
        return d
    if method == "kegd":
        active = a >= elastic_mix * a.max()
        d[active] = np.sign(r[active])
        return d
    raise InputError(f"unknown descent method {method!r}")


def descent_step(K, y, alpha, method, step_size, elastic_mix=0.9):
    """One momentum-free step from an arbitrary iterate; returns the new iterate."""
    r = y - K @ alpha
    return alpha + step_size * direction(method, r, elastic_mix)


def step_size_limit(K, residual, method, elastic_mix=0.9, s_max=None):
    """Largest step for which the method's residual norm is claimed to decrease.

    kgd: 2 / s_max(K). ksgd and kcd: min_i |r_i|. kegd: min of |r_i| over the
    coordinates the elastic rule moves. Returns 0 for a zero residual.
    """
    r = np.asarray(residual, dtype=float)
    if not np.all(np.isfinite(r)):
        raise InputError("residual contains non-finite values")
    if method == "kgd":
        if s_max is None:
            s_max = float(np.linalg.eigvalsh(np.asarray(K, dtype=float))[-1])
        return 2.0 / s_max
    a = np.abs(r)
    if a.size == 0 or a.max() == 0:
        return 0.0
    if method in ("ksgd", "kcd"):
        return float(a.min())
    if method == "kegd":
        return float(a[a >= elastic_mix * a.max()].min())
    raise InputError(f"unknown descent method {method!r}")
