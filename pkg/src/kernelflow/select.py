"""Cross-validated hyperparameter selection, early stopping, and evaluation metrics."""

import csv
from dataclasses import dataclass

import numpy as np

from .data import make_stream
from .errors import InputError
from .kernels import median_pairwise_distance

LAMBDA_BOUNDS = (1e-6, 1e2)
TIME_BOUNDS = (1e-2, 1e6)
BANDWIDTH_FACTORS = (1e-1, 1e2)


@dataclass(frozen=True)
class GridSpec:
    bandwidths: np.ndarray
    regs: np.ndarray
    folds: int = 10

    def __post_init__(self):
        for name in ("bandwidths", "regs"):
            g = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if g.size == 0 or np.any(g <= 0) or not np.all(np.isfinite(g)):
                raise InputError(f"{name} must be a nonempty grid of positive numbers")
            if np.any(np.diff(g) <= 0):
                raise InputError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, g)
        if int(self.folds) < 2:
            raise InputError(f"need at least 2 folds, got {self.folds}")

    @classmethod
    def default(cls, X, reg_kind, size=20, folds=10, bandwidth_factors=BANDWIDTH_FACTORS,
                reg_bounds=None, reg_size=None):
        """Log-spaced grids; bandwidths scale with the median pairwise distance of X."""
        med = median_pairwise_distance(X)
        if reg_bounds is None:
            reg_bounds = LAMBDA_BOUNDS if reg_kind == "lambda" else TIME_BOUNDS
        bws = med * np.geomspace(*bandwidth_factors, size)
        regs = np.geomspace(*reg_bounds, reg_size or size)
        return cls(bws, regs, folds)

    def to_dict(self):
        return {"bandwidths": self.bandwidths.tolist(), "regs": self.regs.tolist(),
                "folds": int(self.folds)}


@dataclass
class CVResult:
    bandwidth: float
    reg: float
    score: float
    mean_mse: np.ndarray  # (n_bandwidths, n_regs)
    sd_mse: np.ndarray
    grid: GridSpec

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bandwidth", "reg", "mean_mse", "sd_mse"])
            for i, b in enumerate(self.grid.bandwidths):
                for j, r in enumerate(self.grid.regs):
                    w.writerow([repr(float(b)), repr(float(r)),
                                repr(float(self.mean_mse[i, j])), repr(float(self.sd_mse[i, j]))])


def fold_indices(n, folds, seed):
    if folds > n:
        raise InputError(f"{folds} folds need at least {folds} observations, have {n}")
    perm = make_stream(seed, 4).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def select_cell(mean_mse, bandwidths, regs, stronger_first):
    """Argmin of the score table; ties go to stronger regularization, then larger bandwidth.

    `stronger_first` is -1 when larger reg values regularize more (lambda), +1
    when smaller ones do (time). The result does not depend on grid order.
    """
    best = np.nanmin(mean_mse)
    cells = np.argwhere(mean_mse == best)
    key = [(stronger_first * regs[j], -bandwidths[i]) for i, j in cells]
    i, j = cells[min(range(len(cells)), key=key.__getitem__)]
    return int(i), int(j)


def kfold_cv(data, estimator, grid, seed):
    """Mean validation MSE over seeded folds for each (bandwidth, reg) cell."""
    n = len(data)
    parts = fold_indices(n, grid.folds, seed)
    if any(p.size < 1 for p in parts):
        raise InputError("a fold has no observations")
    nb, nr = grid.bandwidths.size, grid.regs.size
    scores = np.zeros((grid.folds, nb, nr))
    all_idx = np.arange(n)
    for f, val in enumerate(parts):
        tr = np.setdiff1d(all_idx, val, assume_unique=True)
        for i, bw in enumerate(grid.bandwidths):
            scores[f, i] = estimator.validation_mse(
                data.X[tr], data.y[tr], data.X[val], data.y[val], bw, grid.regs)
    mean = scores.mean(axis=0)
    sd = scores.std(axis=0, ddof=1) if grid.folds > 1 else np.zeros_like(mean)
    i, j = select_cell(mean, grid.bandwidths, grid.regs, estimator.stronger_first)
    return CVResult(float(grid.bandwidths[i]), float(grid.regs[j]), float(mean[i, j]),
                    mean, sd, grid)


def early_stop_select(path, K_val_rows, y_val):
    """Checkpoint of `path` with the smallest validation MSE; earliest on ties."""
    if len(path) == 0:
        raise InputError("empty solution path")
    preds = path.alphas @ np.asarray(K_val_rows, dtype=float).T
    mse = np.mean((preds - np.asarray(y_val, dtype=float)) ** 2, axis=1)
    j = int(np.argmin(mse))
    return float(path.times[j]), path.alphas[j].copy()


def r2(y_true, y_pred):
    """Coefficient of determination 1 - SS_res / SS_tot."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise InputError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        raise InputError("r2 is undefined for a constant target")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / ss_tot)


def sparsity(alpha, threshold=1e-10):
    """Fraction of coefficients with magnitude above `threshold`."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(alpha) > threshold) / alpha.size)
