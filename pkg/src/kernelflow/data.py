"""Synthetic generators, outlier injection, CSV loading, standardization and splits.

All randomness comes from numpy's Philox counter-based generator seeded through
SeedSequence, so independent sub-streams can be spawned deterministically.
"""

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, ParseError

log = logging.getLogger(__name__)

U_CLAMP = 1e-12
X_RANGE = (-10.0, 10.0)
SIN_NOISE_SCALE = 0.1
PEAK_NOISE_SD = 0.1
PEAK_WIDTH = 5.0


def make_stream(seed, *path):
    """Philox generator for `seed`; extra integers select an independent sub-stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)
    signal: object = None  # noiseless regression function, for synthetic data

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float)
        if X.shape[0] != y.shape[0]:
            raise InputError(f"{X.shape[0]} rows of inputs but {y.shape[0]} targets")
        self.X, self.y = X, y

    def __len__(self):
        return self.y.shape[0]

    def subset(self, idx):
        return replace(self, X=self.X[idx], y=self.y[idx], meta=dict(self.meta))


def cauchy_quantile(u, scale):
    """Cauchy(0, scale) quantile at u, with u clamped away from 0 and 1."""
    u = np.clip(u, U_CLAMP, 1.0 - U_CLAMP)
    return scale * np.tan(np.pi * (u - 0.5))


def sample_cauchy(stream, scale, size=None):
    """Cauchy(0, scale) draws by inverse transform of uniform variates."""
    if not scale > 0:
        raise InputError(f"Cauchy scale must be positive, got {scale}")
    return cauchy_quantile(stream.random(size), scale)


def sin_signal(x):
    return np.sin(np.pi * np.asarray(x, dtype=float) / 2.0)


def peak_signal(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-PEAK_WIDTH * x * x)


def _check_n(n):
    if int(n) < 1:
        raise InputError(f"need at least one observation, got n={n}")
    return int(n)


def _signal_1d(fn):
    def signal(X):
        X = np.asarray(X, dtype=float)
        return fn(X[:, 0] if X.ndim == 2 else X)
    return signal


def gen_sin_cauchy(n, seed):
    """x ~ U(-10, 10), y = sin(pi x / 2) + Cauchy(0, 0.1)."""
    n = _check_n(n)
    rng = make_stream(seed)
    x = rng.uniform(*X_RANGE, size=n)
    y = sin_signal(x) + sample_cauchy(rng, SIN_NOISE_SCALE, n)
    return Dataset(x[:, None], y, {"source": "sin", "seed": int(seed)}, _signal_1d(sin_signal))


def gen_gauss_peak(n, seed):
    """x ~ U(-10, 10), y = exp(-5 x^2) + N(0, 0.1^2)."""
    n = _check_n(n)
    rng = make_stream(seed)
    x = rng.uniform(*X_RANGE, size=n)
    y = peak_signal(x) + PEAK_NOISE_SD * rng.standard_normal(n)
    return Dataset(x[:, None], y, {"source": "peak", "seed": int(seed)}, _signal_1d(peak_signal))


GENERATORS = {"sin": gen_sin_cauchy, "peak": gen_gauss_peak}


def inject_outliers(y, seed, scale=0.01):
    """Multiply each target by 1 + |e| with e ~ Cauchy(0, scale)."""
    y = np.asarray(y, dtype=float)
    eps = sample_cauchy(make_stream(seed, 1), scale, y.shape[0])
    return y * (1.0 + np.abs(eps))


def standardize(d):
    """Zero-mean, unit-sd columns of X and y (population sd).

    Constant columns are dropped with a warning; the parameters are stored in
    meta["standardization"].
    """
    if len(d) == 0:
        raise InputError("cannot standardize an empty dataset")
    mu = d.X.mean(axis=0)
    sd = d.X.std(axis=0)
    keep = sd > 0
    dropped = [int(j) for j in np.nonzero(~keep)[0]]
    if dropped:
        log.warning("dropping constant columns %s", dropped)
    if not keep.any():
        raise InputError("every feature column is constant")
    y_mu = float(d.y.mean())
    y_sd = float(d.y.std())
    if y_sd == 0:
        raise InputError("target column is constant")
    X = (d.X[:, keep] - mu[keep]) / sd[keep]
    y = (d.y - y_mu) / y_sd
    meta = dict(d.meta)
    meta["standardization"] = {
        "x_mean": mu[keep].tolist(),
        "x_sd": sd[keep].tolist(),
        "y_mean": y_mu,
        "y_sd": y_sd,
        "dropped_columns": dropped,
    }
    return Dataset(X, y, meta, None)


def apply_standardization(X, params):
    """Transform raw inputs with stored parameters (dropped columns removed)."""
    X = np.asarray(X, dtype=float)
    keep = [j for j in range(X.shape[1]) if j not in set(params["dropped_columns"])]
    return (X[:, keep] - np.asarray(params["x_mean"])) / np.asarray(params["x_sd"])


def destandardize_y(y, params):
    return np.asarray(y, dtype=float) * params["y_sd"] + params["y_mean"]


def load_csv(path, target_column):
    """Read a headered numeric CSV; `target_column` is y and the rest form X."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise ParseError(f"target column {target_column!r} not in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
            values = []
            for name, cell in zip(header, row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric value {cell!r}", row=lineno, column=name) from None
            rows.append(values)
    if not rows:
        raise InputError(f"{path} has a header but no data rows")
    arr = np.asarray(rows)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{path} contains non-finite values")
    t = header.index(target_column)
    features = [h for j, h in enumerate(header) if j != t]
    if not features:
        raise InputError("no feature columns besides the target")
    X = np.delete(arr, t, axis=1)
    return Dataset(X, arr[:, t], {"source": str(path), "features": features, "target": target_column})


def split(d, train_fraction, seed):
    """Seeded random partition into (train, test)."""
    if not 0 < train_fraction < 1:
        raise InputError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n = len(d)
    if n < 2:
        raise InputError("need at least two observations to split")
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    perm = make_stream(seed, 2).permutation(n)
    return d.subset(np.sort(perm[:n_train])), d.subset(np.sort(perm[n_train:]))


def subsample(d, size, seed):
    """Random subset of at most `size` rows."""
    if len(d) <= size:
        return d
    idx = make_stream(seed, 3).choice(len(d), size=size, replace=False)
    return d.subset(np.sort(idx))
