"""Seeded comparison loop: generate, split, cross-validate, refit, score."""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .closed_form import predict
from .data import GENERATORS, inject_outliers, load_csv, split, standardize, subsample
from .estimators import Estimator
from .select import BANDWIDTH_FACTORS, GridSpec, kfold_cv, r2, sparsity

EVAL_POINTS = 201


def seed_for(base_seed, i):
    """Independent integer seed for repetition i."""
    return int(np.random.SeedSequence(int(base_seed), spawn_key=(int(i),)).generate_state(1)[0])


def thread_count():
    try:
        return max(1, int(os.environ.get("KERNELFLOW_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's outcome.

    `data` is "sin", "peak" or a CSV path (then `target` names the response).
    Synthetic sets are scored against the noiseless function on an even grid of
    EVAL_POINTS points over the input range; CSV data are scored on the test split.
    """

    data: str
    methods: tuple
    seeds: int = 20
    base_seed: int = 0
    n: int = 100
    target: str = None
    subsample: int = 500
    train_fraction: float = 0.8
    outliers: bool = False
    kernel: str = "gaussian"
    grid_size: int = 20
    reg_grid_size: int = None
    folds: int = 10
    bandwidth_factors: tuple = BANDWIDTH_FACTORS
    lambda_bounds: tuple = (1e-6, 1e2)
    time_bounds: tuple = (1e-2, 1e6)
    step_size: float = 1e-4
    max_scan_time: float = None
    prox_max_iter: int = 100_000
    prox_tol: float = 1e-8

    def estimator(self, method):
        return Estimator(
            method, self.kernel, step_size=self.step_size, prox_max_iter=self.prox_max_iter,
            prox_tol=self.prox_tol, max_time=self.max_scan_time,
        )

    def grid(self, X, est):
        bounds = self.lambda_bounds if est.reg_kind == "lambda" else self.time_bounds
        return GridSpec.default(X, est.reg_kind, self.grid_size, self.folds,
                                tuple(self.bandwidth_factors), tuple(bounds), self.reg_grid_size)

    def to_dict(self):
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


def load_data(cfg, seed):
    """Dataset for one repetition (already standardized for CSV input)."""
    if cfg.data in GENERATORS:
        return GENERATORS[cfg.data](cfg.n, seed)
    d = load_csv(cfg.data, cfg.target)
    if cfg.subsample:
        d = subsample(d, cfg.subsample, seed)
    return standardize(d)


def evaluation_set(cfg, data, test):
    if data.signal is not None:
        lo, hi = data.X.min(), data.X.max()
        if cfg.data in GENERATORS:
            lo, hi = -10.0, 10.0
        X_eval = np.linspace(lo, hi, EVAL_POINTS)[:, None]
        return X_eval, data.signal(X_eval)
    return test.X, test.y


@dataclass
class SeedResult:
    method: str
    seed: int
    r2: float
    sparsity: float
    bandwidth: float
    reg: float
    wall_time_s: float


def run_seed(cfg, i):
    seed = seed_for(cfg.base_seed, i)
    data = load_data(cfg, seed)
    train, test = split(data, cfg.train_fraction, seed)
    if cfg.outliers:
        train.y = inject_outliers(train.y, seed)
    X_eval, y_eval = evaluation_set(cfg, data, test)
    out = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        est = cfg.estimator(method)
        cv = kfold_cv(train, est, cfg.grid(train.X, est), seed)
        model = est.fit(train.X, train.y, cv.bandwidth, cv.reg)
        score = r2(y_eval, predict(model, X_eval))
        out.append(SeedResult(method, i, score, sparsity(model.dual.alpha), cv.bandwidth,
                              cv.reg, time.perf_counter() - t0))
    return out


def summarize(values):
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q1), float(med), float(q3)


@dataclass
class ExperimentReport:
    config: dict
    rows: list = field(default_factory=list)
    per_seed: list = field(default_factory=list)

    def to_dict(self, timing=False):
        rows = [dict(r) for r in self.rows]
        per_seed = [asdict(s) for s in self.per_seed]
        if not timing:
            for r in rows:
                r.pop("wall_time_s", None)
            for s in per_seed:
                s.pop("wall_time_s", None)
        return {"config": self.config, "methods": rows, "per_seed": per_seed}

    def row(self, method):
        return next(r for r in self.rows if r["method"] == method)

    def seed_values(self, method, key="r2"):
        return np.array([getattr(s, key) for s in self.per_seed if s.method == method])

    def table(self, timing=False):
        head = f"{'method':<8} {'R2 median':>10} {'(q1, q3)':>20} {'sparsity':>9}"
        if timing:
            head += f" {'time [s]':>9}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            line = (f"{r['method']:<8} {r['r2_median']:>10.3f} "
                    f"{'(%.3f, %.3f)' % (r['r2_q1'], r['r2_q3']):>20} {r['sparsity_median']:>9.3f}")
            if timing:
                line += f" {r['wall_time_s']:>9.2f}"
            lines.append(line)
        return "\n".join(lines)


def run_experiment(cfg):
    """Run every repetition (threads capped by KERNELFLOW_THREADS) and aggregate.

    Results are collected in repetition order, so the report does not depend
    on thread scheduling.
    """
    reps = range(cfg.seeds)
    workers = min(thread_count(), cfg.seeds)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: run_seed(cfg, i), reps))
    else:
        results = [run_seed(cfg, i) for i in reps]
    per_seed = [r for rep in results for r in rep]
    report = ExperimentReport(cfg.to_dict(), [], per_seed)
    for method in cfg.methods:
        q1, med, q3 = summarize(report.seed_values(method, "r2"))
        report.rows.append({
            "method": method,
            "r2_median": med,
            "r2_q1": q1,
            "r2_q3": q3,
            "sparsity_median": float(np.median(report.seed_values(method, "sparsity"))),
            "wall_time_s": float(np.sum(report.seed_values(method, "wall_time_s"))),
        })
    return report
