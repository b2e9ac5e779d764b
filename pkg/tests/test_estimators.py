import json

import numpy as np
import pytest

from kernelflow.closed_form import fit_kgf, fit_krr, predict
from kernelflow.data import Dataset
from kernelflow.descent import DescentConfig, run_descent
from kernelflow.errors import DivergenceError, InputError
from kernelflow.estimators import EARLY_STOPPED, METHODS, PENALIZED, Estimator
from kernelflow.experiment import ExperimentConfig, run_experiment, seed_for, summarize
from kernelflow.kernels import Kernel, KernelSpec, cross_kernel_matrix, kernel_matrix
from kernelflow.prox import ProxConfig, fit_prox


@pytest.fixture
def split_data(rng):
    X = rng.uniform(-3, 3, size=(30, 1))
    y = np.sin(X[:, 0]) + 0.05 * rng.standard_normal(30)
    Xv = rng.uniform(-3, 3, size=(10, 1))
    return X, y, Xv, np.sin(Xv[:, 0])


class TestEstimator:
    def test_kinds(self):
        assert all(Estimator(m).reg_kind == "lambda" for m in PENALIZED)
        assert all(Estimator(m).reg_kind == "time" for m in EARLY_STOPPED)
        assert Estimator("krr").stronger_first == -1.0
        assert Estimator("kcd").stronger_first == 1.0
        with pytest.raises(InputError):
            Estimator("svm")

    @pytest.mark.parametrize("method", METHODS)
    def test_fit_matches_direct_solvers(self, method, split_data):
        X, y, _, _ = split_data
        spec = KernelSpec(Kernel.GAUSSIAN, 1.0)
        K = kernel_matrix(spec, X, jitter=1e-2)
        est = Estimator(method, step_size=1e-2, jitter=1e-2)
        reg = 0.05 if method in PENALIZED else 2.0
        model = est.fit(X, y, 1.0, reg)
        if method == "krr":
            expected = fit_krr(K, y, reg).alpha
        elif method == "kgf":
            expected = fit_kgf(K, y, reg).alpha
        elif method in ("kl1r", "klinfr"):
            pen = "l1" if method == "kl1r" else "linf"
            expected = fit_prox(K, y, ProxConfig(pen, reg, tol=1e-10)).alpha
        else:
            path = run_descent(K, y, DescentConfig(method, 1e-2, max_steps=200,
                                                   checkpoint_stride=200))
            expected = path.final_alpha
        np.testing.assert_allclose(model.dual.alpha, expected, atol=1e-6)
        assert model.dual.kernel == spec

    @pytest.mark.parametrize("method", METHODS)
    def test_validation_scan_matches_refits(self, method, split_data):
        X, y, Xv, yv = split_data
        est = Estimator(method, step_size=1e-2, jitter=1e-2)
        regs = np.array([0.01, 0.1]) if method in PENALIZED else np.array([0.5, 3.0])
        mse = est.validation_mse(X, y, Xv, yv, 1.0, regs)
        for value, reg in zip(mse, regs):
            pred = predict(est.fit(X, y, 1.0, reg), Xv)
            assert value == pytest.approx(np.mean((pred - yv) ** 2), rel=1e-5, abs=1e-10)

    def test_scan_respects_time_cap(self, split_data):
        X, y, Xv, yv = split_data
        est = Estimator("ksgd", step_size=1e-2, max_time=1.0)
        mse = est.validation_mse(X, y, Xv, yv, 1.0, np.array([0.5, 1.0, 50.0]))
        # times past the cap reuse the last scanned value
        assert mse[2] == mse[1]

    def test_kgd_spectral_shortcut_matches_iteration(self, split_data):
        X, y, Xv, yv = split_data
        K = kernel_matrix(KernelSpec(Kernel.GAUSSIAN, 1.0), X)
        path = run_descent(K, y, DescentConfig("kgd", 1e-2, max_steps=300, checkpoint_stride=300))
        fast = Estimator("kgd", step_size=1e-2).fit_dual(K, y, 3.0).alpha
        np.testing.assert_allclose(fast, path.final_alpha, atol=1e-10)

    def test_unstable_kgd_step_raises(self, split_data):
        X, y, _, _ = split_data
        with pytest.raises(DivergenceError):
            Estimator("kgd", step_size=10.0).fit(X, y, 5.0, 100.0)


@pytest.fixture(scope="module")
def config():
    return ExperimentConfig("peak", ("krr", "kcd"), seeds=3, n=40, grid_size=3,
                            reg_grid_size=4, folds=3, step_size=1e-2,
                            bandwidth_factors=(0.01, 1.0), max_scan_time=20.0)


class TestExperiment:
    def test_seeds_are_distinct_and_stable(self):
        seeds = [seed_for(0, i) for i in range(10)]
        assert len(set(seeds)) == 10
        assert seeds == [seed_for(0, i) for i in range(10)]

    def test_summary(self):
        assert summarize([1.0, 2.0, 3.0, 4.0, 5.0]) == (2.0, 3.0, 4.0)

    def test_report_deterministic(self, config):
        a = run_experiment(config).to_dict()
        b = run_experiment(config).to_dict()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
        assert "wall_time_s" not in a["methods"][0]
        assert len(a["per_seed"]) == 6
        assert a["methods"][0]["sparsity_median"] == 1.0

    def test_threads_do_not_change_results(self, config, monkeypatch):
        serial = run_experiment(config).to_dict()
        monkeypatch.setenv("KERNELFLOW_THREADS", "3")
        assert run_experiment(config).to_dict() == serial

    def test_table_and_timing(self, config):
        report = run_experiment(config)
        assert "time [s]" in report.table(timing=True)
        assert "time [s]" not in report.table()
        assert all(s["wall_time_s"] >= 0 for s in report.to_dict(timing=True)["per_seed"])

    def test_csv_source(self, tmp_path, rng):
        X = rng.normal(size=(60, 2))
        y = X[:, 0] - 0.5 * X[:, 1] ** 2 + 0.1 * rng.standard_normal(60)
        rows = "\n".join(",".join(repr(float(c)) for c in (*x, v)) for x, v in zip(X, y))
        path = tmp_path / "data.csv"
        path.write_text("u,v,out\n" + rows + "\n")
        cfg = ExperimentConfig(str(path), ("krr",), seeds=2, target="out", grid_size=3,
                               folds=3, outliers=True)
        report = run_experiment(cfg)
        assert report.row("krr")["r2_median"] > 0.5

    def test_cross_kernel_prediction(self, split_data):
        X, y, Xv, _ = split_data
        model = Estimator("krr").fit(X, y, 1.0, 0.1)
        spec = KernelSpec(Kernel.GAUSSIAN, 1.0)
        expected = cross_kernel_matrix(spec, Xv, X) @ model.dual.alpha
        np.testing.assert_allclose(predict(model, Xv), expected)
        assert isinstance(Dataset(X, y).X, np.ndarray)
