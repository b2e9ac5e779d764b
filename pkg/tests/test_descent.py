import importlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kernelflow import _core_py
from kernelflow.closed_form import fit_kgf
from kernelflow.descent import (MONOTONE_NORM, DescentConfig, DescentRunner, descent_step,
                                direction, residual_norms, run_descent, step_size_limit)
from kernelflow.errors import DivergenceError, InputError
from kernelflow.spectral import eig_sym
from kernelflow.theory import feature_space_descent

from conftest import gaussian_problem

METHODS = ("kgd", "ksgd", "kcd", "kegd")
CODES = {m: i for i, m in enumerate(METHODS)}

try:
    compiled = importlib.import_module("kernelflow._core")
except ImportError:  # extension not built
    compiled = None


class TestConfig:
    def test_default_momentum(self):
        assert DescentConfig("kegd").momentum == 0.5
        assert DescentConfig("ksgd").momentum == 0.0

    @pytest.mark.parametrize("kwargs", [
        {"method": "adam"}, {"method": "kgd", "step_size": 0.0},
        {"method": "kgd", "momentum": 1.0}, {"method": "kegd", "elastic_mix": 1.5},
        {"method": "kgd", "max_steps": 0}, {"method": "kgd", "checkpoint_stride": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InputError):
            DescentConfig(**kwargs)

    def test_record_steps_merge_forced_times(self):
        cfg = DescentConfig("kgd", 0.1, max_steps=25, checkpoint_stride=10,
                            checkpoint_times=(0.4, 100.0))
        np.testing.assert_array_equal(cfg.record_steps(), [4, 10, 20])


class TestUpdates:
    def test_kgd_first_step(self):
        y = np.array([1.0, -2.0, 0.5])
        path = run_descent(np.eye(3), y, DescentConfig("kgd", 0.01, max_steps=1,
                                                        checkpoint_stride=1))
        np.testing.assert_allclose(path.alphas[1], 0.01 * y)

    def test_ksgd_diagonal_clip(self):
        eta = 1e-3
        path = run_descent(np.array([[2.0]]), np.array([3.0]),
                           DescentConfig("ksgd", eta, max_steps=3000, checkpoint_stride=10))
        for t in (0.2, 1.0, 1.49, 1.6, 2.9):
            assert abs(path.at(t)[0] - min(t, 1.5)) <= eta + 1e-12

    def test_kcd_first_step_single_coordinate(self, problem):
        _, K, y = problem
        path = run_descent(K, y, DescentConfig("kcd", 0.01, max_steps=1, checkpoint_stride=1))
        nz = np.flatnonzero(path.alphas[1])
        assert nz.tolist() == [int(np.argmax(np.abs(y)))]

    def test_kegd_mix_zero_is_ksgd(self, problem):
        _, K, y = problem
        a = run_descent(K, y, DescentConfig("kegd", 1e-3, momentum=0.0, elastic_mix=0.0,
                                            max_steps=300, checkpoint_stride=1))
        b = run_descent(K, y, DescentConfig("ksgd", 1e-3, max_steps=300, checkpoint_stride=1))
        np.testing.assert_allclose(a.alphas, b.alphas, atol=1e-13)

    def test_momentum_velocity(self, problem):
        _, K, y = problem
        eta, gamma = 1e-2, 0.5
        path = run_descent(K, y, DescentConfig("kgd", eta, momentum=gamma, max_steps=30,
                                               checkpoint_stride=30))
        alpha, v = np.zeros_like(y), np.zeros_like(y)
        for _ in range(30):
            v = gamma * v + (y - K @ alpha)
            alpha = alpha + eta * v
        np.testing.assert_allclose(path.final_alpha, alpha, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("method", ["ksgd", "kcd"])
    def test_sign_path_bounded(self, method, problem):
        _, K, y = problem
        eta = 1e-2
        path = run_descent(K, y, DescentConfig(method, eta, max_steps=400, checkpoint_stride=7))
        assert np.all(np.abs(path.alphas).max(axis=1) <= path.steps * eta + 1e-12)

    def test_direction_rules(self):
        r = np.array([0.5, -2.0, 1.9, 0.0])
        np.testing.assert_array_equal(direction("ksgd", r), [1, -1, 1, 0])
        np.testing.assert_array_equal(direction("kcd", r), [0, -1, 0, 0])
        np.testing.assert_array_equal(direction("kegd", r, 0.9), [0, -1, 1, 0])
        with pytest.raises(InputError):
            direction("newton", r)

    def test_descent_step(self):
        out = descent_step(np.eye(2), np.array([1.0, -1.0]), np.zeros(2), "ksgd", 0.1)
        np.testing.assert_allclose(out, [0.1, -0.1])


class TestPath:
    def test_first_checkpoint_and_monotone_times(self, problem):
        _, K, y = problem
        path = run_descent(K, y, DescentConfig("kcd", 1e-3, max_steps=250, checkpoint_stride=100))
        assert path.times[0] == 0.0 and not path.alphas[0].any()
        np.testing.assert_allclose(path.residual_norms[0], residual_norms(y))
        assert np.all(np.diff(path.times) > 0)
        assert path.steps[-1] == 250

    def test_residual_norms_recorded(self, problem):
        _, K, y = problem
        path = run_descent(K, y, DescentConfig("ksgd", 1e-3, max_steps=200, checkpoint_stride=50))
        for a, norms in zip(path.alphas, path.residual_norms):
            np.testing.assert_allclose(norms, residual_norms(y - K @ a), rtol=1e-10, atol=1e-12)

    def test_converges_and_stops(self):
        path = run_descent(np.eye(2), np.array([1.0, 2.0]),
                           DescentConfig("kgd", 0.5, max_steps=10_000))
        assert path.converged and path.steps[-1] < 200

    def test_divergence_guard(self, problem):
        _, K, y = problem
        s_max = eig_sym(K).s_max
        with pytest.raises(DivergenceError) as exc:
            run_descent(K, y, DescentConfig("kgd", 2.5 / s_max, max_steps=10_000))
        assert exc.value.step > 0

    def test_runner_resumes(self, problem):
        _, K, y = problem
        cfg = DescentConfig("kegd", 1e-3, max_steps=500)
        runner = DescentRunner(K, y, cfg)
        runner.advance(200)
        runner.advance(500)
        full = run_descent(K, y, cfg)
        np.testing.assert_allclose(runner.alpha, full.final_alpha, atol=1e-13)

    def test_interpolation(self):
        path = run_descent(np.eye(1), np.array([1.0]),
                           DescentConfig("ksgd", 0.1, max_steps=4, checkpoint_stride=2))
        assert path.at(0.1)[0] == pytest.approx(0.1)
        assert path.at(10.0)[0] == pytest.approx(path.final_alpha[0])

    def test_csv_export(self, problem, tmp_path):
        _, K, y = problem
        path = run_descent(K, y, DescentConfig("kcd", 1e-2, max_steps=30, checkpoint_stride=10))
        out = tmp_path / "path.csv"
        path.to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "step,time,l1_residual,l2_residual,linf_residual,nnz"
        assert len(lines) == len(path) + 1


class TestStepSizeLimit:
    def test_kgd_identity(self):
        assert step_size_limit(np.eye(3), np.ones(3), "kgd") == 2.0

    def test_kgd_diagonal(self):
        assert step_size_limit(np.diag([4.0, 1.0]), np.ones(2), "kgd") == 0.5

    def test_sign_methods(self):
        r = np.array([0.3, -0.1, 2.0])
        assert step_size_limit(None, r, "ksgd") == pytest.approx(0.1)
        assert step_size_limit(None, r, "kcd") == pytest.approx(0.1)
        assert step_size_limit(None, r, "kegd", 0.1) == pytest.approx(0.3)

    def test_zero_residual(self):
        assert step_size_limit(None, np.zeros(3), "ksgd") == 0.0

    def test_non_finite(self):
        with pytest.raises(InputError):
            step_size_limit(None, np.array([np.nan]), "kcd")

    @pytest.mark.parametrize("method", ["kgd", "ksgd"])
    def test_monotone_decrease_from_zero(self, method, rng):
        norm = MONOTONE_NORM[method]
        for _ in range(30):
            _, K, y = gaussian_problem(rng, n=int(rng.integers(5, 30)), jitter=1e-8)
            eta = 0.99 * step_size_limit(K, y, method)
            r1 = y - K @ (eta * direction(method, y))
            assert np.linalg.norm(r1, norm) < np.linalg.norm(y, norm)

    def test_kgd_bound_sharp_on_identity(self):
        y = np.array([1.0, 1.0])
        eta = 1.01 * step_size_limit(np.eye(2), y, "kgd")
        assert np.linalg.norm(y - eta * y) >= np.linalg.norm(y)


class TestFeatureSpace:
    @pytest.mark.parametrize("method", METHODS)
    def test_dual_matches_weight_recursion(self, method, rng):
        _, K, y = gaussian_problem(rng, n=20, jitter=1e-8)
        cfg = DescentConfig(method, 1e-2, max_steps=200, checkpoint_stride=1, stop_tol=0.0)
        path = run_descent(K, y, cfg)
        preds = feature_space_descent(eig_sym(K).feature_map(), y, method, 1e-2, 200,
                                      cfg.momentum, cfg.elastic_mix)
        assert np.max(np.abs(path.alphas @ K - preds)) <= 1e-10


class TestKGDApproachesFlow:
    def test_small_steps_match_flow(self, rng):
        _, K, y = gaussian_problem(rng, n=30, jitter=1e-8)
        eta = 1e-3
        path = run_descent(K, y, DescentConfig("kgd", eta, max_steps=2000, checkpoint_stride=1000))
        ref = fit_kgf(K, y, 2.0).alpha
        assert np.linalg.norm(path.at(2.0) - ref) <= 1e-2 * (1 + np.linalg.norm(ref))


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
class TestBackendsAgree:
    @given(st.sampled_from(METHODS), st.floats(1e-4, 5e-2), st.floats(0.0, 0.9),
           st.integers(1, 300), st.integers(0, 2**31 - 1))
    def test_descent_run(self, method, eta, gamma, steps, seed):
        rng = np.random.default_rng(seed)
        _, K, y = gaussian_problem(rng, n=12, jitter=1e-6)
        record = np.arange(1, steps + 1, 7)
        args = (K, y, CODES[method], eta, gamma, 0.9, steps, record, 1e-10, 1e3 * np.linalg.norm(y), 64)
        a = _core_py.descent_run(*args)
        b = compiled.descent_run(*args)
        assert a[5] == b[5] and a[6] == b[6]
        np.testing.assert_array_equal(a[2], b[2])
        np.testing.assert_allclose(a[0], b[0], atol=1e-11)
        np.testing.assert_allclose(a[3], b[3], atol=1e-11)

    @given(st.sampled_from([0, 1]), st.floats(1e-3, 1.0), st.integers(0, 2**31 - 1))
    def test_prox_run(self, penalty, lam, seed):
        rng = np.random.default_rng(seed)
        _, K, y = gaussian_problem(rng, n=10, jitter=1e-3)
        eta = 1.0 / eig_sym(K).s_max
        args = (K, y, penalty, lam, eta, np.zeros(10), 2000, 1e-10)
        a = _core_py.prox_run(*args)
        b = compiled.prox_run(*args)
        assert a[1] == b[1] and a[2] == b[2]
        np.testing.assert_allclose(a[0], b[0], atol=1e-11)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=12), st.floats(0.0, 20.0))
    def test_prox_operators(self, v, tau):
        v = np.array(v)
        np.testing.assert_allclose(_core_py.soft_threshold(v, tau), compiled.soft_threshold(v, tau))
        np.testing.assert_allclose(_core_py.prox_linf(v, tau), compiled.prox_linf(v, tau),
                                   atol=1e-12)
