"""Randomized numerical checks of the theoretical guarantees.

Each check draws instances from a seeded stream, computes a ratio that must
stay at or below 1 (or below a named constant) and reports the worst instance
so that a failure can be replayed.
"""

import numpy as np

from .data import make_stream
from .descent import DescentConfig, direction, run_descent, step_size_limit
from .kernels import Kernel, KernelSpec, cross_kernel_matrix
from .prox import ProxConfig, fit_prox
from .spectral import eig_sym
from .theory import (
    GAP_BOUND,
    RISK_BOUND,
    RiskScenario,
    check_gap_bounds,
    check_gap_expectation,
    check_risk_ratio,
    diag_signflow,
    f_space_sign_descent,
    feature_space_descent,
    gap_constant,
    linf_level_penalty,
    random_instance,
    shrinkage_extremes,
    step_norm_change,
)

TOL = 1e-9
T_GRID = np.logspace(-2, 3, 20)
NOISE_LEVELS = (0.0, 0.1, 1.0)
DIAG_STEP = 1e-3
PROX_TOL = 1e-4
FEATURE_TOL = 1e-10
FEATURE_STEPS = 200


def _worst(ratios, payloads):
    ratios = np.asarray(ratios, dtype=float)
    i = int(np.argmax(ratios))
    return float(ratios[i]), payloads[i]


def _result(name, instances, max_ratio, bound, worst, passed=None):
    if passed is None:
        passed = bool(max_ratio <= bound + TOL)
    return {
        "proposition": name,
        "instances": int(instances),
        "bound": float(bound),
        "max_ratio": float(max_ratio),
        "pass": bool(passed),
        "worst_instance": worst,
    }


def _held_out_rows(rng, inst, m=10):
    Xs = rng.uniform(-3.0, 3.0, size=(m, inst.X.shape[1]))
    return cross_kernel_matrix(KernelSpec(Kernel.GAUSSIAN, inst.bandwidth), Xs, inst.X)


def check_gap(instances, seed):
    """Coefficient and in-sample gaps between flow and ridge, relative to GAP_BOUND."""
    rng = np.random.default_rng(make_stream(seed, 101))
    ratios, payloads = [], []
    for i in range(instances):
        inst = random_instance(rng)
        rep = check_gap_bounds(inst.K, inst.y, T_GRID)
        ratios.append(rep.max_ratio)
        payloads.append({"index": i, **inst.to_dict()})
    max_ratio, worst = _worst(ratios, payloads)
    return _result("1ab", instances, max_ratio, 1.0, worst)


def gap_tightness():
    """Coefficient-gap ratio on K = I with y = e_1 at the maximizing time."""
    x_star, _ = gap_constant()
    rep = check_gap_bounds(np.eye(3), np.array([1.0, 0.0, 0.0]), [x_star])
    return float(rep.ratios[0, 0])


def check_gap_in_expectation(instances, seed):
    """Per-coordinate and out-of-sample expected gaps under an isotropic prior."""
    rng = np.random.default_rng(make_stream(seed, 102))
    ratios, payloads = [], []
    for i in range(instances):
        inst = random_instance(rng)
        decomp = eig_sym(inst.K)
        rows = _held_out_rows(rng, inst)
        worst = 0.0
        for noise in NOISE_LEVELS:
            worst = max(worst, check_gap_expectation(
                decomp, RiskScenario.isotropic(1.0, noise), T_GRID, rows))
        ratios.append(worst)
        payloads.append({"index": i, **inst.to_dict()})
    max_ratio, worst = _worst(ratios, payloads)
    return _result("1cd", instances, max_ratio, 1.0, worst)


def check_shrinkage(instances, seed):
    """Worst-case residual and fit shrinkage ordering between flow and ridge."""
    rng = np.random.default_rng(make_stream(seed, 103))
    ratios, payloads = [], []
    for i in range(instances):
        inst = random_instance(rng)
        s = eig_sym(inst.K).eigenvalues
        s_min = max(float(s[-1]), np.finfo(float).tiny)
        worst = 0.0
        for t in T_GRID:
            ext = shrinkage_extremes(s_min, float(s[0]), t)
            fit_ratio = ext.ridge_fit / ext.flow_fit if ext.flow_fit > 0 else 1.0
            worst = max(worst, ext.flow_residual / ext.ridge_residual, fit_ratio)
        ratios.append(worst)
        payloads.append({"index": i, **inst.to_dict()})
    max_ratio, worst = _worst(ratios, payloads)
    return _result("2", instances, max_ratio, 1.0, worst)


def check_risk(instances, seed):
    """Flow-to-ridge risk ratio for fixed unit-norm truths and an isotropic prior."""
    rng = np.random.default_rng(make_stream(seed, 104))
    ratios, payloads = [], []
    for i in range(instances):
        inst = random_instance(rng)
        decomp = eig_sym(inst.K)
        alpha0 = rng.standard_normal(inst.y.shape[0])
        alpha0 /= np.linalg.norm(alpha0)
        rows = _held_out_rows(rng, inst)
        worst = 0.0
        for noise in NOISE_LEVELS:
            # out-of-sample risk is compared only in expectation over the prior
            fixed = check_risk_ratio(decomp, RiskScenario.fixed(alpha0, noise), T_GRID)
            prior = check_risk_ratio(decomp, RiskScenario.isotropic(1.0, noise), T_GRID, rows)
            worst = max(worst, fixed.max_ratio, prior.max_ratio)
        ratios.append(worst)
        payloads.append({"index": i, "alpha0": alpha0.tolist(), **inst.to_dict()})
    max_ratio, worst = _worst(ratios, payloads)
    return _result("3", instances, max_ratio, RISK_BOUND, worst)


def _diag_instance(rng):
    n = int(rng.integers(2, 12))
    k = rng.uniform(0.5, 3.0, size=n)
    y = 2.0 * rng.standard_normal(n)
    return k, y


def check_diag_signflow(instances, seed):
    """Sign descent and the sup-norm penalized fit on a diagonal kernel against
    the closed-form clipped path. Ratios are errors over their tolerances."""
    rng = np.random.default_rng(make_stream(seed, 105))
    ratios, payloads = [], []
    for i in range(instances):
        k, y = _diag_instance(rng)
        t_end = 1.2 * float(np.max(np.abs(y / k)))
        steps = int(np.ceil(t_end / DIAG_STEP))
        path = run_descent(np.diag(k), y, DescentConfig("ksgd", DIAG_STEP, max_steps=steps,
                                                        checkpoint_stride=max(steps // 50, 1)))
        flow_err = max(np.max(np.abs(a - diag_signflow(k, y, t)))
                       for a, t in zip(path.alphas, path.times))
        level = 0.5 * t_end / 1.2
        lam = linf_level_penalty(k, y, level)
        fit = fit_prox(np.diag(k), y, ProxConfig("linf", lam, max_iter=200_000, tol=1e-12))
        prox_err = float(np.max(np.abs(fit.alpha - diag_signflow(k, y, level))))
        ratios.append(max(flow_err / (2 * DIAG_STEP), prox_err / PROX_TOL))
        payloads.append({"index": i, "k": k.tolist(), "y": y.tolist()})
    max_ratio, worst = _worst(ratios, payloads)
    return _result("4", instances, max_ratio, 1.0, worst)


def check_feature_space(instances, seed):
    """Dual descent against the explicit-weights recursion with Phi = U sqrt(S)."""
    rng = np.random.default_rng(make_stream(seed, 106))
    ratios, payloads = [], []
    for i in range(instances):
        inst = random_instance(rng, n_min=20, n_max=20)
        decomp = eig_sym(inst.K)
        Phi = decomp.feature_map()
        worst = 0.0
        for method in ("kgd", "ksgd", "kcd", "kegd"):
            eta = 1e-2 if method != "kgd" else 1.0 / decomp.s_max
            cfg = DescentConfig(method, eta, max_steps=FEATURE_STEPS, checkpoint_stride=1,
                                stop_tol=0.0)
            path = run_descent(inst.K, inst.y, cfg)
            preds = feature_space_descent(Phi, inst.y, method, eta, FEATURE_STEPS,
                                          cfg.momentum, cfg.elastic_mix)
            dual = path.alphas @ inst.K
            worst = max(worst, float(np.max(np.abs(dual - preds[path.steps]))) / FEATURE_TOL)
        ratios.append(worst)
        payloads.append({"index": i, **inst.to_dict()})
    max_ratio, worst = _worst(ratios, payloads)
    return _result("5", instances, max_ratio, 1.0, worst)


def random_descent_state(K, y, method, rng, max_prior=20, factor=0.99, s_max=None):
    """Iterate reached after a random number (0..max_prior) of steps of `method`,
    each taken at `factor` times the step-size limit at the current residual.

    States where the limit is zero (some residual entry exactly zero) admit no
    step and are never returned.
    """
    alpha = np.zeros_like(y)
    for _ in range(int(rng.integers(0, max_prior + 1))):
        r = y - K @ alpha
        eta = factor * step_size_limit(K, r, method, s_max=s_max)
        candidate = alpha + eta * direction(method, r)
        if step_size_limit(K, y - K @ candidate, method, s_max=s_max) == 0:
            break
        alpha = candidate
    return alpha


def check_step_sizes(instances, seed, methods=("kgd", "ksgd", "kcd")):
    """One step at 0.99 times the step-size limit must strictly shrink the
    method's residual norm. Ratio is new norm over old norm; the pass decision
    uses the sign-exact relative change."""
    out = []
    for j, method in enumerate(methods):
        rng = np.random.default_rng(make_stream(seed, 107, j))
        changes, payloads = [], []
        for i in range(instances):
            inst = random_instance(rng, n_max=30)
            s_max = float(np.linalg.eigvalsh(inst.K)[-1])
            alpha = random_descent_state(inst.K, inst.y, method, rng, s_max=s_max)
            change, eta = step_norm_change(inst.K, inst.y, alpha, method, s_max=s_max)
            changes.append(change)
            payloads.append({"index": i, "method": method, "step_size": eta,
                             "alpha": alpha.tolist(), **inst.to_dict()})
        max_change, worst = _worst(changes, payloads)
        res = _result(f"6-{method}", instances, 1.0 + max_change, 1.0, worst,
                      passed=max_change < 0)
        res["max_change"] = max_change
        res["violations"] = int(np.sum(np.asarray(changes) >= 0))
        out.append(res)
    return out


def check_f_space_diag(instances, seed):
    """Prediction-space sign descent on a diagonal extended kernel: clipped path on
    training coordinates, exact zeros on test coordinates."""
    rng = np.random.default_rng(make_stream(seed, 108))
    ratios, payloads = [], []
    for i in range(instances):
        k, y = _diag_instance(rng)
        n_test = int(rng.integers(1, 5))
        k_ext = np.concatenate([k, rng.uniform(0.5, 3.0, size=n_test)])
        t = float(rng.uniform(0.0, 1.2 * np.max(np.abs(y))))
        steps = int(round(t / DIAG_STEP))
        f = f_space_sign_descent(k_ext, y, n_test, DIAG_STEP, steps)
        exact = diag_signflow(k, y, steps * DIAG_STEP, space="f", n_test=n_test)
        test_nonzero = np.any(f[y.shape[0]:] != 0) or np.any(exact[y.shape[0]:] != 0)
        err = np.max(np.abs(f - exact)) / (2 * DIAG_STEP)
        ratios.append(np.inf if test_nonzero else err)
        payloads.append({"index": i, "k": k_ext.tolist(), "y": y.tolist(), "time": t})
    max_ratio, worst = _worst(ratios, payloads)
    return _result("8", instances, max_ratio, 1.0, worst)


PROPOSITIONS = {
    "1": lambda n, s: [check_gap(n, s), check_gap_in_expectation(n, s)],
    "2": lambda n, s: [check_shrinkage(n, s)],
    "3": lambda n, s: [check_risk(n, s)],
    "4": lambda n, s: [check_diag_signflow(n, s)],
    "5": lambda n, s: [check_feature_space(n, s)],
    "6": lambda n, s: check_step_sizes(n, s),
    "8": lambda n, s: [check_f_space_diag(n, s)],
}


def run_verification(props, instances, seed):
    """Run the named checks; the report passes iff every check passes."""
    results = []
    for p in props:
        results.extend(PROPOSITIONS[p](instances, seed))
    return {
        "seed": int(seed),
        "instances": int(instances),
        "gap_bound": GAP_BOUND,
        "risk_bound": RISK_BOUND,
        "pass": all(r["pass"] for r in results),
        "results": results,
    }
