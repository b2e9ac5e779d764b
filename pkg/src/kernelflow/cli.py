"""Command-line interface: fit, compare, verify.

Exit codes: 0 success, 1 a verified bound was violated, 2 usage or input
error, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .data import GENERATORS, inject_outliers, load_csv, make_stream, split, standardize
from .descent import DescentConfig, run_descent
from .errors import DivergenceError, InputError, NotPSDError
from .estimators import METHODS, PENALIZED, Estimator
from .experiment import ExperimentConfig, run_experiment
from .kernels import Kernel, KernelSpec, cross_kernel_matrix, kernel_matrix
from .closed_form import predict
from .select import GridSpec, kfold_cv, r2, sparsity
from .verify import PROPOSITIONS, run_verification

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("kernelflow")


class UsageError(Exception):
    pass


def parse_reg(text, method):
    """'t=0.5', 'lambda=0.1' or a bare number; the key must suit the method."""
    key, _, value = text.partition("=")
    if not _:
        key, value = None, text
    try:
        number = float(value)
    except ValueError:
        raise UsageError(f"cannot parse regularization value {text!r}") from None
    kind = "lambda" if method in PENALIZED else "time"
    aliases = {"lambda": "lambda", "lam": "lambda", "t": "time", "time": "time"}
    if key is not None and aliases.get(key.strip()) != kind:
        raise UsageError(f"method {method} is regularized by "
                         f"{'lambda' if kind == 'lambda' else 't'}, got {key!r}")
    if number < 0 or (kind == "lambda" and number == 0):
        raise UsageError(f"invalid regularization value {number}")
    return number


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def _add_data_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV file with a header row")
    src.add_argument("--synth", choices=sorted(GENERATORS), help="synthetic data set")
    p.add_argument("--target", help="response column of the CSV")
    p.add_argument("--n", type=int, default=100, help="synthetic sample size (default 100)")
    p.add_argument("--subsample", type=int, default=500,
                   help="rows drawn from a CSV per repetition (0 keeps all)")
    p.add_argument("--outliers", action="store_true",
                   help="multiply training targets by 1 + |Cauchy(0, 0.01)|")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--kernel", choices=[k.value for k in Kernel], default="gaussian")


def _add_grid_args(p, step_default):
    p.add_argument("--grid-size", type=int, default=20, help="grid points per axis (default 20)")
    p.add_argument("--reg-grid-size", type=int, default=None)
    p.add_argument("--paper-grid", action="store_true", help="use 50 x 50 grids")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--bandwidth-range", type=float, nargs=2, metavar=("LO", "HI"),
                   default=(0.1, 100.0), help="bandwidth grid as multiples of the median distance")
    p.add_argument("--lambda-range", type=float, nargs=2, metavar=("LO", "HI"), default=(1e-6, 1e2))
    p.add_argument("--time-range", type=float, nargs=2, metavar=("LO", "HI"), default=(1e-2, 1e6))
    p.add_argument("--step-size", type=float, default=step_default)
    p.add_argument("--max-scan-time", type=float, default=None,
                   help="cap on training time scanned by iterative methods during selection")
    p.add_argument("--prox-max-iter", type=int, default=100_000)
    p.add_argument("--prox-tol", type=float, default=1e-8)


def build_parser():
    parser = argparse.ArgumentParser(prog="kernelflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one model and write model, predictions, metrics")
    _add_data_args(fit)
    fit.add_argument("--method", choices=METHODS, required=True)
    bw = fit.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth", type=float)
    bw.add_argument("--cv", action="store_true", help="select the bandwidth (and reg) by k-fold CV; the default without --bandwidth")
    fit.add_argument("--reg", help="'t=VALUE' for time-regularized methods, 'lambda=VALUE' otherwise")
    fit.add_argument("--early-stop", action="store_true",
                     help="choose the training time on validation data")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", required=True, help="output directory")
    fit.add_argument("--path-csv", action="store_true",
                     help="also write the checkpointed solution path of an iterative method")
    _add_grid_args(fit, 1e-4)

    cmp_ = sub.add_parser("compare", help="seeded comparison of several methods")
    _add_data_args(cmp_)
    cmp_.add_argument("--methods", required=True, help="comma-separated, e.g. ksgd,kgd,krr")
    cmp_.add_argument("--seeds", type=int, default=20, help="repetitions (default 20)")
    cmp_.add_argument("--seed", type=int, default=0, help="base seed")
    cmp_.add_argument("--out", help="directory for report.json and report.txt")
    cmp_.add_argument("--json", default=None, help="write the JSON report here ('-' for stdout)")
    cmp_.add_argument("--timing", action="store_true", help="include wall-clock times")
    _add_grid_args(cmp_, 1e-3)

    ver = sub.add_parser("verify", help="numerically check the theoretical bounds")
    ver.add_argument("--prop", choices=list(PROPOSITIONS) + ["all"], default="all")
    ver.add_argument("--instances", type=int, default=50)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out", default=None, help="JSON report path (default stdout)")
    return parser


def _grid_sizes(args):
    if args.paper_grid:
        return 50, 50
    return args.grid_size, args.reg_grid_size


def _load(args, seed):
    if args.synth:
        return GENERATORS[args.synth](args.n, seed)
    if not args.target:
        raise UsageError("--data needs --target")
    return standardize(load_csv(args.data, args.target))


def _estimator(args, method):
    return Estimator(method, Kernel(args.kernel), step_size=args.step_size,
                     prox_max_iter=args.prox_max_iter, prox_tol=args.prox_tol,
                     max_time=args.max_scan_time)


def cmd_fit(args):
    method = args.method
    if args.reg is not None and args.early_stop:
        raise UsageError("--reg and --early-stop are mutually exclusive")
    if args.early_stop and method in PENALIZED:
        raise UsageError(f"--early-stop applies to time-regularized methods, not {method}")
    reg = parse_reg(args.reg, method) if args.reg is not None else None
    est = _estimator(args, method)
    data = _load(args, args.seed)
    train, test = split(data, args.train_fraction, args.seed)
    if args.outliers:
        train.y = inject_outliers(train.y, args.seed)

    size, reg_size = _grid_sizes(args)
    bounds = tuple(args.lambda_range if est.reg_kind == "lambda" else args.time_range)
    grid = GridSpec.default(train.X, est.reg_kind, size, args.folds,
                            tuple(args.bandwidth_range), bounds, reg_size)
    if args.bandwidth is not None:
        grid = GridSpec(np.array([args.bandwidth]), grid.regs, grid.folds)
    if reg is not None:
        grid = GridSpec(grid.bandwidths, np.array([max(reg, np.finfo(float).tiny)]), grid.folds)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bandwidth, chosen = args.bandwidth, reg
    if bandwidth is None or (reg is None and not args.early_stop):
        # cross-validate over every axis that was not fixed on the command line
        cv = kfold_cv(train, est, grid, args.seed)
        cv.to_csv(out / "cv_table.csv")
        bandwidth = cv.bandwidth
        if reg is None and not args.early_stop:
            chosen = cv.reg
    if args.early_stop:
        fit_part, val_part = split(train, 0.8, args.seed + 1)
        mse = est.validation_mse(fit_part.X, fit_part.y, val_part.X, val_part.y,
                                 bandwidth, grid.regs)
        chosen = float(grid.regs[int(np.argmin(mse))])
    model = est.fit(train.X, train.y, bandwidth, chosen)
    y_pred = predict(model, test.X)
    metrics = {
        "r2": r2(test.y, y_pred),
        "sparsity": sparsity(model.dual.alpha),
        "bandwidth": bandwidth,
        "reg": chosen,
        "reg_kind": est.reg_kind,
        "n_train": len(train),
        "n_test": len(test),
    }
    if data.signal is not None:
        grid_x = np.linspace(-10.0, 10.0, 201)[:, None]
        metrics["r2_noiseless"] = r2(data.signal(grid_x), predict(model, grid_x))
    _dump_json({
        "dual": model.dual.to_dict(),
        "training_inputs": model.training_inputs.tolist(),
        "method": method,
        "seed": args.seed,
        "backend": _backend.NAME,
    }, out / "model.json")
    _dump_json(metrics, out / "metrics.json")
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        p = test.X.shape[1]
        w.writerow([f"x{j}" for j in range(p)] + ["y_true", "y_pred"])
        for x, yt, yp in zip(test.X, test.y, y_pred):
            w.writerow([repr(float(v)) for v in x] + [repr(float(yt)), repr(float(yp))])
    if args.path_csv and method in ("kgd", "ksgd", "kcd", "kegd"):
        K = kernel_matrix(KernelSpec(Kernel(args.kernel), bandwidth), train.X)
        steps = max(est.steps_for(chosen), 1)
        cfg = DescentConfig(method, args.step_size, max_steps=steps,
                            checkpoint_stride=max(steps // 200, 1))
        run_descent(K, train.y, cfg).to_csv(out / "path.csv")
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_compare(args):
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if not methods:
        raise UsageError("--methods is empty")
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {METHODS}")
    if args.data and not args.target:
        raise UsageError("--data needs --target")
    size, reg_size = _grid_sizes(args)
    cfg = ExperimentConfig(
        data=args.synth or args.data,
        methods=methods,
        seeds=args.seeds,
        base_seed=args.seed,
        n=args.n,
        target=args.target,
        subsample=args.subsample,
        train_fraction=args.train_fraction,
        outliers=args.outliers,
        kernel=args.kernel,
        grid_size=size,
        reg_grid_size=reg_size,
        folds=args.folds,
        bandwidth_factors=tuple(args.bandwidth_range),
        lambda_bounds=tuple(args.lambda_range),
        time_bounds=tuple(args.time_range),
        step_size=args.step_size,
        max_scan_time=args.max_scan_time,
        prox_max_iter=args.prox_max_iter,
        prox_tol=args.prox_tol,
    )
    report = run_experiment(cfg)
    doc = report.to_dict(timing=args.timing)
    table = report.table(timing=args.timing)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(doc, out / "report.json")
        (out / "report.txt").write_text(table + "\n")
    if args.json:
        _dump_json(doc, args.json)
    if args.json != "-":
        print(table)
    return report


def cmd_verify(args):
    if args.instances < 1:
        raise UsageError("--instances must be at least 1")
    props = list(PROPOSITIONS) if args.prop == "all" else [args.prop]
    report = run_verification(props, args.instances, args.seed)
    _dump_json(report, args.out)
    if args.out:
        for r in report["results"]:
            status = "pass" if r["pass"] else "FAIL"
            print(f"{r['proposition']:>6}  {status}  max_ratio={r['max_ratio']:.6g}")
    return EXIT_OK if report["pass"] else EXIT_VIOLATION


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "compare":
            cmd_compare(args)
            return EXIT_OK
        return cmd_verify(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NotPSDError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
