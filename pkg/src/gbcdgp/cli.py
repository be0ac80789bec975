"""Command-line interface: ``gbcdgp {gen-data,train,predict,bench,correlate}``.

Exit codes: 0 success, 2 usage or input error, 3 non-convergence,
4 numerical failure.  Output tables carry a ``#`` metadata line and a one-line
header; each command also writes ``manifest.txt`` with its full configuration.
Wall-clock values are written only with ``--timing`` so that reruns with the
same flags produce byte-identical files.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .baselines import METHODS
from .bench import BENCH_COLUMNS, run_bench
from .datasets import (
    Dataset,
    StandardizationParams,
    add_target_noise,
    apply_standardization,
    fit_standardization,
    friedman1_benchmark,
    friedman1_generate,
    load_table,
    save_table,
    split,
)
from .diagnostics import CorrelationDiagnosticSpec, run_correlation_diagnostic
from .errors import ContractViolation, GBCDError, NonConvergence, NumericalBreakdown, NumericalFailure, RefusalError
from .kernels import KernelSpec
from .predict import GPModel, make_config, normalized_rmse, predict
from .problem import TRACE_COLUMNS, Problem
from .reporting import (
    config_digest,
    fmt,
    meta_line,
    read_table,
    trace_rows,
    write_manifest,
    write_table,
)

logger = logging.getLogger("gbcdgp")

EXIT_OK, EXIT_USAGE, EXIT_NONCONV, EXIT_NUMERIC = 0, 2, 3, 4
SOLVERS = ("gbcd",) + METHODS

# Friedman #1 defaults in standardized units (amplitude 1, ARD on the five active inputs)
FRIEDMAN1_GAMMA = (0.125, 0.125, 0.0625, 0.015, 0.0075, 0.0, 0.0, 0.0, 0.0, 0.0)
FRIEDMAN1_SIGMA_SQ = 0.04


def _float_list(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _solver_list(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SOLVERS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown solver(s) {bad}; choose from {list(SOLVERS)}")
    return names


def _header_flag(text):
    return {"yes": True, "no": False, "auto": "auto"}[text]


def _add_solver_flags(p, multi=False):
    if multi:
        p.add_argument("--solver", dest="solvers", type=_solver_list, default=None,
                       help="comma-separated solvers from " + ",".join(SOLVERS))
    else:
        p.add_argument("--solver", choices=SOLVERS, default="gbcd")
    p.add_argument("--m", type=int, default=500, help="block size for gbcd/bcdc/bcdg")
    p.add_argument("--kappa", type=int, default=60, help="gbcd random candidate subset size")
    p.add_argument("--tol", type=float, default=1e-4, help="gradient inf-norm tolerance")
    p.add_argument("--max-iters", type=int, default=None, help="outer iteration cap")
    p.add_argument("--factorization", choices=("rank_one_inverse", "cholesky_update"),
                   default="rank_one_inverse")
    p.add_argument("--cache-columns", type=int, default=0, help="kernel column cache budget")


def _add_kernel_flags(p):
    p.add_argument("--gamma", type=_float_list, default=None,
                   help="inverse squared length-scales, one value or one per attribute")
    p.add_argument("--sigma-sq", type=float, default=None, help="noise variance")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--timing", action="store_true", help="write wall-clock values (breaks byte-identical reruns)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_dataset_flags(p, generate=True):
    p.add_argument("--dataset", help="delimited numeric file")
    p.add_argument("--target-col", type=int, default=-1)
    p.add_argument("--header", type=_header_flag, default="auto", metavar="{yes,no,auto}")
    if generate:
        p.add_argument("--generate", choices=("friedman1",), default=None)
        p.add_argument("--n-train", type=int, default=None)
        p.add_argument("--n-test", type=int, default=0)
        p.add_argument("--noise-std", type=float, default=1.0)
        p.add_argument("--test-dataset", default=None)
    p.add_argument("--no-standardize", dest="standardize", action="store_false")


def build_parser():
    parser = argparse.ArgumentParser(prog="gbcdgp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic Friedman #1 dataset")
    p.add_argument("--generator", choices=("friedman1",), default="friedman1")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--out", default=None, help="output file (default OUT_DIR/friedman1.csv)")
    _add_common(p)

    p = sub.add_parser("train", help="fit a GP model on a dataset")
    _add_dataset_flags(p, generate=False)
    _add_solver_flags(p)
    _add_kernel_flags(p)
    _add_common(p)

    p = sub.add_parser("predict", help="predictive means (and variances) from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--target-col", type=int, default=-1)
    p.add_argument("--header", type=_header_flag, default="auto", metavar="{yes,no,auto}")
    p.add_argument("--no-targets", action="store_true", help="the dataset has input columns only")
    p.add_argument("--variance", action="store_true")
    _add_solver_flags(p)
    p.set_defaults(solver=None)
    _add_common(p)

    p = sub.add_parser("bench", help="compare solvers on one train/test split")
    _add_dataset_flags(p)
    _add_solver_flags(p, multi=True)
    p.add_argument("--solvers", dest="solvers", type=_solver_list)
    _add_kernel_flags(p)
    _add_common(p)

    p = sub.add_parser("correlate", help="neighbour gradient-correlation histograms")
    _add_dataset_flags(p)
    _add_solver_flags(p)
    _add_kernel_flags(p)
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--neighbors", type=int, default=50)
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--bins", type=int, default=10, help="uniform bins on [-1, 1]")
    p.add_argument("--systems", default="y,kstar")
    p.set_defaults(tol=1e-12)
    _add_common(p)
    return parser


def _settings(args):
    """Flag values that define a run; ``out_dir`` and ``verbose`` are excluded."""
    skip = {"out_dir", "verbose", "func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _meta(args, solver):
    return meta_line(args.seed, config_digest(_settings(args)), solver)


def _manifest(args, extra=None):
    entries = {f"flag.{k}": (",".join(map(fmt, v)) if isinstance(v, (list, tuple)) else v)
               for k, v in _settings(args).items()}
    entries["gbcdgp_version"] = __version__
    entries["config_digest"] = config_digest(_settings(args))
    entries.update(extra or {})
    write_manifest(os.path.join(args.out_dir, "manifest.txt"), entries)


def _kernel_spec(args, d, friedman=False):
    gamma = args.gamma
    sigma_sq = args.sigma_sq
    if gamma is None:
        if friedman and d == len(FRIEDMAN1_GAMMA):
            gamma = FRIEDMAN1_GAMMA
        else:
            gamma = [1.0]
    if sigma_sq is None:
        sigma_sq = FRIEDMAN1_SIGMA_SQ if friedman else 0.1
    try:
        return KernelSpec.broadcast(gamma, d, sigma_sq)
    except ContractViolation as exc:
        raise ContractViolation(f"--gamma/--sigma-sq: {exc}") from None


def _config(args, solver):
    return make_config(solver, tol=args.tol, m=args.m, kappa=args.kappa, max_iters=args.max_iters,
                       rng_seed=args.seed, factorization=args.factorization)


def _load_split(args):
    """Resolve dataset flags into standardized ``(train, test)``; test may be ``None``."""
    if args.generate:
        if args.dataset:
            raise ContractViolation("use either --dataset or --generate")
        if args.n_train is None:
            raise ContractViolation("--generate needs --n-train")
        train, test, _ = friedman1_benchmark(args.n_train, args.n_test, args.noise_std, args.seed)
        if not args.standardize:
            logger.info("generated data is always standardized")
        return train, (test if test.n else None), True
    if not args.dataset:
        raise ContractViolation("need --dataset or --generate")
    ds = load_table(args.dataset, args.target_col, args.header)
    if args.test_dataset:
        train = ds
        test = load_table(args.test_dataset, args.target_col, args.header)
    elif args.n_train is not None:
        train, test = split(ds, args.n_train, args.n_test, args.seed)
    else:
        train, test = ds, None
    if args.standardize:
        params = fit_standardization(train)
        train = apply_standardization(train, params)
        test = apply_standardization(test, params) if test is not None and test.n else None
    return train, test, False


# ---------------------------------------------------------------------------
# model files


def write_model(path, model, params, meta, converged):
    ops = model.problem.ops
    d = ops.d
    comments = [
        "gamma=" + ";".join(fmt(g) for g in ops.spec.gamma),
        f"sigma_sq={fmt(ops.spec.sigma_sq)}",
        f"tol={fmt(model.tol)}",
        f"converged={fmt(converged)}",
    ]
    if params is not None:
        comments += [
            "input_shift=" + ";".join(fmt(v) for v in params.input_shift),
            "input_scale=" + ";".join(fmt(v) for v in params.input_scale),
            f"output_shift={fmt(params.output_shift)}",
            f"output_scale={fmt(params.output_scale)}",
        ]
    cols = [f"x{i}" for i in range(d)] + ["y", "alpha"]
    rows = (tuple(x) + (y, a) for x, y, a in zip(ops.X, model.problem.rhs, model.alpha))
    write_table(path, cols, rows, meta, comments)


def read_model(path):
    meta, cols, rows = read_table(path)
    data = np.array(rows, dtype=float)
    d = len(cols) - 2
    spec = KernelSpec(tuple(float(v) for v in meta["gamma"].split(";")), float(meta["sigma_sq"]))
    params = None
    if "input_shift" in meta:
        params = StandardizationParams(
            np.array([float(v) for v in meta["input_shift"].split(";")]),
            np.array([float(v) for v in meta["input_scale"].split(";")]),
            float(meta["output_shift"]),
            float(meta["output_scale"]),
        )
    problem = Problem(data[:, :d], data[:, d], spec)
    model = GPModel(problem, data[:, d + 1].copy(), meta.get("solver", "unknown"), float(meta["tol"]))
    return model, params, meta


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args):
    ds = friedman1_generate(args.n, args.seed)
    ds = add_target_noise(ds, args.noise_std, args.seed + 1)
    out = args.out or os.path.join(args.out_dir, "friedman1.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    save_table(out, ds, header=True, comments=[_meta(args, "none")[2:]])
    _manifest(args, {"output": os.path.basename(out), "rows": ds.n, "attributes": ds.d})
    return EXIT_OK


def cmd_train(args):
    ds = load_table(args.dataset, args.target_col, args.header)
    params = None
    if args.standardize:
        params = fit_standardization(ds)
        ds = apply_standardization(ds, params)
    friedman = args.gamma is None and ds.d == len(FRIEDMAN1_GAMMA)
    spec = _kernel_spec(args, ds.d, friedman)
    problem = Problem(ds.X, ds.y, spec, args.cache_columns)
    config = _config(args, args.solver)
    meta = _meta(args, args.solver)
    code = EXIT_OK
    report = None
    alpha = None
    try:
        from .baselines import solve

        alpha, report = solve(problem, args.solver, config)
        if not report.converged:
            code = EXIT_NONCONV
    except (NumericalFailure, NumericalBreakdown) as exc:
        logger.error("numerical failure: %s", exc)
        report = getattr(exc, "report", None)
        code = EXIT_NUMERIC

    if report is not None:
        write_table(os.path.join(args.out_dir, "trace.csv"), TRACE_COLUMNS,
                    trace_rows(report, args.timing), meta)
        _write_report(os.path.join(args.out_dir, "report.txt"), report, args)
    if alpha is not None:
        model = GPModel(problem, alpha, args.solver, config.tol, report)
        write_model(os.path.join(args.out_dir, "model.csv"), model, params, meta, report.converged)
    _manifest(args, {"exit_code": code, "n": ds.n, "d": ds.d,
                     "gamma": ";".join(fmt(g) for g in spec.gamma), "sigma_sq": spec.sigma_sq})
    return code


def _write_report(path, report, args):
    entries = {
        "solver": report.solver,
        "converged": report.converged,
        "outer_iters": report.outer_iters,
        "final_grad_inf_norm": report.final_grad_inf_norm,
        "kernel_evals": report.kernel_evals,
        "tol": report.tol,
        "decrease_bound_factor": report.decrease_bound_factor,
        "block_grad_max": report.block_grad_max,
        "decrease_violations": report.decrease_violations,
        "fallbacks": report.fallbacks,
        "message": report.message,
        "wall_time": report.wall_time if args.timing else float("nan"),
        "seed": args.seed,
        "config_digest": config_digest(_settings(args)),
        "gbcdgp_version": __version__,
    }
    write_manifest(path, entries)


def cmd_predict(args):
    model, params, mmeta = read_model(args.model)
    if args.no_targets:
        X = load_table_inputs(args.dataset, args.header)
        y = None
    else:
        ds = load_table(args.dataset, args.target_col, args.header)
        X, y = ds.X, ds.y
    if X.shape[1] != model.problem.ops.d:
        raise ContractViolation(f"dataset has {X.shape[1]} attributes, model expects {model.problem.ops.d}")
    if params is not None:
        X = (X - params.input_shift) / params.input_scale
    solver = args.solver or mmeta.get("solver", "gbcd")
    config = _config(args, solver)
    res = predict(model, X, variance=args.variance, solver=solver, config=config)
    mean = res.mean
    var = res.variance
    if params is not None:
        mean = mean * params.output_scale + params.output_shift
        if var is not None:
            var = var * params.output_scale ** 2
    meta = _meta(args, solver)
    cols = ["point_id", "mean"]
    if args.variance:
        cols += ["variance", "inner_iters"]
        iters = res.inner_iterations()
        rows = [(i, mean[i], var[i], iters[i]) for i in range(mean.size)]
    else:
        rows = [(i, mean[i]) for i in range(mean.size)]
    write_table(os.path.join(args.out_dir, "predictions.csv"), cols, rows, meta)

    summary = {"points": mean.size, "clamped": res.clamped, "invalid": res.invalid,
               "mean_time": res.mean_time if args.timing else float("nan"),
               "variance_time": res.variance_time if (args.timing and args.variance) else float("nan")}
    if y is not None:
        train_y = model.problem.rhs
        if params is not None:
            train_y = train_y * params.output_scale + params.output_shift
        summary["rmse"] = normalized_rmse(mean, y, float(np.var(train_y)))
    write_table(os.path.join(args.out_dir, "summary.csv"), list(summary), [tuple(summary.values())], meta)
    _manifest(args, {"points": mean.size})
    return EXIT_NUMERIC if res.invalid else EXIT_OK


def load_table_inputs(path, header):
    """Inputs-only table: every column is an attribute."""
    tmp = load_table(path, 0, header)
    return np.column_stack([tmp.y, tmp.X])


def cmd_bench(args):
    if not args.solvers:
        raise ContractViolation("bench needs at least one solver (--solver a,b,...)")
    train, test, friedman = _load_split(args)
    spec = _kernel_spec(args, train.d, friedman or train.d == len(FRIEDMAN1_GAMMA) and args.gamma is None)
    solvers = [(s, _config(args, s)) for s in args.solvers]
    rows = run_bench(train, test, spec, solvers, args.cache_columns)
    os.makedirs(args.out_dir, exist_ok=True)
    for row in rows:
        if row.report is not None:
            write_table(os.path.join(args.out_dir, f"trace_{row.solver}.csv"), TRACE_COLUMNS,
                        trace_rows(row.report, args.timing), _meta(args, row.solver))
    write_table(os.path.join(args.out_dir, "bench.csv"), BENCH_COLUMNS,
                [r.as_tuple(args.timing) for r in rows], _meta(args, ",".join(args.solvers).replace(",", "+")))
    _manifest(args, {"n_train": train.n, "n_test": test.n if test is not None else 0,
                     "gamma": ";".join(fmt(g) for g in spec.gamma), "sigma_sq": spec.sigma_sq})
    return EXIT_OK if all(r.converged for r in rows) else EXIT_NONCONV


def cmd_correlate(args):
    if args.solver != "gbcd":
        raise ContractViolation("the correlation diagnostic tracks GBCD iterations; use --solver gbcd")
    train, test, friedman = _load_split(args)
    spec = _kernel_spec(args, train.d, friedman or train.d == len(FRIEDMAN1_GAMMA) and args.gamma is None)
    dspec = CorrelationDiagnosticSpec(args.probes, args.neighbors, args.window,
                                      np.linspace(-1.0, 1.0, args.bins + 1))
    systems = tuple(s.strip() for s in args.systems.split(",") if s.strip())
    kstar = test.X[0] if test is not None else None
    hists = run_correlation_diagnostic(train.X, train.y, spec, dspec, _config(args, "gbcd"),
                                       args.seed, kstar, systems)
    meta = _meta(args, "gbcd")
    rows = []
    for name, h in hists.items():
        for b, c in enumerate(h.counts):
            rows.append((name, b, h.edges[b], h.edges[b + 1], int(c), c / h.pairs if h.pairs else float("nan")))
    os.makedirs(args.out_dir, exist_ok=True)
    write_table(os.path.join(args.out_dir, "correlation.csv"),
                ("system", "bin", "bin_lo", "bin_hi", "count", "fraction"), rows, meta)
    write_table(os.path.join(args.out_dir, "correlation_summary.csv"),
                ("system", "pairs", "skipped", "median", "median_bin"),
                [(name, h.pairs, h.skipped, h.median, h.median_bin()) for name, h in hists.items()], meta)
    _manifest(args, {"gamma": ";".join(fmt(g) for g in spec.gamma), "sigma_sq": spec.sigma_sq})
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "correlate": cmd_correlate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    os.makedirs(args.out_dir, exist_ok=True)
    try:
        return COMMANDS[args.command](args)
    except (ContractViolation, RefusalError, FileNotFoundError) as exc:
        print(f"gbcdgp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergence as exc:
        print(f"gbcdgp {args.command}: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (NumericalFailure, NumericalBreakdown) as exc:
        print(f"gbcdgp {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GBCDError as exc:
        print(f"gbcdgp {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
