"""Command line interface.

Exit codes: 0 success, 1 a check ran but failed, 2 configuration or parse
error, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import contextlib
import sys
from pathlib import Path

from . import bench
from .errors import ConfigurationError, DivergenceError, MethodFormatError, UnsupportedShapeError
from .integrator import run
from .methods import (RESIDUAL_TOL, builtin_catalog, check_order4_conditions, describe,
                      resolve_method)
from .parallel import ParallelPlan, latency_sweep, run_parallel
from .problems import get_problem

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _int_list(text: str) -> list[int]:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _method(name):
    try:
        return resolve_method(name)
    except MethodFormatError as exc:
        raise CliError(f"cannot parse coefficient file: {exc}") from None
    except (KeyError, ValueError) as exc:
        raise CliError(str(exc.args[0] if exc.args else exc)) from None


def _methods(names: str):
    return [_method(n) for n in names.split(",") if n.strip()]


def _problem(args):
    try:
        return get_problem(args.problem, args.e)
    except (KeyError, ValueError) as exc:
        raise CliError(str(exc.args[0] if exc.args else exc)) from None


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _info(args, text):
    # keep stdout clean when the CSV goes there
    stream = sys.stderr if args.output in (None, "-") else sys.stdout
    print(text, file=stream)


def _check_config(N, p, workers=1):
    if N < 0:
        raise CliError("--N must be non-negative")
    if p < 1:
        raise CliError("--p must be >= 1")
    if N % p:
        raise CliError(f"--N {N} is not divisible by --p {p}")
    if workers < 1:
        raise CliError("--workers must be >= 1")


# --------------------------------------------------------------------------
# subcommands

def cmd_list(args) -> int:
    for m in builtin_catalog():
        print(describe(m))
    return EXIT_OK


def cmd_check(args) -> int:
    method = _method(args.method)
    print(describe(method))
    try:
        report = check_order4_conditions(method)
    except UnsupportedShapeError:
        report = None
    if report is not None:
        for k, v in report.as_dict().items():
            print(f"  {k:<5} = {v:+.17g}")
        if method.order <= 2:
            ok = abs(report.g00 - 1.0) <= RESIDUAL_TOL
        else:
            ok = report.passes(method.pseudo_symplectic_order, RESIDUAL_TOL)
        if method.order > 4:
            print("  note: two-stage compositions cannot exceed order 4")
            ok = False
    else:
        problem = _problem(args)
        grid = bench.default_order_grid(problem, method.order)
        t_f = bench.ORDER_T_FINAL[problem.name]
        errors = bench.convergence_errors(method, problem, t_f, grid)
        slope = bench.fit_order(grid, errors, t_f)
        for N, err in zip(grid, errors):
            print(f"  N={N:<6d} error={err:.6e}")
        print(f"  empirical order on {problem.name} = {slope:.3f} (design {method.order})")
        ok = bench.order_within_tolerance(method.order, slope)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def _engine_run(method, problem, t_f, N, p, workers, schedule):
    h = t_f / N if N else 0.0
    if workers > 1:
        plan = ParallelPlan.make(method, min(workers, method.k), p, schedule)
        return run_parallel(method, problem.scheme(), problem.initial_state(), h, N, plan)
    return run(method, problem.scheme(), problem.initial_state(), h, N, p)


def cmd_run(args) -> int:
    _check_config(args.N, args.p, args.workers)
    method = _method(args.method)
    problem = _problem(args)
    res = _engine_run(method, problem, args.tf, args.N, args.p, args.workers, args.schedule)
    rows = bench.run_rows(res, problem)
    with _output(args.output) as fh:
        bench.write_csv(rows, fh)
    err = rows[-1]
    _info(args, f"method={method.name} problem={problem.name} N={res.N} h={res.h:.6g} p={res.p} "
                f"evals_per_proc={res.evals_per_processor} {err.metric}={err.value:.6e}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    for N in args.N_list:
        _check_config(N, args.p)
    methods = _methods(args.method)
    problem = _problem(args)
    rows = bench.efficiency_sweep(methods, problem, args.tf, args.N_list, args.p)
    with _output(args.output) as fh:
        bench.write_csv(rows, fh)
    _info(args, f"{len(rows)} rows ({len(methods)} methods x {len(args.N_list)} step counts)")
    return EXIT_OK


def cmd_latency(args) -> int:
    if args.N < 1:
        raise CliError("--N must be positive")
    for p in args.p:
        _check_config(args.N, p, max(args.workers, 1))
    method = _method(args.method)
    problem = _problem(args)
    workers = min(args.workers or method.k, method.k)
    table = latency_sweep(method, problem, args.tf / args.N, args.N, args.p, workers, args.schedule)
    rows = bench.latency_rows(method, problem, table)
    with _output(args.output) as fh:
        bench.write_csv(rows, fh)
    errs = [r.final_error for r in table]
    for r in table:
        _info(args, f"p={r.p:<6d} final_error={r.final_error:.6e} wall={r.wall_time:.3f}s "
                    f"barrier_wait={r.total_barrier_wait:.3f}s")
    _info(args, f"max/min final error = {max(errs) / min(errs):.4g}")
    return EXIT_OK


REPRO_WORKLOADS = {
    "fig_order4": (("psi4-extrap", "psi32s"), (30.0, (750, 1500, 3000, 6000)), (6.28, (157, 314, 628, 1256))),
    "fig_order6": (("psi6-extrap", "psi6-k5-ps9"), (30.0, (300, 600, 1200, 2400)), (6.28, (157, 314, 628, 1256))),
    "fig_order8": (("psi8-extrap", "psi8-k4"), (30.0, (150, 300, 600, 1200)), (6.28, (78, 157, 314, 628))),
}
REPRO_LATENCY = (("psi4-extrap", "psi32s", "psi6-extrap", "psi6-k5-ps9"), 30.0, 3000, (1, 10, 100, 3000))


def cmd_repro(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for fig, (names, kepler_cfg, lv_cfg) in REPRO_WORKLOADS.items():
        methods = [_method(n) for n in names]
        rows = []
        for pname, (t_f, grid) in (("kepler", kepler_cfg), ("lv", lv_cfg)):
            rows += bench.efficiency_sweep(methods, get_problem(pname, args.e), t_f, grid)
        path = outdir / f"{fig}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            bench.write_csv(rows, fh)
        print(f"wrote {path} ({len(rows)} rows)")
    names, t_f, N, ps = REPRO_LATENCY
    problem = get_problem("kepler", args.e)
    rows = []
    for n in names:
        m = _method(n)
        rows += bench.latency_rows(m, problem, latency_sweep(m, problem, t_f / N, N, ps))
    path = outdir / "fig_latency.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        bench.write_csv(rows, fh)
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="genextrap", formatter_class=fmt,
                                     description="Linear combinations of compositions of a second-order scheme.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--method", default="psi4-extrap", help="catalog name or coefficient file")
        sp.add_argument("--problem", default="kepler", choices=["kepler", "lv"])
        sp.add_argument("--e", type=float, default=0.25, help="Kepler eccentricity")
        sp.add_argument("--tf", type=float, default=30.0, help="final time")
        sp.add_argument("--output", default="-", help="CSV path ('-' for stdout)")

    sp = sub.add_parser("list", help="list built-in methods", formatter_class=fmt)
    sp.set_defaults(func=cmd_list)

    sp = sub.add_parser("check", help="verify order conditions or empirical order", formatter_class=fmt)
    sp.add_argument("--method", required=True, help="catalog name or coefficient file")
    sp.add_argument("--problem", default="kepler", choices=["kepler", "lv"],
                    help="problem for the empirical order test (methods with more than 2 stages)")
    sp.add_argument("--e", type=float, default=0.25, help="Kepler eccentricity")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("run", help="integrate once and write drift and error rows", formatter_class=fmt)
    common(sp)
    sp.add_argument("--N", type=int, default=3000, help="number of macro-steps")
    sp.add_argument("--p", type=int, default=1, help="summation period")
    sp.add_argument("--workers", type=int, default=1, help="worker threads (1 = serial engine)")
    sp.add_argument("--schedule", default="round-robin", choices=["round-robin", "longest-first"])
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="efficiency sweep over step counts", formatter_class=fmt)
    common(sp)
    sp.add_argument("--N-list", dest="N_list", type=_int_list, default=[750, 1500, 3000, 6000],
                    help="comma-separated step counts")
    sp.add_argument("--p", type=int, default=1, help="summation period")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("latency", help="final error as a function of the summation period",
                        formatter_class=fmt)
    common(sp)
    sp.add_argument("--N", type=int, default=3000, help="number of macro-steps")
    sp.add_argument("--p", type=_int_list, default=[1, 10, 3000], help="comma-separated summation periods")
    sp.add_argument("--workers", type=int, default=0, help="worker threads (0 = one per branch)")
    sp.add_argument("--schedule", default="round-robin", choices=["round-robin", "longest-first"])
    sp.set_defaults(func=cmd_latency)

    sp = sub.add_parser("repro", help="write the benchmark CSV bundle", formatter_class=fmt)
    sp.add_argument("--outdir", default="repro", help="directory for the CSV files")
    sp.add_argument("--e", type=float, default=0.25, help="Kepler eccentricity")
    sp.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigurationError, MethodFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OverflowError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
