"""Error metrics, empirical order estimation and efficiency sweeps."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass
from typing import Iterable, Sequence

import numpy as np

from .integrator import RunResult, run
from .methods import MethodSpec
from .problems import KeplerProblem, LotkaVolterraProblem, kepler_reference, lv_reference_grid

CSV_HEADER = ("method", "problem", "order", "N", "h", "p", "evals_per_proc", "evals_total",
              "metric", "value")

# Step counts in the asymptotic regime, smallest error >= 100x the roundoff floor.
ORDER_GRIDS = {
    ("kepler", 2): (64, 128, 256, 512),
    ("kepler", 4): (32, 64, 128, 256),
    ("kepler", 6): (16, 32, 64, 128),
    ("kepler", 8): (5, 10, 20, 40),
    ("lv", 2): (40, 80, 160, 320),
    ("lv", 4): (40, 80, 160, 320),
    ("lv", 6): (20, 40, 80, 160),
    ("lv", 8): (10, 20, 40, 80),
}
ORDER_T_FINAL = {"kepler": math.pi, "lv": 6.28}


def trajectory_result(times, states, h: float, p: int = 1, method: str = "trajectory",
                      order: int = 0) -> RunResult:
    """Wrap an externally produced trajectory sampled at ``t = n h``."""
    times = np.asarray(times, dtype=float)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    steps = np.rint(times / h).astype(np.int64) if h else np.arange(len(times))
    N = int(steps[-1])
    return RunResult(method, order, h, N, p, steps, times, states, (), 0)


def _relative(ref, x):
    return np.linalg.norm(ref - x, axis=-1) / np.linalg.norm(x, axis=-1)


def kepler_phase_error(result: RunResult, e: float) -> float:
    """Maximum over the samples of the relative phase-space error."""
    if len(result.times) == 0:
        raise ValueError("result has no samples")
    return float(np.max(_relative(kepler_reference(result.times, e), result.states)))


def lv_tail_error(result: RunResult) -> float:
    """Mean relative error over samples with step index ``n >= floor(0.8 N)``."""
    start = math.floor(0.8 * result.N)
    mask = result.steps >= start
    if not np.any(mask):
        raise ValueError("no samples inside the tail window")
    ref = lv_reference_grid(result.h * result.N, result.N)[result.steps[mask]]
    return float(np.mean(_relative(ref, result.states[mask])))


def error_metric(result: RunResult, problem) -> tuple[str, float]:
    if isinstance(problem, KeplerProblem):
        return "phase_error", kepler_phase_error(result, problem.e)
    if isinstance(problem, LotkaVolterraProblem):
        return "tail_error", lv_tail_error(result)
    raise TypeError(f"no error metric for {problem!r}")


def final_error(result: RunResult, problem) -> float:
    """Relative error of the last sample against the reference."""
    ref = problem.reference_for(result)[-1]
    return float(_relative(ref, result.states[-1]))


def invariant_drift(result: RunResult, problem) -> np.ndarray:
    """Rows ``(t_n, |(C_0 - C(x_n)) / C_0|)``, ``C_0`` taken at the problem's initial state."""
    c = np.asarray(problem.invariant(result.states), dtype=float)
    c0 = float(problem.invariant(problem.initial_state().x))
    return np.column_stack([result.times, np.abs((c0 - c) / c0)])


def drift_slope(series: np.ndarray, fraction: float = 0.5) -> float:
    """Least-squares slope of the drift over the final ``fraction`` of the series."""
    start = int(len(series) * (1 - fraction))
    t, d = series[start:, 0], series[start:, 1]
    return float(np.polyfit(t, d, 1)[0])


def run_problem(method: MethodSpec, problem, t_f: float, N: int, p: int = 1, **kw) -> RunResult:
    return run(method, problem.scheme(), problem.initial_state(), t_f / N, N, p, **kw)


def convergence_errors(method, problem, t_f, N_list, p=1, **kw) -> list[float]:
    return [error_metric(run_problem(method, problem, t_f, N, p, **kw), problem)[1] for N in N_list]


def fit_order(N_list: Sequence[int], errors: Sequence[float], t_f: float = 1.0) -> float:
    h = t_f / np.asarray(N_list, dtype=float)
    return float(np.polyfit(np.log(h), np.log(np.asarray(errors, dtype=float)), 1)[0])


def empirical_order(method: MethodSpec, problem, t_f: float, N_list: Sequence[int], p: int = 1) -> float:
    """Least-squares slope of log(error) against log(h)."""
    if len(N_list) < 4:
        raise ValueError("need at least four step counts")
    return fit_order(N_list, convergence_errors(method, problem, t_f, N_list, p), t_f)


def order_within_tolerance(design_order: int, slope: float, tol: float = 0.3) -> bool:
    """Design order 8 and above only needs a lower bound: extrapolation shows super-order."""
    if design_order >= 8:
        return slope >= design_order - 0.5
    return abs(slope - design_order) <= tol


def default_order_grid(problem, order: int) -> tuple[int, ...]:
    return ORDER_GRIDS[(problem.name, min(max(order, 2), 8))]


@dataclass(frozen=True)
class Row:
    method: str
    problem: str
    order: int
    N: int
    h: float
    p: int
    evals_per_proc: int
    evals_total: int
    metric: str
    value: float


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(rows: Iterable[Row], out=None) -> str | None:
    """Write rows in the benchmark CSV format; returns the text if ``out`` is None."""
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(v) for v in astuple(r)])
    return buf.getvalue() if out is None else None


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def _row(result: RunResult, problem, metric, value, order=None) -> Row:
    return Row(result.method, problem.name, result.order if order is None else order, result.N,
               float(result.h), result.p, result.evals_per_processor, result.evals_total,
               metric, float(value))


def run_rows(result: RunResult, problem) -> list[Row]:
    """One drift row per sample followed by the problem's error metric."""
    drift_name = "energy_drift" if problem.name == "kepler" else "invariant_drift"
    rows = [_row(result, problem, f"{drift_name}@t={_fmt(float(t))}", d)
            for t, d in invariant_drift(result, problem)]
    name, value = error_metric(result, problem)
    rows.append(_row(result, problem, name, value))
    return rows


def efficiency_sweep(methods: Sequence[MethodSpec], problem, t_f: float,
                     N_list: Sequence[int], p: int = 1) -> list[Row]:
    """One row per (method, N) with the error metric appropriate to ``problem``."""
    rows = []
    for m in methods:
        for N in N_list:
            res = run_problem(m, problem, t_f, N, p)
            name, value = error_metric(res, problem)
            rows.append(_row(res, problem, name, value))
    return rows


def latency_rows(method: MethodSpec, problem, latency) -> list[Row]:
    return [_row(r.result, problem, "final_error", r.final_error) for r in latency]

