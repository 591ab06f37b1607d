"""Thread-parallel execution of the branches of a linear combination.

Workers own a fixed subset of branches and a private clone of the basic
scheme.  Every ``p`` macro-steps all workers meet at a barrier, the main
thread reduces the branch increments in ascending branch order (the same
code path as the serial engine) and publishes the new anchor.  The result
is therefore bitwise identical to :func:`genextrap.integrator.run`.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, WorkerError
from .integrator import INCREMENT, State, _result, advance_branch, combine, validate_run
from .methods import MethodSpec


@dataclass(frozen=True)
class ParallelPlan:
    workers: int
    schedule: tuple[tuple[int, ...], ...]
    p: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if len(self.schedule) != self.workers:
            raise ConfigurationError(f"schedule has {len(self.schedule)} entries for {self.workers} workers")
        if self.p < 1:
            raise ConfigurationError("p must be >= 1")

    def validate_for(self, method: MethodSpec):
        assigned = sorted(i for group in self.schedule for i in group)
        if assigned != list(range(method.k)):
            raise ConfigurationError(
                f"schedule {self.schedule} must assign each of the {method.k} branches exactly once")
        if self.workers > method.k:
            raise ConfigurationError(f"{self.workers} workers for only {method.k} branches")

    @classmethod
    def round_robin(cls, method: MethodSpec, workers: int | None = None, p: int = 1) -> "ParallelPlan":
        workers = method.k if workers is None else workers
        _check_workers(method, workers)
        return cls(workers, tuple(tuple(range(w, method.k, workers)) for w in range(workers)), p)

    @classmethod
    def longest_first(cls, method: MethodSpec, workers: int | None = None, p: int = 1) -> "ParallelPlan":
        """Greedy assignment of the longest remaining branch to the least loaded worker."""
        workers = method.k if workers is None else workers
        _check_workers(method, workers)
        groups = [[] for _ in range(workers)]
        load = [0] * workers
        order = sorted(range(method.k), key=lambda i: (-method.terms[i].m, i))
        for i in order:
            w = min(range(workers), key=lambda j: (load[j], j))
            groups[w].append(i)
            load[w] += method.terms[i].m
        return cls(workers, tuple(tuple(sorted(g)) for g in groups), p)

    @classmethod
    def make(cls, method, workers=None, p=1, schedule="round-robin") -> "ParallelPlan":
        if schedule in ("round-robin", "round_robin"):
            return cls.round_robin(method, workers, p)
        if schedule in ("longest-first", "longest_first"):
            return cls.longest_first(method, workers, p)
        raise ConfigurationError(f"unknown schedule {schedule!r}")


def _check_workers(method, workers):
    if workers < 1 or workers > method.k:
        raise ConfigurationError(f"workers must lie in 1..{method.k}, got {workers}")


class _Abort(Exception):
    pass


def run_parallel(method: MethodSpec, scheme, x0, h: float, N: int, plan: ParallelPlan,
                 observer=None, *, compensated: bool = True):
    """Parallel counterpart of :func:`genextrap.integrator.run`.

    The returned result additionally carries per-worker wall-clock time,
    barrier-wait time and basic-scheme evaluation counts.
    """
    p = plan.p
    validate_run(N, p, h)
    plan.validate_for(method)
    anchor = x0 if isinstance(x0, State) else State(x0)
    t0 = anchor.t
    nblocks = N // p
    k = method.k
    zero = np.zeros_like(anchor.x)

    shared = {"anchor": anchor, "stop": False}
    outs: list = [None] * k
    failures: list = []
    start_bar = threading.Barrier(plan.workers + 1)
    end_bar = threading.Barrier(plan.workers + 1)
    wall = [0.0] * plan.workers
    waits = [0.0] * plan.workers
    evals = [0] * plan.workers

    def worker(w, branches):
        sch = scheme.clone()
        began = time.perf_counter()
        try:
            for blk in range(nblocks):
                t = time.perf_counter()
                start_bar.wait()
                waits[w] += time.perf_counter() - t
                if shared["stop"]:
                    return
                base = shared["anchor"]
                for i in branches:
                    try:
                        outs[i] = advance_branch(sch, method.terms[i].stages, base, zero, h, p, INCREMENT)
                    except DivergenceError as exc:
                        failures.append((i, exc.tagged(branch=i, step=blk * p + (exc.step or 0))))
                        break
                    except Exception as exc:  # noqa: BLE001 - reported with the branch index
                        failures.append((i, exc))
                        break
                t = time.perf_counter()
                end_bar.wait()
                waits[w] += time.perf_counter() - t
        except threading.BrokenBarrierError:
            pass
        finally:
            wall[w] = time.perf_counter() - began
            evals[w] = sch.n_evals

    threads = [threading.Thread(target=worker, args=(w, plan.schedule[w]), daemon=True,
                                name=f"branch-worker-{w}")
               for w in range(plan.workers)]
    steps, times, states = [0], [t0], [anchor.x]
    if observer is not None:
        observer(t0, anchor.x, tuple(0 for _ in range(k)))
    started = time.perf_counter()
    for th in threads:
        th.start()
    try:
        for blk in range(nblocks):
            start_bar.wait()
            end_bar.wait()
            if failures:
                raise _Abort
            n = (blk + 1) * p
            anchor = State(combine(method, anchor, outs, compensated), t0 + n * h)
            shared["anchor"] = anchor
            steps.append(n)
            times.append(anchor.t)
            states.append(anchor.x)
            if observer is not None:
                observer(anchor.t, anchor.x, tuple(n * m for m in method.stage_counts))
    except _Abort:
        shared["stop"] = True
        start_bar.abort()
        end_bar.abort()
        for th in threads:
            th.join()
        branch, exc = min(failures, key=lambda f: f[0])
        if isinstance(exc, DivergenceError):
            raise exc
        raise WorkerError(f"worker failed: {exc!r}", branch=branch) from exc
    for th in threads:
        th.join()
    elapsed = time.perf_counter() - started
    return _result(method, h, N, p, steps, times, states, elapsed,
                   worker_wall_times=tuple(wall), worker_barrier_waits=tuple(waits),
                   worker_evals=tuple(evals),
                   extra={"schedule": plan.schedule})


@dataclass(frozen=True)
class LatencyRow:
    p: int
    final_error: float
    wall_time: float
    barrier_waits: tuple[float, ...]
    result: object = None

    @property
    def total_barrier_wait(self) -> float:
        return float(sum(self.barrier_waits))


def latency_sweep(method: MethodSpec, problem, h: float, N: int, p_values: Sequence[int],
                  workers: int | None = None, schedule: str = "round-robin",
                  x0: State | None = None) -> list[LatencyRow]:
    """One parallel run per summation period ``p``, scored by the final error."""
    from .bench import final_error

    for p in p_values:
        validate_run(N, p, h)
    x0 = problem.initial_state() if x0 is None else x0
    rows = []
    for p in p_values:
        plan = ParallelPlan.make(method, workers, p, schedule)
        res = run_parallel(method, problem.scheme(), x0, h, N, plan)
        rows.append(LatencyRow(p, final_error(res, problem), res.wall_time,
                               res.worker_barrier_waits, res))
    return rows
