"""Stepping engine for linear combinations of compositions.

Every branch (term) is advanced in increment form: the branch keeps the
displacement ``delta`` from a shared anchor state and each stage evaluates
the basic scheme at ``anchor + delta``.  Branches are combined every ``p``
macro-steps as ``anchor + sum_i b_i delta_i``; in between they are internal
and never reported.
"""
from __future__ import annotations

import abc
import copy
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .methods import MethodSpec

Observer = Callable[[float, np.ndarray, tuple], None]

INCREMENT = "increment"
NAIVE = "naive"


@dataclass(frozen=True)
class State:
    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 1:
            raise ValueError("state vector must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise ValueError("state vector must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def dim(self) -> int:
        return self.x.shape[0]


@dataclass
class BranchState:
    base: State
    delta: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.base.x + self.delta


class BasicScheme(abc.ABC):
    """A time-symmetric second-order one-step map written as an increment.

    Subclasses implement :meth:`increment`; :meth:`step` (the plain map
    ``x -> S_h(x)``) defaults to ``x + increment(x, h)`` and may be overridden
    by schemes that have a natural direct form.  ``n_evals`` counts calls to
    either; use :meth:`clone` to give each worker its own counter.
    """

    dim: int = 0

    def __init__(self):
        self.n_evals = 0

    @abc.abstractmethod
    def _increment(self, x: np.ndarray, h: float) -> np.ndarray:
        ...

    def _step(self, x: np.ndarray, h: float) -> np.ndarray:
        return x + self._increment(x, h)

    def increment(self, x, h: float) -> np.ndarray:
        self.n_evals += 1
        return self._increment(x, h)

    def step(self, x, h: float) -> np.ndarray:
        self.n_evals += 1
        return self._step(x, h)

    def clone(self) -> "BasicScheme":
        other = copy.copy(self)
        other.n_evals = 0
        return other


def _check_finite(v, **where):
    if not np.all(np.isfinite(v)):
        raise DivergenceError("non-finite value", **where)


def compose_increment(scheme: BasicScheme, stages: Sequence[float], anchor: State,
                      carried, h: float) -> np.ndarray:
    """Apply the stages in order, accumulating the displacement from ``anchor``.

    Stage ``j`` evaluates the scheme at ``anchor.x + delta`` with sub-step
    ``stages[j] * h``.  Returns a new array; ``carried`` is not modified.
    """
    if len(stages) == 0:
        raise ValueError("stages must be nonempty")
    x0 = anchor.x
    delta = np.array(carried, dtype=float)
    for j, a in enumerate(stages):
        try:
            d = scheme.increment(x0 + delta, a * h)
        except DivergenceError as exc:
            raise exc.tagged(stage=j) from None
        delta = delta + d
        _check_finite(delta, stage=j)
    return delta


def compose_state(scheme: BasicScheme, stages: Sequence[float], x, h: float) -> np.ndarray:
    """Plain composition ``S_{a_m h} o ... o S_{a_1 h}(x)`` on full states."""
    y = np.array(x, dtype=float)
    for j, a in enumerate(stages):
        try:
            y = scheme.step(y, a * h)
        except DivergenceError as exc:
            raise exc.tagged(stage=j) from None
        _check_finite(y, stage=j)
    return y


def reduce_weighted(weights: Sequence[float], vectors: Sequence[np.ndarray],
                    compensated: bool = True) -> np.ndarray:
    """``sum_i b_i v_i`` accumulated in ascending index order.

    With ``compensated`` the running sum carries a Kahan correction term.
    The order of operations is fixed so results are reproducible bitwise.
    """
    total = np.zeros_like(vectors[0], dtype=float)
    if not compensated:
        for b, v in zip(weights, vectors):
            total = total + b * v
        return total
    c = np.zeros_like(total)
    for b, v in zip(weights, vectors):
        y = b * v - c
        s = total + y
        c = (s - total) - y
        total = s
    return total


def advance_branch(scheme: BasicScheme, stages: Sequence[float], anchor: State,
                   delta, h: float, steps: int, mode: str = INCREMENT) -> np.ndarray:
    """Advance one branch ``steps`` macro-steps from the anchor.

    In ``increment`` mode the return value is the branch displacement from
    ``anchor.x``; in ``naive`` mode ``delta`` is ignored on entry and the full
    branch state is returned.
    """
    if mode == INCREMENT:
        for n in range(steps):
            try:
                delta = compose_increment(scheme, stages, anchor, delta, h)
            except DivergenceError as exc:
                raise exc.tagged(step=n) from None
        return delta
    if mode == NAIVE:
        y = anchor.x
        for n in range(steps):
            try:
                y = compose_state(scheme, stages, y, h)
            except DivergenceError as exc:
                raise exc.tagged(step=n) from None
        return y
    raise ValueError(f"unknown summation mode {mode!r}")


def combine(method: MethodSpec, anchor: State, branch_out: Sequence[np.ndarray],
            compensated: bool = True, mode: str = INCREMENT) -> np.ndarray:
    """Form the combined state from per-branch results (see advance_branch)."""
    reduced = reduce_weighted(method.weights, branch_out, compensated)
    if mode == INCREMENT:
        return anchor.x + reduced
    return reduced


def step_combined(method: MethodSpec, scheme: BasicScheme, state: State, h: float,
                  compensated: bool = True) -> State:
    deltas = []
    zero = np.zeros_like(state.x)
    for i, term in enumerate(method.terms):
        try:
            deltas.append(compose_increment(scheme, term.stages, state, zero, h))
        except DivergenceError as exc:
            raise exc.tagged(branch=i) from None
    x = combine(method, state, deltas, compensated)
    return State(x, state.t + h)


@dataclass
class RunResult:
    """Trajectory at summation points plus evaluation accounting.

    ``steps[n]`` is the macro-step index of ``states[n]``; samples exist only
    at multiples of ``p`` (the initial state is sample 0).
    """

    method: str
    order: int
    h: float
    N: int
    p: int
    steps: np.ndarray
    times: np.ndarray
    states: np.ndarray
    evals_per_branch: tuple[int, ...]
    evals_per_processor: int
    wall_time: Optional[float] = None
    worker_wall_times: Optional[tuple[float, ...]] = None
    worker_barrier_waits: Optional[tuple[float, ...]] = None
    worker_evals: Optional[tuple[int, ...]] = None
    extra: dict = field(default_factory=dict)

    @property
    def evals_total(self) -> int:
        return sum(self.evals_per_branch)

    @property
    def final(self) -> State:
        return State(self.states[-1], self.times[-1])

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.states))

    def __len__(self):
        return len(self.times)


def validate_run(N: int, p: int, h: float):
    if isinstance(N, bool) or int(N) != N or N < 0:
        raise ConfigurationError(f"N must be a non-negative integer, got {N!r}")
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise ConfigurationError(f"p must be a positive integer, got {p!r}")
    if N % p != 0:
        raise ConfigurationError(f"N={N} is not divisible by p={p}")
    if not math.isfinite(h):
        raise ConfigurationError(f"step size must be finite, got {h!r}")


def _result(method, h, N, p, steps, times, states, wall, **kw) -> RunResult:
    return RunResult(
        method=method.name,
        order=method.order,
        h=h,
        N=N,
        p=p,
        steps=np.asarray(steps, dtype=np.int64),
        times=np.asarray(times, dtype=float),
        states=np.vstack(states),
        evals_per_branch=tuple(N * m for m in method.stage_counts),
        evals_per_processor=N * method.max_stages,
        wall_time=wall,
        **kw,
    )


def run(method: MethodSpec, scheme: BasicScheme, x0, h: float, N: int, p: int = 1,
        observer: Observer | None = None, *, compensated: bool = True,
        mode: str = INCREMENT) -> RunResult:
    """Integrate ``N`` macro-steps, combining the branches every ``p`` steps.

    ``mode="naive"`` propagates full branch states and sums them directly;
    it exists only to measure what the increment formulation buys.
    """
    validate_run(N, p, h)
    anchor = x0 if isinstance(x0, State) else State(x0)
    t0 = anchor.t
    steps, times, states = [0], [t0], [anchor.x]
    evals = tuple(0 for _ in method.terms)
    if observer is not None:
        observer(t0, anchor.x, evals)
    start = time.perf_counter()
    zero = np.zeros_like(anchor.x)
    for blk in range(N // p):
        outs = []
        for i, term in enumerate(method.terms):
            try:
                outs.append(advance_branch(scheme, term.stages, anchor, zero, h, p, mode))
            except DivergenceError as exc:
                raise exc.tagged(branch=i, step=blk * p + (exc.step or 0)) from None
        n = (blk + 1) * p
        anchor = State(combine(method, anchor, outs, compensated, mode), t0 + n * h)
        steps.append(n)
        times.append(anchor.t)
        states.append(anchor.x)
        if observer is not None:
            observer(anchor.t, anchor.x, tuple(n * m for m in method.stage_counts))
    return _result(method, h, N, p, steps, times, states, time.perf_counter() - start)
