"""Benchmark problems: planar Kepler motion and the Lotka-Volterra system.

Each problem provides its basic time-symmetric second-order scheme, the
initial condition used in the experiments, its conserved quantity and a
reference solution.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import DivergenceError, ReferenceSolverError, SingularityError
from .integrator import BasicScheme, State, run

# --------------------------------------------------------------------------
# Kepler


class KeplerScheme(BasicScheme):
    """Drift-kick-drift Stormer-Verlet for ``H = |p|^2/2 - mu/|q|``.

    State layout is ``(q1, q2, p1, p2)``.  One force evaluation per call.
    """

    dim = 4

    def __init__(self, mu: float = 1.0):
        super().__init__()
        self.mu = float(mu)

    def _force(self, q1, q2):
        r2 = q1 * q1 + q2 * q2
        if r2 == 0.0:
            raise SingularityError("Kepler force evaluated at r = 0")
        k = -self.mu / (r2 * math.sqrt(r2))
        return k * q1, k * q2

    def _increment(self, x, h):
        q1, q2, p1, p2 = (float(v) for v in x)
        hh = 0.5 * h
        f1, f2 = self._force(q1 + hh * p1, q2 + hh * p2)
        dp1 = h * f1
        dp2 = h * f2
        dq1 = h * (p1 + 0.5 * dp1)
        dq2 = h * (p2 + 0.5 * dp2)
        return np.array([dq1, dq2, dp1, dp2])

    def _step(self, x, h):
        q1, q2, p1, p2 = (float(v) for v in x)
        hh = 0.5 * h
        q1 += hh * p1
        q2 += hh * p2
        f1, f2 = self._force(q1, q2)
        p1 += h * f1
        p2 += h * f2
        q1 += hh * p1
        q2 += hh * p2
        return np.array([q1, q2, p1, p2])


def kepler_initial_state(e: float) -> np.ndarray:
    return np.array([1.0 - e, 0.0, 0.0, math.sqrt((1.0 + e) / (1.0 - e))])


def kepler_energy(x, mu: float = 1.0):
    x = np.asarray(x, dtype=float)
    q1, q2, p1, p2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return 0.5 * (p1 * p1 + p2 * p2) - mu / np.hypot(q1, q2)


def solve_kepler_equation(M, e: float, tol: float = 1e-14, max_iter: int = 50):
    """Eccentric anomaly ``E`` with ``E - e sin E = M`` by Newton's method.

    ``M`` is reduced to ``[-pi, pi)`` first so the residual tolerance is
    meaningful for large times; the returned ``E`` belongs to the reduced
    mean anomaly.
    """
    M = np.asarray(M, dtype=float)
    Mr = np.remainder(M + math.pi, 2 * math.pi) - math.pi
    E = Mr.copy()
    for _ in range(max_iter):
        res = E - e * np.sin(E) - Mr
        if np.all(np.abs(res) <= tol):
            return E
        E = E - res / (1.0 - e * np.cos(E))
    res = E - e * np.sin(E) - Mr
    if np.all(np.abs(res) <= tol):
        return E
    raise ReferenceSolverError(f"Kepler equation did not converge (max residual {np.max(np.abs(res)):.3e})")


def kepler_reference(t, e: float) -> np.ndarray:
    """Exact state at time(s) ``t`` for the unit-semi-major-axis orbit, ``mu = 1``.

    Returns shape ``(4,)`` for scalar ``t`` and ``(len(t), 4)`` otherwise.
    """
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must lie in [0, 1), got {e}")
    scalar = np.ndim(t) == 0
    E = np.atleast_1d(solve_kepler_equation(t, e))
    c, s = np.cos(E), np.sin(E)
    beta = math.sqrt(1.0 - e * e)
    denom = 1.0 - e * c
    out = np.column_stack([c - e, beta * s, -s / denom, beta * c / denom])
    return out[0] if scalar else out


class KeplerProblem:
    name = "kepler"
    invariant_name = "energy"

    def __init__(self, e: float = 0.25, mu: float = 1.0):
        if not 0.0 <= e < 1.0:
            raise ValueError(f"eccentricity must lie in [0, 1), got {e}")
        self.e = float(e)
        self.mu = float(mu)

    def scheme(self) -> KeplerScheme:
        return KeplerScheme(self.mu)

    def initial_state(self) -> State:
        return State(kepler_initial_state(self.e), 0.0)

    def invariant(self, x):
        return kepler_energy(x, self.mu)

    def reference(self, times) -> np.ndarray:
        if self.mu != 1.0:
            raise ReferenceSolverError("closed-form reference assumes mu = 1")
        return kepler_reference(times, self.e)

    def reference_for(self, result) -> np.ndarray:
        return self.reference(result.times)


# --------------------------------------------------------------------------
# Lotka-Volterra


def _exp(z):
    try:
        return math.exp(z)
    except OverflowError:
        raise DivergenceError("overflow in Lotka-Volterra flow") from None


def lv_flow_a(x, h):
    u, v = x
    return np.array([u * _exp(h * (v - 2.0)), v])


def lv_flow_b(x, h):
    u, v = x
    return np.array([u, v * _exp(h * (1.0 - u))])


class LotkaVolterraScheme(BasicScheme):
    """Symmetric splitting ``A(h/2) B(h) A(h/2)`` of ``u' = u(v-2), v' = v(1-u)``.

    Both sub-flows are exact.  The increment is the generic ``S(x) - x``.
    """

    dim = 2

    def _step(self, x, h):
        u, v = (float(c) for c in x)
        u = u * _exp(0.5 * h * (v - 2.0))
        v = v * _exp(h * (1.0 - u))
        u = u * _exp(0.5 * h * (v - 2.0))
        return np.array([u, v])

    def _increment(self, x, h):
        return self._step(x, h) - np.asarray(x, dtype=float)


def lv_invariant(x):
    x = np.asarray(x, dtype=float)
    u, v = x[..., 0], x[..., 1]
    return np.log(u) - u + 2.0 * np.log(v) - v


LV_REF_MAX_STEP = 0.02
LV_REF_TOL = 1e-12
LV_REF_MAX_LEVELS = 8


@lru_cache(maxsize=32)
def _lv_reference_grid(t_f: float, n_out: int) -> np.ndarray:
    from .methods import get_method

    method = get_method("psi8-extrap")
    x0 = State(np.array([1.0, 1.0]))
    if n_out == 0 or t_f == 0.0:
        return np.tile(x0.x, (n_out + 1, 1))
    h_out = t_f / n_out
    s = max(1, math.ceil(abs(h_out) / LV_REF_MAX_STEP))

    def sample(sub):
        res = run(method, LotkaVolterraScheme(), x0, t_f / (n_out * sub), n_out * sub)
        return res.states[::sub]

    prev = sample(s)
    last = math.inf
    for _ in range(LV_REF_MAX_LEVELS):
        s *= 2
        cur = sample(s)
        diff = float(np.max(np.linalg.norm(cur - prev, axis=1)))
        if diff <= LV_REF_TOL:
            cur.setflags(write=False)
            return cur
        if diff >= last:
            # refinement no longer helps: accumulated roundoff dominates
            break
        last = diff
        prev = cur
    raise ReferenceSolverError(f"Lotka-Volterra reference did not reach {LV_REF_TOL} (last diff {diff:.3e})")


def lv_reference_grid(t_f: float, n_out: int) -> np.ndarray:
    """Reference states at ``t_f * n / n_out`` for ``n = 0..n_out``.

    Computed with the order-8 harmonic extrapolation method, refining the
    sub-step count until two successive refinements agree to ``1e-12``.
    Results are cached.
    """
    return _lv_reference_grid(float(t_f), int(n_out))


def lv_reference(t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be non-negative")
    return lv_reference_grid(t, 1)[-1].copy()


class LotkaVolterraProblem:
    name = "lv"
    invariant_name = "first_integral"

    def scheme(self) -> LotkaVolterraScheme:
        return LotkaVolterraScheme()

    def initial_state(self) -> State:
        return State(np.array([1.0, 1.0]), 0.0)

    def invariant(self, x):
        return lv_invariant(x)

    def reference_for(self, result) -> np.ndarray:
        grid = lv_reference_grid(result.h * result.N, result.N)
        return grid[result.steps]


def get_problem(name: str, e: float = 0.25):
    if name == "kepler":
        return KeplerProblem(e)
    if name in ("lv", "lotka-volterra"):
        return LotkaVolterraProblem()
    raise KeyError(f"unknown problem {name!r}; known: kepler, lv")
