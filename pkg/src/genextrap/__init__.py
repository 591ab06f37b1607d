"""Generalized extrapolation: linear combinations of compositions of a
time-symmetric second-order scheme, with delayed (low-latency) summation."""

from .errors import (ConfigurationError, DivergenceError, InvalidSequenceError, MethodFormatError,
                     ReferenceSolverError, SingularityError, UnsupportedShapeError, WorkerError)
from .integrator import BasicScheme, BranchState, RunResult, State, compose_increment, run, step_combined
from .methods import (MethodSpec, OrderConditionReport, StepSequence, Term, WPolynomials,
                      builtin_catalog, check_order4_conditions, efficiency, get_method,
                      leading_error_constant, load_method, mpe_method, mpe_weights, w_polynomials)
from .parallel import ParallelPlan, latency_sweep, run_parallel
from .problems import KeplerProblem, LotkaVolterraProblem, get_problem

__version__ = "0.1.0"
