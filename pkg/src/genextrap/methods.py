"""Coefficient algebra for linear combinations of compositions.

A method is a weighted sum of ``k`` terms, each term being a composition of
the basic second-order map at fractional sub-steps ``a_ij * h``:

    psi_h = sum_i b_i * S_{a_i,m h} o ... o S_{a_i,1 h}

Stage vectors are stored in application order (the first entry is applied
first).  Multi-product expansions (MPEs) are the special case where term
``i`` applies ``m_i`` equal sub-steps ``1/m_i``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .errors import InvalidSequenceError, MethodFormatError, UnsupportedShapeError

CONSISTENCY_TOL = 1e-12
FILE_TOL = 1e-9
RESIDUAL_TOL = 1e-10

_BULIRSCH_HEAD = (1, 2, 3, 4, 6, 8)


@dataclass(frozen=True)
class StepSequence:
    """Strictly increasing sub-step counts ``m_1 < m_2 < ...``."""

    m: tuple[int, ...]

    def __post_init__(self):
        m = tuple(self.m)
        if not m:
            raise InvalidSequenceError("step sequence is empty")
        for v in m:
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise InvalidSequenceError(f"sub-step counts must be positive integers, got {v!r}")
        m = tuple(int(v) for v in m)
        if len(set(m)) != len(m):
            raise InvalidSequenceError(f"duplicate entries in step sequence {m}")
        if any(b <= a for a, b in zip(m, m[1:])):
            raise InvalidSequenceError(f"step sequence must be strictly increasing: {m}")
        object.__setattr__(self, "m", m)

    def __len__(self):
        return len(self.m)

    def __iter__(self):
        return iter(self.m)

    @property
    def r(self) -> int:
        return len(self.m)

    @classmethod
    def harmonic(cls, r: int) -> "StepSequence":
        return cls(tuple(range(1, r + 1)))

    @classmethod
    def romberg(cls, r: int) -> "StepSequence":
        return cls(tuple(2 ** i for i in range(r)))

    @classmethod
    def bulirsch(cls, r: int) -> "StepSequence":
        # 1, 2, 3, 4, 6, 8, 12, 16, 24, 32, ...: each entry is twice the one two places back
        seq = list(_BULIRSCH_HEAD[:r])
        while len(seq) < r:
            seq.append(2 * seq[-2])
        return cls(tuple(seq))

    @classmethod
    def named(cls, name: str, r: int) -> "StepSequence":
        try:
            return {"harmonic": cls.harmonic, "romberg": cls.romberg,
                    "bulirsch": cls.bulirsch}[name](r)
        except KeyError:
            raise InvalidSequenceError(f"unknown sequence {name!r}") from None


def _as_sequence(seq) -> StepSequence:
    return seq if isinstance(seq, StepSequence) else StepSequence(tuple(seq))


@dataclass(frozen=True)
class Term:
    b: float
    stages: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class MethodSpec:
    """A linear combination of compositions of the basic scheme.

    ``order`` is the design order; ``pseudo_symplectic_order`` is set for
    methods that additionally preserve symplecticity to a higher order.
    Construction validates consistency (weights and each stage vector sum
    to one) to within ``tol``.
    """

    name: str
    order: int
    terms: tuple[Term, ...]
    pseudo_symplectic_order: int | None = None
    tol: float = field(default=CONSISTENCY_TOL, compare=False, repr=False)

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(float(t[0]), tuple(map(float, t[1])))
                      for t in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError(f"method {self.name!r} has no terms")
        if self.order < 1:
            raise ValueError(f"method {self.name!r}: order must be positive")
        for i, t in enumerate(terms):
            if not t.stages:
                raise ValueError(f"method {self.name!r}: term {i} has no stages")
            s = math.fsum(t.stages)
            if abs(s - 1.0) > self.tol:
                raise ValueError(f"method {self.name!r}: stages of term {i} sum to {s!r}")
        s = math.fsum(self.weights)
        if abs(s - 1.0) > self.tol:
            raise ValueError(f"method {self.name!r}: weights sum to {s!r}")

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(t.b for t in self.terms)

    @property
    def k(self) -> int:
        return len(self.terms)

    @property
    def stage_counts(self) -> tuple[int, ...]:
        return tuple(t.m for t in self.terms)

    @property
    def max_stages(self) -> int:
        return max(self.stage_counts)

    @property
    def total_stages(self) -> int:
        return sum(self.stage_counts)

    def renamed(self, name: str) -> "MethodSpec":
        return MethodSpec(name, self.order, self.terms, self.pseudo_symplectic_order, self.tol)


# --------------------------------------------------------------------------
# Multi-product expansions

def mpe_weights_exact(seq) -> list[Fraction]:
    """Exact MPE weights ``b_i = prod_{j != i} m_i^2 / (m_i^2 - m_j^2)``."""
    m = _as_sequence(seq).m
    out = []
    for i, mi in enumerate(m):
        b = Fraction(1)
        for j, mj in enumerate(m):
            if j != i:
                b *= Fraction(mi * mi, mi * mi - mj * mj)
        out.append(b)
    return out


def mpe_weights(seq) -> list[float]:
    return [float(b) for b in mpe_weights_exact(seq)]


def mpe_method(seq, name: str | None = None) -> MethodSpec:
    seq = _as_sequence(seq)
    terms = tuple(Term(b, (1.0 / mi,) * mi) for b, mi in zip(mpe_weights(seq), seq.m))
    if name is None:
        name = "mpe-" + "-".join(map(str, seq.m))
    return MethodSpec(name, 2 * seq.r, terms)


def leading_error_constant_exact(seq) -> Fraction:
    seq = _as_sequence(seq)
    g = Fraction((-1) ** (seq.r - 1))
    for mj in seq.m:
        g /= mj * mj
    return g


def leading_error_constant(seq) -> float:
    """Closed-form coefficient of the ``h^(2r+1)`` local error term of an MPE."""
    return float(leading_error_constant_exact(seq))


def moment_sums_exact(seq, powers: Iterable[int]) -> list[Fraction]:
    """``G_s = sum_i b_i / m_i^s`` evaluated exactly for each requested ``s``."""
    seq = _as_sequence(seq)
    b = mpe_weights_exact(seq)
    return [sum((bi / Fraction(mi) ** s for bi, mi in zip(b, seq.m)), Fraction(0))
            for s in powers]


def efficiency(seq, eval_model: str = "serial") -> float:
    """``E_f = n_s * |G_2r|^(1/2r)``; smaller is better at equal order.

    ``serial`` counts every basic-map evaluation; ``parallel`` counts the
    evaluations of the busiest processor.
    """
    seq = _as_sequence(seq)
    if eval_model == "serial":
        n_s = sum(seq.m)
    elif eval_model == "parallel":
        n_s = max(seq.m)
    else:
        raise ValueError(f"unknown eval model {eval_model!r}")
    return n_s * abs(leading_error_constant(seq)) ** (1.0 / (2 * seq.r))


# --------------------------------------------------------------------------
# Order conditions of two-stage compositions

@dataclass(frozen=True)
class WPolynomials:
    w31: float
    w41: float
    w51: float
    w52: float


def w_polynomials(a: float) -> WPolynomials:
    """Error-coefficient polynomials of the composition ``S_{(1-a)h} o S_{ah}``."""
    w31 = (1 - a) ** 3 + a ** 3
    w41 = a * (2 * a - 1) * (1 - a) / 2
    w51 = (1 - a) ** 5 + a ** 5
    w52 = a * (2 * a - 1) ** 2 * (a - 1) / 12 + w31 / 24
    return WPolynomials(w31, w41, w51, w52)


@dataclass(frozen=True)
class OrderConditionReport:
    g00: float
    g31: float
    g41: float
    g51: float
    g52: float
    gt63: float
    gt75: float

    def order4_residual(self) -> float:
        return max(abs(self.g00 - 1.0), abs(self.g31), abs(self.g41))

    def pseudo_symplectic7_residual(self) -> float:
        return max(abs(self.gt63), abs(self.gt75))

    def passes(self, pseudo_symplectic_order=None, tol: float = RESIDUAL_TOL) -> bool:
        ok = self.order4_residual() <= tol
        if pseudo_symplectic_order is not None and pseudo_symplectic_order >= 7:
            ok = ok and self.pseudo_symplectic7_residual() <= tol
        return ok

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("g00", "g31", "g41", "g51", "g52", "gt63", "gt75")}


def _two_stage_parameter(term: Term, index: int) -> float:
    if term.m == 1:
        return 1.0
    if term.m == 2:
        return term.stages[0]
    raise UnsupportedShapeError(
        f"term {index} has {term.m} stages; order conditions are only available for 1- or 2-stage terms")


def check_order4_conditions(method: MethodSpec) -> OrderConditionReport:
    """Evaluate the weighted w-polynomial sums for a method with m <= 2."""
    params = [_two_stage_parameter(t, i) for i, t in enumerate(method.terms)]
    acc = {k: [] for k in ("g00", "g31", "g41", "g51", "g52", "gt63", "gt75")}
    for t, a in zip(method.terms, params):
        w = w_polynomials(a)
        b = t.b
        acc["g00"].append(b)
        acc["g31"].append(b * w.w31)
        acc["g41"].append(b * w.w41)
        acc["g51"].append(b * w.w51)
        acc["g52"].append(b * w.w52)
        acc["gt63"].append(b * w.w31 * w.w31)
        acc["gt75"].append(b * w.w31 * w.w41)
    return OrderConditionReport(**{k: math.fsum(v) for k, v in acc.items()})


# --------------------------------------------------------------------------
# Built-in catalog

def basic_method() -> MethodSpec:
    return MethodSpec("basic", 2, (Term(1.0, (1.0,)),))


def _two_stage(name, a, b_head, psorder):
    b = list(b_head) + [1 - sum(b_head)]
    terms = tuple(Term(bi, (ai, 1 - ai)) for ai, bi in zip(a, b))
    return MethodSpec(name, 4, terms, psorder)


def _palindromic3(name, a, b_head, order, psorder):
    b = list(b_head) + [1 - sum(b_head)]
    terms = tuple(Term(bi, (ai, 1 - 2 * ai, ai)) for ai, bi in zip(a, b))
    return MethodSpec(name, order, terms, psorder)


def _symmetric5(name, a, b_head, order, psorder=None):
    b = list(b_head) + [1 - sum(b_head)]
    terms = tuple(Term(bi, (a1, a2, 1 - 2 * a1 - 2 * a2, a2, a1)) for (a1, a2), bi in zip(a, b))
    return MethodSpec(name, order, terms, psorder)


def _psi32s() -> MethodSpec:
    return _two_stage(
        "psi32s",
        a=(-0.19220568886474299, 0.7952090547057717, 0.615),
        b_head=(0.09012936855999465, -1.8742613286568583),
        psorder=7,
    )


def _psi6_k5_ps9() -> MethodSpec:
    return _palindromic3(
        "psi6-k5-ps9",
        a=(0.7702669932516844, 2 / 100, 0.5133170199053506, 1.1686905913031624, 1 / 3),
        b_head=(0.7482993205697204, -0.34096002148336635, -1.5697387622875072,
                -0.11572553679884676),
        order=6,
        psorder=9,
    )


def _psi8_k4() -> MethodSpec:
    return _symmetric5(
        "psi8-k4",
        a=((-0.2539842055534987, 0.4514159659747628),
           (-0.1297472147351918, 0.5893868250930246),
           (0.283267969084071, 0.0411275969512266),
           (0.0671551220219572, 0.3228966120312048)),
        b_head=(0.6402721677360648, -0.4488395035838362, -11.611098146500447),
        order=8,
    )


def builtin_catalog() -> list[MethodSpec]:
    return [
        basic_method(),
        mpe_method(StepSequence.harmonic(2), "psi4-extrap"),
        mpe_method(StepSequence.harmonic(3), "psi6-extrap"),
        mpe_method(StepSequence.harmonic(4), "psi8-extrap"),
        _psi32s(),
        _psi6_k5_ps9(),
        _psi8_k4(),
    ]


def catalog_by_name() -> dict[str, MethodSpec]:
    return {m.name: m for m in builtin_catalog()}


def get_method(name: str) -> MethodSpec:
    try:
        return catalog_by_name()[name]
    except KeyError:
        raise KeyError(f"unknown method {name!r}; known: {', '.join(catalog_by_name())}") from None


def resolve_method(name_or_path: str | Path) -> MethodSpec:
    """Look up a catalog name, falling back to a coefficient file path."""
    if isinstance(name_or_path, str) and name_or_path in catalog_by_name():
        return get_method(name_or_path)
    path = Path(name_or_path)
    if path.is_file():
        return load_method(path)
    raise KeyError(f"{name_or_path!r} is neither a catalog method nor a readable file")


# --------------------------------------------------------------------------
# Coefficient files
#
#   # comment
#   order 4
#   psorder 7
#   a_1 ... a_m b        (one line per term)

_HEADER = re.compile(r"^(order|psorder|name)\s+(\S+)\s*$")


def parse_method(text: str, name: str = "file", path=None) -> MethodSpec:
    order = None
    psorder = None
    terms: list[Term] = []
    bs: list[tuple[int, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        hm = _HEADER.match(line)
        if hm:
            key, val = hm.groups()
            if key == "name":
                name = val
                continue
            try:
                ival = int(val)
            except ValueError:
                raise MethodFormatError(f"{key} expects an integer, got {val!r}", lineno, path) from None
            if ival < 1:
                raise MethodFormatError(f"{key} must be positive", lineno, path)
            if key == "order":
                order = ival
            else:
                psorder = ival
            continue
        fields = line.split()
        if len(fields) < 2:
            raise MethodFormatError("a term line needs at least one stage and a weight", lineno, path)
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise MethodFormatError(f"malformed number in {line!r}", lineno, path) from None
        if not all(math.isfinite(v) for v in values):
            raise MethodFormatError("non-finite coefficient", lineno, path)
        *stages, b = values
        s = math.fsum(stages)
        if abs(s - 1.0) > FILE_TOL:
            raise MethodFormatError(f"stage fractions sum to {s!r}, expected 1", lineno, path)
        terms.append(Term(b, tuple(stages)))
        bs.append((lineno, b))
    if not terms:
        raise MethodFormatError("no terms found", None, path)
    total = math.fsum(b for _, b in bs)
    if abs(total - 1.0) > FILE_TOL:
        raise MethodFormatError(f"weights sum to {total!r}, expected 1", bs[-1][0], path)
    if order is None:
        order = 2
    return MethodSpec(name, order, tuple(terms), psorder, tol=FILE_TOL)


def load_method(file) -> MethodSpec:
    path = Path(file)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MethodFormatError(f"cannot read coefficient file: {exc}", None, path) from None
    return parse_method(text, name=path.stem, path=path)


def format_method(method: MethodSpec) -> str:
    """Serialise a method in the coefficient file format (round-trips exactly)."""
    lines = [f"# {method.name}", f"order {method.order}"]
    if method.pseudo_symplectic_order is not None:
        lines.append(f"psorder {method.pseudo_symplectic_order}")
    for t in method.terms:
        lines.append(" ".join(repr(float(v)) for v in (*t.stages, t.b)))
    return "\n".join(lines) + "\n"


def describe(method: MethodSpec) -> str:
    ps = method.pseudo_symplectic_order
    counts = ",".join(map(str, method.stage_counts))
    return (f"{method.name:<14} order={method.order} k={method.k} stages=[{counts}]"
            f" pseudo-symplectic={ps if ps is not None else '-'}")

