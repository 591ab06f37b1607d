import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genextrap.errors import InvalidSequenceError, MethodFormatError, UnsupportedShapeError
from genextrap.methods import (
    MethodSpec,
    StepSequence,
    Term,
    builtin_catalog,
    check_order4_conditions,
    efficiency,
    format_method,
    get_method,
    leading_error_constant,
    load_method,
    moment_sums_exact,
    mpe_method,
    mpe_weights,
    mpe_weights_exact,
    parse_method,
    w_polynomials,
)

SEQUENCES = ("harmonic", "romberg", "bulirsch")


def test_named_sequences():
    assert StepSequence.harmonic(4).m == (1, 2, 3, 4)
    assert StepSequence.romberg(5).m == (1, 2, 4, 8, 16)
    assert StepSequence.bulirsch(10).m == (1, 2, 3, 4, 6, 8, 12, 16, 24, 32)


@pytest.mark.parametrize("bad", [(1, 1), (2, 1), (0, 1), (), (1.5, 2)])
def test_invalid_sequences(bad):
    with pytest.raises(InvalidSequenceError):
        StepSequence(bad)


def test_duplicate_entries_rejected_by_weights():
    with pytest.raises(InvalidSequenceError):
        mpe_weights([1, 2, 2])


@pytest.mark.parametrize("seq, expected", [
    ([1], [Fraction(1)]),
    ([1, 2], [Fraction(-1, 3), Fraction(4, 3)]),
    ([1, 2, 3], [Fraction(1, 24), Fraction(-16, 15), Fraction(81, 40)]),
    ([1, 2, 3, 4], [Fraction(-1, 360), Fraction(16, 45), Fraction(-729, 280), Fraction(1024, 315)]),
])
def test_mpe_weights_exact(seq, expected):
    assert mpe_weights_exact(seq) == expected
    assert mpe_weights(seq) == [float(b) for b in expected]


@pytest.mark.parametrize("name", SEQUENCES)
@pytest.mark.parametrize("r", range(1, 9))
def test_mpe_moment_conditions(name, r):
    seq = StepSequence.named(name, r)
    sums = moment_sums_exact(seq, [2 * l for l in range(r)])
    assert sums == [1] + [0] * (r - 1)


@pytest.mark.parametrize("name", SEQUENCES)
@pytest.mark.parametrize("r", range(1, 9))
def test_leading_constant_matches_direct_sum(name, r):
    seq = StepSequence.named(name, r)
    direct = moment_sums_exact(seq, [2 * r])[0]
    closed = leading_error_constant(seq)
    assert closed == pytest.approx(float(direct), rel=1e-12, abs=0)


@pytest.mark.parametrize("seq, g", [([1, 2], -0.25), ([1], 1.0), ([1, 2, 3], 1 / 36)])
def test_leading_constant_values(seq, g):
    assert leading_error_constant(seq) == pytest.approx(g, rel=1e-15)


def test_mpe_method_terms():
    m = mpe_method([1, 2])
    assert m.order == 4
    assert m.terms == (Term(-1 / 3, (1.0,)), Term(4 / 3, (0.5, 0.5)))
    assert mpe_method([1]).terms == (Term(1.0, (1.0,)),)
    t3 = mpe_method([1, 2, 3]).terms[2]
    assert t3.b == 81 / 40 and t3.stages == (1 / 3,) * 3


def test_efficiency_values():
    assert efficiency(StepSequence.harmonic(2)) == pytest.approx(3 * 0.25 ** 0.25, rel=1e-15)
    assert efficiency([1], "serial") == 1.0
    assert efficiency([1], "parallel") == 1.0
    assert efficiency([1, 2, 3], "parallel") == pytest.approx(3 * (1 / 36) ** (1 / 6))
    with pytest.raises(ValueError):
        efficiency([1, 2], "gpu")


@pytest.mark.parametrize("r", range(2, 6))
def test_efficiency_ordering(r):
    h, b, ro = (efficiency(StepSequence.named(n, r)) for n in ("harmonic", "bulirsch", "romberg"))
    assert h <= b <= ro


@pytest.mark.parametrize("a, expected", [
    (0.5, (0.25, 0.0, 1 / 16, 1 / 96)),
    (1.0, (1.0, 0.0, 1.0, 1 / 24)),
    (0.0, (1.0, 0.0, 1.0, 1 / 24)),
])
def test_w_polynomials_values(a, expected):
    w = w_polynomials(a)
    assert (w.w31, w.w41, w.w51, w.w52) == pytest.approx(expected, abs=1e-16)


@given(st.floats(-2, 2, allow_nan=False))
def test_barrier_identity(a):
    w = w_polynomials(a)
    assert 2.5 * w.w31 - 4 * w.w51 + 60 * w.w52 == pytest.approx(1.0, abs=1e-12)


@given(st.floats(-2, 2, allow_nan=False))
def test_w_symmetry_under_reflection(a):
    w, v = w_polynomials(a), w_polynomials(1 - a)
    assert v.w31 == pytest.approx(w.w31, abs=1e-12)
    assert v.w41 == pytest.approx(-w.w41, abs=1e-12)
    assert v.w52 == pytest.approx(w.w52, abs=1e-12)


def test_order4_report_extrapolation():
    rep = check_order4_conditions(get_method("psi4-extrap"))
    assert rep.g00 == 1.0
    assert abs(rep.g31) <= 1e-14 and abs(rep.g41) <= 1e-14 and abs(rep.g52) <= 1e-14
    assert rep.g51 == pytest.approx(-0.25, abs=1e-14)


def test_order4_report_psi32s():
    m = get_method("psi32s")
    rep = check_order4_conditions(m)
    for v in (rep.g00 - 1, rep.g31, rep.g41, rep.gt63, rep.gt75):
        assert abs(v) <= 1e-10
    assert rep.passes(m.pseudo_symplectic_order)


def test_order4_report_basic_scheme():
    rep = check_order4_conditions(MethodSpec("s", 2, ((1.0, (1.0,)),)))
    assert (rep.g00, rep.g31, rep.g41) == (1.0, 1.0, 0.0)


def test_order4_report_rejects_three_stages():
    with pytest.raises(UnsupportedShapeError):
        check_order4_conditions(get_method("psi6-extrap"))


def _two_stage_methods():
    return st.lists(st.tuples(st.floats(-1, 2), st.floats(-3, 3)), min_size=1, max_size=4)


@settings(max_examples=50)
@given(_two_stage_methods(), _two_stage_methods(), st.floats(-2, 2), st.floats(-2, 2))
def test_report_is_linear_in_weights(t1, t2, alpha, beta):
    def spec(terms):
        return [Term(b, (a, 1 - a)) for a, b in terms]

    def raw_report(terms):
        # bypass the consistency check: linearity is a statement about arbitrary weights
        m = object.__new__(MethodSpec)
        object.__setattr__(m, "terms", tuple(terms))
        return check_order4_conditions(m).as_dict()

    r1, r2 = raw_report(spec(t1)), raw_report(spec(t2))
    union = [Term(alpha * t.b, t.stages) for t in spec(t1)] + [Term(beta * t.b, t.stages) for t in spec(t2)]
    ru = raw_report(union)
    for k in ru:
        expected = alpha * r1[k] + beta * r2[k]
        scale = sum(abs(alpha * t.b) + abs(beta * t.b) for t in spec(t1) + spec(t2)) * 50 + 1
        assert ru[k] == pytest.approx(expected, abs=1e-12 * scale)


def test_catalog_contents():
    cat = {m.name: m for m in builtin_catalog()}
    for name in ("psi4-extrap", "psi6-extrap", "psi8-extrap", "psi32s", "psi6-k5-ps9", "psi8-k4"):
        assert name in cat
    assert cat["psi4-extrap"].terms == mpe_method([1, 2]).terms
    assert cat["psi32s"].pseudo_symplectic_order == 7
    assert cat["psi6-k5-ps9"].pseudo_symplectic_order == 9
    psi8 = cat["psi8-k4"]
    assert psi8.k == 4 and psi8.stage_counts == (5, 5, 5, 5)


def test_catalog_appendix_trailing_weights():
    b1, b2 = 0.09012936855999465, -1.8742613286568583
    assert get_method("psi32s").terms[2].b == 1 - b1 - b2
    t = get_method("psi6-k5-ps9").terms
    assert [x.stages[0] for x in t] == [0.7702669932516844, 0.02, 0.5133170199053506,
                                        1.1686905913031624, 1 / 3]
    assert t[1].stages == (0.02, 1 - 2 * 0.02, 0.02)


@pytest.mark.parametrize("method", builtin_catalog(), ids=lambda m: m.name)
def test_catalog_consistency(method):
    assert abs(math.fsum(method.weights) - 1) <= 1e-12
    for term in method.terms:
        assert abs(math.fsum(term.stages) - 1) <= 1e-12
    palin = method.name in ("psi6-k5-ps9", "psi8-k4") or method.name.endswith("extrap")
    if palin:
        for term in method.terms:
            assert term.stages == term.stages[::-1]


def test_load_round_trip(data_dir):
    assert load_method(data_dir / "psi4_extrap.txt").terms == mpe_method([1, 2]).terms
    for m in builtin_catalog():
        assert parse_method(format_method(m)).terms == m.terms


def test_load_five_term_three_stage_file(data_dir):
    m = load_method(data_dir / "psi6_k5_ps9.txt")
    assert m.k == 5 and m.stage_counts == (3,) * 5
    assert m.order == 6 and m.pseudo_symplectic_order == 9


def test_load_bad_weights(data_dir):
    with pytest.raises(MethodFormatError, match=r"weights sum to 0\.899999") as exc:
        load_method(data_dir / "bad_weights.txt")
    assert exc.value.line == 4


@pytest.mark.parametrize("text, match", [
    ("0.5 0.4 1\n", "stage fractions sum"),
    ("1 x\n", "malformed number"),
    ("1\n", "at least one stage"),
    ("order four\n1 1\n", "integer"),
    ("# only comments\n", "no terms"),
    ("1 nan\n", "non-finite"),
])
def test_parse_errors(text, match):
    with pytest.raises(MethodFormatError, match=match):
        parse_method(text)


def test_parse_mixed_lengths_and_headers():
    m = parse_method("# mixed\norder 4\npsorder 5\n1 -0.5\n0.5 0.5 1.5\n")
    assert m.stage_counts == (1, 2)
    assert m.order == 4 and m.pseudo_symplectic_order == 5


def test_methodspec_validation():
    with pytest.raises(ValueError):
        MethodSpec("x", 2, ((0.9, (1.0,)),))
    with pytest.raises(ValueError):
        MethodSpec("x", 2, ((1.0, (0.5, 0.4)),))
