import random
from fractions import Fraction

import mpmath as mp
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bloch_lattice.errors import DegenerateSimplex
from bloch_lattice.numerics import (
    INF,
    IntPolynomial,
    PrecisionContext,
    count_complex_places,
    dilog_D,
    dilog_D_quadrature,
    format_complex,
    format_real,
    is_inf,
    parse_complex,
    parse_real,
    roots,
)

CTX = PrecisionContext(40)

# frozen from mpmath.clsin(2, pi/3) and mpmath.catalan at 90 digits
CL2_PI_3 = "1.014941606409653625021202554274520285941689307530299792017489106776597476258244"
CATALAN = "0.91596559417721901505460351493238411077414937428167213426649811962176301977625477"

upper = st.tuples(
    st.floats(-4, 4, allow_nan=False),
    st.floats(0.05, 4, allow_nan=False),
).map(lambda t: complex(*t))


def close(a, b, tol):
    return abs(a - b) <= mp.mpf(tol)


# --- precision context --------------------------------------------------


def test_context_floor():
    with pytest.raises(ValueError):
        PrecisionContext(19)
    assert PrecisionContext(6, low_precision=True).digits == 6
    with pytest.raises(ValueError):
        PrecisionContext(5, low_precision=True)
    with pytest.raises(TypeError):
        PrecisionContext(30.0)


def test_context_tolerance():
    with CTX.workdps():
        assert close(PrecisionContext(40).acceptance_tol, mp.mpf(10) ** -10, "1e-45")
        assert close(PrecisionContext(40, tolerance="1e-20").acceptance_tol, mp.mpf("1e-20"), "1e-45")
    with pytest.raises(ValueError):
        PrecisionContext(40, tolerance="0")


def test_context_from_env(monkeypatch):
    monkeypatch.setenv("BLOCH_LATTICE_PRECISION", "33")
    assert PrecisionContext.from_env().digits == 33
    monkeypatch.delenv("BLOCH_LATTICE_PRECISION")
    assert PrecisionContext.from_env().digits == 64


def test_work_precision_has_guard_digits():
    assert PrecisionContext(60).work_dps == 70
    assert PrecisionContext(6, low_precision=True).work_dps == 30


# --- text I/O ----------------------------------------------------------


def test_parse_real_plain_and_truncated():
    with CTX.workdps():
        for text, value in [
            ("4.4986", "4.4986"),
            ("4.4986...", "4.49865"),
            ("4.4986…", "4.49865"),
            ("-0.8770...", "-0.87705"),
            ("1.5e3...", "1550"),
        ]:
            assert close(parse_real(text, CTX), mp.mpf(value), "1e-45")


@pytest.mark.parametrize("bad", ["", "abc", "1.2.3", "1,5", "--1"])
def test_parse_real_rejects(bad):
    with pytest.raises(ValueError):
        parse_real(bad, CTX)


@pytest.mark.parametrize(
    "text,expected",
    [
        ("0.5+0.8i", (0.5, 0.8)),
        ("-1-2i", (-1, -2)),
        ("3i", (0, 3)),
        ("-i", (0, -1)),
        ("2.5", (2.5, 0)),
        ("1e-3 + 2e2 j", (0.001, 200)),
    ],
)
def test_parse_complex(text, expected):
    z = parse_complex(text, CTX)
    assert (float(z.real), float(z.imag)) == expected


def test_parse_complex_infinity_and_errors():
    assert is_inf(parse_complex("inf", CTX))
    assert parse_complex("∞", CTX) is INF
    with pytest.raises(ValueError):
        parse_complex("1+2k", CTX)


def test_parse_complex_keeps_precision():
    with CTX.workdps():
        z = parse_complex("0.1234567890123456789012345678901234567+1i", CTX)
        assert z.real == mp.mpf("0.1234567890123456789012345678901234567")


@settings(max_examples=60, deadline=None)
@given(st.integers(-10**45, 10**45), st.integers(-30, 30))
def test_format_parse_round_trip(mantissa, exp10):
    with CTX.workdps():
        x = mp.mpf(mantissa) * mp.mpf(10) ** exp10
        back = parse_real(format_real(x, CTX), CTX)
        assert abs(back - x) <= abs(x) * mp.mpf(10) ** (1 - CTX.digits)


def test_format_complex():
    ctx = PrecisionContext(20)
    assert format_complex(mp.mpc(1, -2), ctx) == "1.0-2.0i"
    assert format_complex(mp.mpc(0.5, 0), ctx) == "0.5"
    assert format_complex(INF, ctx) == "inf"
    assert format_real(0, ctx) == "0.0"


# --- Bloch-Wigner function ----------------------------------------------


def test_dilog_regular_tetrahedron():
    ctx = PrecisionContext(70)
    with ctx.workdps():
        assert close(dilog_D(mp.expjpi(mp.mpf(1) / 3), ctx), mp.mpf(CL2_PI_3), "1e-68")


def test_dilog_at_i_is_catalan():
    ctx = PrecisionContext(70)
    with ctx.workdps():
        assert close(dilog_D(mp.mpc(0, 1), ctx), mp.mpf(CATALAN), "1e-68")


def test_dilog_real_axis_exactly_zero():
    rng = random.Random(1)
    for x in [-5.5, -1, 0.3, 0.999, 1.5, 40] + [rng.uniform(-9, 9) for _ in range(20)]:
        assert dilog_D(x, CTX) == 0


@pytest.mark.parametrize("z", [0, 1, INF])
def test_dilog_degenerate(z):
    with pytest.raises(DegenerateSimplex):
        dilog_D(z, CTX)
    with pytest.raises(DegenerateSimplex):
        dilog_D_quadrature(z, CTX)


@settings(max_examples=40, deadline=None)
@given(upper)
def test_dilog_matches_polylog(z):
    # independent library route: Im Li2 from mpmath.polylog
    with CTX.workdps():
        z = mp.mpc(z)
        expected = mp.polylog(2, z).imag + mp.arg(1 - z) * mp.log(abs(z))
        assert close(dilog_D(z, CTX), expected, "1e-35")


@settings(max_examples=15, deadline=None)
@given(upper)
def test_dilog_matches_quadrature(z):
    ctx = PrecisionContext(25)
    with ctx.workdps():
        assert close(dilog_D(z, ctx), dilog_D_quadrature(z, ctx), "1e-22")


@settings(max_examples=40, deadline=None)
@given(upper)
def test_dilog_symmetries(z):
    with CTX.workdps():
        z = mp.mpc(z)
        d = dilog_D(z, CTX)
        tol = mp.mpf(10) ** -36
        assert d > 0
        assert abs(dilog_D(mp.conj(z), CTX) + d) <= tol
        for w in (1 - 1 / z, 1 / (1 - z)):
            assert abs(dilog_D(w, CTX) - d) <= tol
        for w in (1 / z, 1 - z, z / (z - 1)):
            assert abs(dilog_D(w, CTX) + d) <= tol


@settings(max_examples=40, deadline=None)
@given(upper, upper)
def test_five_term_relation(x, y):
    with CTX.workdps():
        x, y = mp.mpc(x), mp.mpc(y)
        if abs(1 - x * y) < mp.mpf("1e-6"):
            return
        terms = [x, y, (1 - x) / (1 - x * y), 1 - x * y, (1 - y) / (1 - x * y)]
        assert abs(mp.fsum(dilog_D(t, CTX) for t in terms)) <= mp.mpf(10) ** -36


def test_dilog_maximum_is_regular_tetrahedron():
    with CTX.workdps():
        top = dilog_D(mp.expjpi(mp.mpf(1) / 3), CTX)
        for z in ("0.5+0.85i", "0.51+0.866i", "0.4+0.9i"):
            assert dilog_D(parse_complex(z, CTX), CTX) < top


# --- polynomials ----------------------------------------------------------


def test_polynomial_parse_and_trim():
    p = IntPolynomial.parse("4, 0, -3, 0, 1")
    assert p.coefficients == (4, 0, -3, 0, 1)
    assert IntPolynomial.parse("4 0 -3 0 1") == p
    assert IntPolynomial([1, 2, 0, 0]).degree == 1
    assert str(p) == "4,0,-3,0,1"
    with pytest.raises(ValueError):
        IntPolynomial([5, 0])
    with pytest.raises(ValueError):
        IntPolynomial.parse("1 x 2")


def test_polynomial_canonical():
    assert IntPolynomial([4, 0, -6]).canonical().coefficients == (-2, 0, 3)
    assert IntPolynomial([3, 6, 9]).canonical().coefficients == (1, 2, 3)


def test_polynomial_evaluation():
    p = IntPolynomial([1, -1, 0, 1])
    assert p(2) == 7
    assert p.derivative_at(2) == 11
    assert p(Fraction(1, 2)) == Fraction(5, 8)


def test_roots_exact_quartic():
    # x^4 - 3x^2 + 4 has roots (+-sqrt7 +- i)/2
    rs = roots(IntPolynomial([4, 0, -3, 0, 1]), CTX)
    with CTX.workdps():
        s7 = mp.sqrt(7) / 2
        expected = [mp.mpc(-s7, -0.5), mp.mpc(-s7, 0.5), mp.mpc(s7, -0.5), mp.mpc(s7, 0.5)]
        for got, want in zip(rs, expected):
            assert abs(got - want) <= mp.mpf(10) ** -38


def test_roots_real_snapping_and_pairs():
    rs = roots(IntPolynomial([-2, 0, 1]), CTX)
    assert all(r.imag == 0 for r in rs)
    assert rs[0].real < 0 < rs[1].real
    rs = roots(IntPolynomial([1, 0, 0, 0, 1]), CTX)
    assert sum(1 for r in rs if r.imag > 0) == 2
    with CTX.workdps():
        for r in rs:
            assert mp.conj(r) in rs


def _squarefree(coeffs):
    # gcd(p, p') over Q has degree 0
    def rem(a, b):
        a = a[:]
        while len(a) >= len(b) and any(a):
            f = a[-1] / b[-1]
            shift = len(a) - len(b)
            for i, c in enumerate(b):
                a[shift + i] -= f * c
            a.pop()
            while a and a[-1] == 0:
                a.pop()
        return a

    a = [Fraction(c) for c in coeffs]
    b = [Fraction(k * c) for k, c in enumerate(coeffs)][1:]
    while b:
        a, b = b, rem(a, b)
    return len(a) == 1


polys = st.lists(st.integers(-20, 20), min_size=2, max_size=8).filter(lambda c: c[-1] != 0 and _squarefree(c))


@settings(max_examples=60, deadline=None)
@given(polys)
def test_roots_match_polyroots_oracle(coeffs):
    ctx = PrecisionContext(30)
    p = IntPolynomial(coeffs)
    rs = roots(p, ctx)
    assert len(rs) == p.degree
    with mp.workdps(60):
        oracle = mp.polyroots(list(reversed(coeffs)), maxsteps=400, extraprec=400)
    with ctx.workdps():
        for r in oracle:
            assert min(abs(r - g) for g in rs) <= mp.mpf(10) ** -20 * max(1, abs(r))
        keys = [(g.real, g.imag) for g in rs]
        assert keys == sorted(keys) or all(abs(a[0] - b[0]) < 1e-15 or a[0] < b[0] for a, b in zip(keys, keys[1:]))


def test_roots_deterministic():
    p = IntPolynomial([1, -2, 1, 0, 1])
    assert roots(p, CTX).roots == roots(p, CTX).roots


@pytest.mark.parametrize(
    "coeffs,r2",
    [([1, 0, 1], 1), ([-2, 0, 1], 0), ([1, 0, -1, 1], 1), ([4, 0, -3, 0, 1], 2), ([1, 0, 0, 0, 1], 2), ([-2, 0, 0, 1], 1)],
)
def test_count_complex_places(coeffs, r2):
    assert count_complex_places(IntPolynomial(coeffs), CTX) == r2
