import itertools
import math
import random
from fractions import Fraction

import mpmath as mp
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bloch_lattice.errors import InsufficientPrecision, TargetNotInvolved, UndefinedGcd
from bloch_lattice.numerics import INF, PrecisionContext
from bloch_lattice.relations import (
    RelationResult,
    RelationStatus,
    as_rational,
    default_coeff_bound,
    fractional_gcd,
    fractional_gcd_all,
    lindep,
    lll_reduce,
    rational_coordinates,
    rational_determinant,
)

CTX = PrecisionContext(50)


def leibniz(m):
    """Determinant oracle: the permutation expansion."""
    n = len(m)
    total = Fraction(0)
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = Fraction(-1) ** inversions
        for i, j in enumerate(perm):
            term *= Fraction(m[i][j])
        total += term
    return total


def gram_schmidt(rows):
    ortho, mu = [], []
    for i, b in enumerate(rows):
        v = [Fraction(x) for x in b]
        mu.append([])
        for j in range(i):
            bj = ortho[j]
            m = sum(Fraction(x) * y for x, y in zip(b, bj)) / sum(y * y for y in bj)
            mu[i].append(m)
            v = [x - m * y for x, y in zip(v, bj)]
        ortho.append(v)
    return ortho, mu


square = st.integers(1, 4).flatmap(
    lambda n: st.lists(st.lists(st.integers(-9, 9), min_size=n, max_size=n), min_size=n, max_size=n)
)


# --- LLL ----------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(square)
def test_lll_is_reduced_basis_of_same_lattice(rows):
    assume(leibniz(rows) != 0)
    out = lll_reduce(rows)
    # same lattice: unimodular change of basis preserves |det|
    assert abs(leibniz(out)) == abs(leibniz(rows))
    ortho, mu = gram_schmidt(out)
    for i in range(len(out)):
        assert all(abs(m) <= Fraction(1, 2) for m in mu[i])
    for k in range(1, len(out)):
        lhs = sum(x * x for x in ortho[k])
        rhs = (Fraction(99, 100) - mu[k][k - 1] ** 2) * sum(x * x for x in ortho[k - 1])
        assert lhs >= rhs


def test_lll_known_example():
    out = lll_reduce([[1, 1, 1], [-1, 0, 2], [3, 5, 6]])
    # the textbook reduction of this basis is (0,1,0), (1,0,1), (-1,0,2)
    assert sorted(sum(x * x for x in r) for r in out) == [1, 2, 5]


def test_lll_dependent_rows():
    with pytest.raises(ValueError):
        lll_reduce([[1, 2], [2, 4]])


# --- integer relations -----------------------------------------------------


def test_lindep_logs():
    with CTX.workdps():
        res = lindep([mp.log(6), mp.log(2), mp.log(3)], CTX)
    assert res.status is RelationStatus.RELATION
    assert res.coefficients == (1, -1, -1)
    assert str(res) == "1 -1 -1"


def test_lindep_worked_example_relations():
    ctx = PrecisionContext(13, low_precision=True)
    with ctx.workdps():
        v, y, x = mp.mpf("2.7182818284590"), mp.mpf("11.7197489640976"), mp.mpf("6.3496623769612")
        assert lindep([mp.mpf("5.4365636569180"), v], ctx).coefficients == (1, -2)
        assert lindep([y, v, x], ctx).coefficients == (15, -60, -2)


def test_lindep_independent():
    with CTX.workdps():
        res = lindep([mp.pi, mp.e, mp.euler], CTX)
    assert not res.found and res.coefficients is None
    assert str(res) == "independent"


def test_lindep_respects_bound():
    with CTX.workdps():
        x = mp.sqrt(2)
        assert lindep([x, 5000 * x], CTX).found is False
        assert lindep([x, 5000 * x], CTX, coeff_bound=5000).coefficients == (5000, -1)
        assert lindep([x, 4096 * x], CTX).coefficients == (4096, -1)


def test_lindep_edge_cases():
    with CTX.workdps():
        assert lindep([mp.mpf(2), mp.mpf(0), mp.pi], CTX).coefficients == (0, 1, 0)
        assert not lindep([mp.pi], CTX).found
        with pytest.raises(ValueError):
            lindep([], CTX)
        with pytest.raises(ValueError):
            lindep([mp.pi, mp.mpf(10) ** -30], CTX)


def test_lindep_refuses_loose_tolerance():
    ctx = PrecisionContext(40, tolerance="1e-5")
    with pytest.raises(InsufficientPrecision):
        lindep([mp.pi, mp.e], ctx)


def test_default_bounds():
    assert default_coeff_bound(PrecisionContext(40)) == 4096
    assert default_coeff_bound(PrecisionContext(8, low_precision=True)) == 64


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=2, max_size=5), st.randoms(use_true_random=False))
def test_lindep_planted_against_pslq(coeffs, rnd):
    assume(coeffs[-1] != 0 and any(coeffs[:-1]))
    with CTX.workdps():
        xs = [mp.mpf(rnd.random()) + 1 for _ in coeffs[:-1]]
        assume(len(set(xs)) == len(xs))
        xs.append(-mp.fsum(c * x for c, x in zip(coeffs, xs)) / coeffs[-1])
        ours = lindep(xs, CTX)
        oracle = mp.pslq(xs, maxcoeff=4096, maxsteps=10**5)
    assert ours.found and oracle is not None
    g = math.gcd(*oracle)
    oracle = [c // g for c in oracle]
    if next(c for c in oracle if c) < 0:
        oracle = [-c for c in oracle]
    assert list(ours.coefficients) == oracle


def test_lindep_normalised_output():
    with CTX.workdps():
        res = lindep([-mp.sqrt(3), 2 * mp.sqrt(3)], CTX)
    assert res.coefficients == (2, 1)


def test_lindep_deterministic():
    rng = random.Random(3)
    with CTX.workdps():
        xs = [mp.mpf(rng.random()) for _ in range(5)]
        xs.append(3 * xs[0] - 7 * xs[3])
    assert lindep(xs, CTX) == lindep(xs, CTX)


# --- coordinates and rationals ---------------------------------------------


def test_rational_coordinates():
    dep = RelationResult(RelationStatus.RELATION, (15, -60, -2), mp.mpf(0))
    assert rational_coordinates(dep) == [Fraction(4), Fraction(2, 15)]
    with pytest.raises(TargetNotInvolved):
        rational_coordinates(RelationResult(RelationStatus.RELATION, (0, 1, -1), mp.mpf(0)))
    with pytest.raises(TargetNotInvolved):
        rational_coordinates(RelationResult(RelationStatus.INDEPENDENT, None, mp.mpf(1)))


def test_as_rational():
    assert as_rational("3/4") == Fraction(3, 4)
    assert as_rational(5) == Fraction(5)
    with pytest.raises(TypeError):
        as_rational(0.5)


def test_fractional_gcd_examples():
    assert fractional_gcd(Fraction(2, 15), Fraction(1, 3)) == Fraction(1, 15)
    assert fractional_gcd(Fraction(3, 2), 1) == Fraction(1, 2)
    assert fractional_gcd(-4, 6) == 2
    assert fractional_gcd(INF, Fraction(-2, 5)) == Fraction(2, 5)
    assert fractional_gcd(0, Fraction(3, 7)) == Fraction(3, 7)
    for bad in ((0, 0), (INF, INF), (INF, 0)):
        with pytest.raises(UndefinedGcd):
            fractional_gcd(*bad)


fractions = st.fractions(max_denominator=200).filter(lambda f: f != 0 and abs(f) < 10**4)


@settings(max_examples=100, deadline=None)
@given(fractions, fractions)
def test_fractional_gcd_properties(a, b):
    g = fractional_gcd(a, b)
    assert g > 0
    qa, qb = a / g, b / g
    assert qa.denominator == 1 and qb.denominator == 1
    # maximal: the quotients are coprime
    assert math.gcd(qa.numerator, qb.numerator) == 1
    assert fractional_gcd(b, a) == g


def test_fractional_gcd_all():
    assert fractional_gcd_all([Fraction(4), 0, Fraction(3, 2), Fraction(-1, 2)]) == Fraction(1, 2)
    with pytest.raises(UndefinedGcd):
        fractional_gcd_all([0, 0])


@settings(max_examples=60, deadline=None)
@given(square.map(lambda m: [[Fraction(x, 1 + abs(x) % 3) for x in row] for row in m]))
def test_determinant_matches_leibniz(m):
    assert rational_determinant(m) == leibniz(m)


def test_determinant_cases():
    assert rational_determinant([[0, 1], [1, 0]]) == -1
    assert rational_determinant([[1, 2], [2, 4]]) == 0
    assert rational_determinant([[Fraction(1), Fraction(4)], [Fraction(0), Fraction(2, 15)]]) == Fraction(2, 15)
    with pytest.raises(ValueError):
        rational_determinant([[1, 2]])
    with pytest.raises(ValueError):
        rational_determinant([])
