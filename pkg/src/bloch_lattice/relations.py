"""Integer relations, exact rational helpers and the fractional gcd.

Relations are found with an exact integer LLL reduction of the lattice
spanned by the rows ``[e_i | round(N * x_i)]``: a short reduced row has a
small identity part (the coefficients) and a small last entry (N times the
residual).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import mpmath as mp

from .errors import InsufficientPrecision, TargetNotInvolved, UndefinedGcd
from .numerics import INF, PrecisionContext

Rational = Fraction

DEFAULT_COEFF_BOUND = 4096
LOW_PRECISION_COEFF_BOUND = 64


class RelationStatus(enum.Enum):
    RELATION = "RELATION"
    INDEPENDENT = "INDEPENDENT"


@dataclass(frozen=True)
class RelationResult:
    status: RelationStatus
    coefficients: Optional[Tuple[int, ...]]
    residual: mp.mpf

    @property
    def found(self) -> bool:
        return self.status is RelationStatus.RELATION

    def __str__(self):
        if not self.found:
            return "independent"
        return " ".join(str(c) for c in self.coefficients)


def default_coeff_bound(ctx: PrecisionContext) -> int:
    if ctx.low_precision or ctx.digits < 20:
        return LOW_PRECISION_COEFF_BOUND
    return DEFAULT_COEFF_BOUND


# ---------------------------------------------------------------------------
# integral LLL


def lll_reduce(basis: Sequence[Sequence[int]], delta: Fraction = Fraction(99, 100)) -> List[List[int]]:
    """LLL-reduce linearly independent integer row vectors.

    All arithmetic is on integers (the integral variant of the algorithm,
    which tracks the Gram determinants d_i and scaled Gram-Schmidt
    coefficients instead of rationals), so the result is exact.
    """
    b = [list(map(int, row)) for row in basis]
    n = len(b)
    if n <= 1:
        return b
    p, q = delta.numerator, delta.denominator

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    # 1-based bookkeeping: d[0] = 1, d[i] for row i-1; lam[k][j] for j < k
    d = [0] * (n + 1)
    d[0] = 1
    d[1] = dot(b[0], b[0])
    lam = [[0] * (n + 1) for _ in range(n + 1)]

    def red(k, l):
        if 2 * abs(lam[k][l]) > d[l]:
            r = (2 * lam[k][l] + d[l]) // (2 * d[l])
            bk, bl = b[k - 1], b[l - 1]
            for i in range(len(bk)):
                bk[i] -= r * bl[i]
            lam[k][l] -= r * d[l]
            for i in range(1, l):
                lam[k][i] -= r * lam[l][i]

    def swap(k, kmax):
        b[k - 1], b[k - 2] = b[k - 2], b[k - 1]
        for j in range(1, k - 1):
            lam[k][j], lam[k - 1][j] = lam[k - 1][j], lam[k][j]
        la = lam[k][k - 1]
        B = (d[k - 2] * d[k] + la * la) // d[k - 1]
        for i in range(k + 1, kmax + 1):
            t = lam[i][k]
            lam[i][k] = (d[k] * lam[i][k - 1] - la * t) // d[k - 1]
            lam[i][k - 1] = (B * t + la * lam[i][k]) // d[k]
        d[k - 1] = B

    k, kmax = 2, 1
    while k <= n:
        if k > kmax:
            kmax = k
            for j in range(1, k + 1):
                u = dot(b[k - 1], b[j - 1])
                for i in range(1, j):
                    u = (d[i] * u - lam[k][i] * lam[j][i]) // d[i - 1]
                if j < k:
                    lam[k][j] = u
                else:
                    if u == 0:
                        raise ValueError("LLL input rows are linearly dependent")
                    d[k] = u
        red(k, k - 1)
        if q * d[k] * d[k - 2] < p * d[k - 1] ** 2 - q * lam[k][k - 1] ** 2:
            swap(k, kmax)
            k = max(2, k - 1)
        else:
            for l in range(k - 2, 0, -1):
                red(k, l)
            k += 1
    return b


# ---------------------------------------------------------------------------
# relation search


def _normalise(coeffs: Sequence[int]) -> Tuple[int, ...]:
    g = reduce(math.gcd, (abs(c) for c in coeffs), 0)
    out = [c // g for c in coeffs]
    for c in out:
        if c:
            if c < 0:
                out = [-x for x in out]
            break
    return tuple(out)


def _guard_digits(digits: int) -> int:
    return max(2, -(-digits // 10))


def lindep(values: Sequence, ctx: PrecisionContext, coeff_bound: Optional[int] = None) -> RelationResult:
    """Search for a small integer vector c with sum(c_i * x_i) = 0.

    A reduced lattice row is accepted when its coefficients are at most
    ``coeff_bound`` in size and its residual is within the context's
    acceptance tolerance; among accepted rows the smallest max-coefficient
    wins (then smallest Euclidean norm, then lexicographic order).
    """
    if not values:
        raise ValueError("lindep needs at least one value")
    if coeff_bound is None:
        coeff_bound = default_coeff_bound(ctx)
    tol = ctx.acceptance_tol
    if tol > ctx.certify_limit:
        raise InsufficientPrecision(
            f"acceptance tolerance {mp.nstr(tol, 3)} exceeds 10^(-digits/4) at {ctx.digits} digits"
        )
    with ctx.workdps():
        xs = [mp.mpf(v) for v in values]
        for i, x in enumerate(xs):
            if x == 0:
                coeffs = tuple(1 if j == i else 0 for j in range(len(xs)))
                return RelationResult(RelationStatus.RELATION, coeffs, mp.mpf(0))
        tiny = mp.mpf(10) ** (-mp.mpf(ctx.digits) / 2)
        for x in xs:
            if abs(x) <= tiny:
                raise ValueError(f"value {mp.nstr(x, 5)} is indistinguishable from zero")
        if len(xs) < 2:
            return RelationResult(RelationStatus.INDEPENDENT, None, abs(xs[0]))

        n = len(xs)
        scale = mp.mpf(10) ** (ctx.digits - _guard_digits(ctx.digits)) / max(abs(x) for x in xs)
        rows = []
        for i, x in enumerate(xs):
            row = [0] * n + [int(mp.nint(scale * x))]
            row[i] = 1
            rows.append(row)
        reduced = lll_reduce(rows)

        best = None
        best_key = None
        smallest = None
        for row in reduced:
            coeffs = row[:n]
            if not any(coeffs):
                continue
            coeffs = _normalise(coeffs)
            resid = abs(mp.fsum(c * x for c, x in zip(coeffs, xs)))
            smallest = resid if smallest is None else min(smallest, resid)
            height = max(abs(c) for c in coeffs)
            if height > coeff_bound or resid > tol:
                continue
            key = (height, sum(c * c for c in coeffs), coeffs)
            if best_key is None or key < best_key:
                best, best_key = (coeffs, resid), key
        if best is None:
            return RelationResult(RelationStatus.INDEPENDENT, None, smallest if smallest is not None else mp.mpf(0))
        return RelationResult(RelationStatus.RELATION, best[0], best[1])


def rational_coordinates(dep: RelationResult) -> List[Fraction]:
    """Coordinates c_j = -dep_{j+1}/dep_1 of the target over the basis."""
    if not dep.found:
        raise TargetNotInvolved("no relation to read coordinates from")
    head, *rest = dep.coefficients
    if head == 0:
        raise TargetNotInvolved("relation does not involve the target value")
    return [Fraction(-c, head) for c in rest]


# ---------------------------------------------------------------------------
# exact rational helpers


def as_rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


def fractional_gcd(a, b) -> Fraction:
    """Largest positive rational g with a/g and b/g both integers.

    ``INF`` acts as the identity, so a fold can start from it.
    """
    if a is INF and b is INF:
        raise UndefinedGcd("gcd of two identities")
    if a is INF:
        a, b = b, a
    if b is INF:
        a = as_rational(a)
        if a == 0:
            raise UndefinedGcd("gcd(0, identity) is undefined")
        return abs(a)
    a, b = as_rational(a), as_rational(b)
    if a == 0 and b == 0:
        raise UndefinedGcd("gcd(0, 0) is undefined")
    num = math.gcd(a.numerator * b.denominator, b.numerator * a.denominator)
    return Fraction(num, a.denominator * b.denominator)


def fractional_gcd_all(values) -> Fraction:
    """Fold fractional_gcd over values, skipping zeros."""
    acc = INF
    for v in values:
        if v != 0:
            acc = fractional_gcd(acc, v)
    if acc is INF:
        raise UndefinedGcd("no nonzero values")
    return acc


def rational_determinant(m: Sequence[Sequence]) -> Fraction:
    """Exact determinant by fraction-free (Bareiss) elimination."""
    n = len(m)
    if n == 0 or any(len(row) != n for row in m):
        raise ValueError("determinant needs a non-empty square matrix")
    a = [[as_rational(x) for x in row] for row in m]
    sign = 1
    prev = Fraction(1)
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return Fraction(0)
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]
