"""Multiprecision arithmetic, polynomial roots and the Bloch-Wigner function.

Every public operation takes a :class:`PrecisionContext` and runs inside
``mpmath.workdps`` so callers never depend on the global mpmath state.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import mpmath as mp

from .errors import DegenerateSimplex, QuadratureFailure, RootFindingFailure

DEFAULT_DIGITS = 64
GUARD_DIGITS = 10
PRECISION_ENV = "BLOCH_LATTICE_PRECISION"


@dataclass(frozen=True)
class PrecisionContext:
    """Decimal working precision.

    ``digits`` is the precision the data is trusted to.  Internal arithmetic
    runs with :data:`GUARD_DIGITS` extra digits (and never below 20 digits
    even in low-precision mode, which exists to replay printed tables).
    ``tolerance`` overrides the default acceptance tolerance for declaring an
    integer combination zero.
    """

    digits: int = DEFAULT_DIGITS
    low_precision: bool = False
    tolerance: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.digits, int) or isinstance(self.digits, bool):
            raise TypeError("digits must be an int")
        floor = 6 if self.low_precision else 20
        if self.digits < floor:
            raise ValueError(
                f"digits={self.digits} below minimum {floor}"
                + ("" if self.low_precision else " (use low_precision for printed tables)")
            )
        if self.tolerance is not None:
            if mp.mpf(str(self.tolerance)) <= 0:
                raise ValueError("tolerance must be positive")

    @classmethod
    def from_env(cls, default: int = DEFAULT_DIGITS) -> "PrecisionContext":
        return cls(int(os.environ.get(PRECISION_ENV, default)))

    @property
    def work_dps(self) -> int:
        return max(self.digits, 20) + GUARD_DIGITS

    @property
    def numeric_digits(self) -> int:
        """Digits that computed (not ingested) quantities are accurate to."""
        return max(self.digits, 20)

    def eps(self, slack: int) -> mp.mpf:
        """``10**(slack - digits)`` using the computed-quantity precision."""
        with mp.workdps(self.work_dps):
            return mp.mpf(10) ** (slack - self.numeric_digits)

    @property
    def acceptance_tol(self) -> mp.mpf:
        with mp.workdps(self.work_dps):
            if self.tolerance is not None:
                return mp.mpf(str(self.tolerance))
            return mp.mpf(10) ** (mp.mpf(-self.digits) / 4)

    @property
    def certify_limit(self) -> mp.mpf:
        with mp.workdps(self.work_dps):
            return mp.mpf(10) ** (mp.mpf(-self.digits) / 4)

    def workdps(self):
        return mp.workdps(self.work_dps)


class _Infinity:
    """The point at infinity of the Riemann sphere."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()

BigComplex = Union[mp.mpc, _Infinity]


def is_inf(z) -> bool:
    return z is INF


# ---------------------------------------------------------------------------
# decimal text I/O

_REAL = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_COMPLEX_RE = re.compile(
    rf"^\s*(?:(?P<re>{_REAL})\s*)?(?:(?P<sign>[+-])?\s*(?P<im>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*[ijIJ])?\s*$"
)
_TRUNCATION_MARKS = ("...", "…")


def parse_real(text: str, ctx: PrecisionContext) -> mp.mpf:
    """Parse a decimal string.

    A trailing ``...`` (or the unicode ellipsis) marks a truncated printed
    value; it is read as the midpoint of its truncation interval, e.g.
    ``"4.4986..."`` becomes 4.49865.
    """
    s = str(text).strip()
    truncated = False
    for mark in _TRUNCATION_MARKS:
        if s.endswith(mark):
            s = s[: -len(mark)].strip()
            truncated = True
    if not re.fullmatch(_REAL, s):
        raise ValueError(f"not a decimal number: {text!r}")
    with ctx.workdps():
        value = mp.mpf(s)
        if truncated:
            mantissa = s.split("e")[0].split("E")[0]
            decimals = len(mantissa.split(".")[1]) if "." in mantissa else 0
            exponent = int(s.lower().split("e")[1]) if "e" in s.lower() else 0
            half_ulp = mp.mpf(10) ** (exponent - decimals) / 2
            value += half_ulp if value >= 0 else -half_ulp
        return +value


def parse_complex(text: str, ctx: PrecisionContext) -> BigComplex:
    """Parse ``"a+bi"``, ``"a"``, ``"bi"``, ``"i"`` or ``"inf"``."""
    s = str(text).strip()
    if s.lower() in ("inf", "infinity", "∞"):
        return INF
    m = _COMPLEX_RE.match(s)
    if not m or (m.group("re") is None and not re.search(r"[ijIJ]", s)):
        raise ValueError(f"not a complex number: {text!r}")
    with ctx.workdps():
        re_part = mp.mpf(m.group("re")) if m.group("re") else mp.mpf(0)
        im_part = mp.mpf(0)
        if re.search(r"[ijIJ]\s*$", s):
            mag = mp.mpf(m.group("im")) if m.group("im") else mp.mpf(1)
            if m.group("sign") is None and m.group("re") is not None:
                # "3i" parsed as re="3": move it across
                im_part, re_part = re_part, mp.mpf(0)
            else:
                im_part = -mag if m.group("sign") == "-" else mag
        return mp.mpc(re_part, im_part)


def format_real(x, ctx: PrecisionContext) -> str:
    """Decimal string with ``ctx.digits`` significant digits."""
    if x is INF:
        return "inf"
    with ctx.workdps():
        x = mp.mpf(x)
        if x == 0:
            return "0.0"
        return mp.nstr(x, ctx.digits, min_fixed=-5, max_fixed=ctx.digits)


def format_complex(z, ctx: PrecisionContext) -> str:
    if z is INF:
        return "inf"
    with ctx.workdps():
        z = mp.mpc(z)
        re_s = format_real(z.real, ctx)
        if z.imag == 0:
            return re_s
        im_s = format_real(abs(z.imag), ctx)
        return f"{re_s}{'-' if z.imag < 0 else '+'}{im_s}i"


# ---------------------------------------------------------------------------
# Bloch-Wigner dilogarithm


def _check_nondegenerate(z):
    if z is INF:
        raise DegenerateSimplex("argument is infinity")
    z = mp.mpc(z)
    if z == 0 or z == 1:
        raise DegenerateSimplex(f"degenerate argument {z}")
    return z


@lru_cache(maxsize=16)
def _bernoulli_coefficients(dps: int, count: int):
    with mp.workdps(dps):
        return tuple(mp.bernoulli(n) / mp.factorial(n + 1) for n in range(count))


def _li2_bernoulli(u, dps: int):
    """Li2(1 - exp(-u)) via sum_n B_n u^(n+1)/(n+1)!, valid for |u| < 2*pi."""
    # |B_n/(n+1)!| ~ 2 (2 pi)^-n, so the tail decays like (|u| / 2 pi)^n
    ratio = abs(u) / (2 * mp.pi)
    if ratio == 0:
        return mp.mpc(0)
    n_terms = int(dps / max(-mp.log10(ratio), mp.mpf("0.05"))) + 4
    coeffs = _bernoulli_coefficients(dps, n_terms + 2)
    u2 = u * u
    # B_1 is the only odd-index Bernoulli number that is nonzero
    total = u + coeffs[1] * u2
    power = u
    for n in range(2, n_terms + 1, 2):
        power *= u2
        total += coeffs[n] * power
    return total


def _reduce_argument(z):
    """Pick the image of z under the anharmonic group minimising |log(1 - w)|.

    Returns (w, sign) with D(z) = sign * D(w).
    """
    images = (
        (z, 1),
        (1 / z, -1),
        (1 - z, -1),
        (1 / (1 - z), 1),
        (1 - 1 / z, 1),
        (z / (z - 1), -1),
    )
    return min(images, key=lambda ws: abs(mp.log(1 - ws[0])))


def dilog_D(z, ctx: PrecisionContext) -> mp.mpf:
    """Bloch-Wigner function D(z) = Im Li2(z) + arg(1 - z) log|z|.

    This is the volume of the ideal tetrahedron with cross-ratio z (positive
    for Im z > 0).  Evaluated by a Bernoulli-number series after mapping z
    into the region where that series converges fastest.
    """
    with ctx.workdps():
        z = _check_nondegenerate(z)
        if z.imag == 0:
            return mp.mpf(0)
        w, sign = _reduce_argument(z)
        u = -mp.log(1 - w)
        li2 = _li2_bernoulli(u, ctx.work_dps)
        value = li2.imag + mp.arg(1 - w) * mp.log(abs(w))
        return +(sign * value)


def dilog_D_quadrature(z, ctx: PrecisionContext) -> mp.mpf:
    """Independent evaluation of D(z) by numerical integration.

    Integrates log(1 - t z)/t over [0, 1] with tanh-sinh quadrature; used only
    as a test oracle for :func:`dilog_D`.
    """
    with ctx.workdps():
        z = _check_nondegenerate(z)
        inv = 1 / z
        if inv.imag == 0 and 0 < inv.real < 1:
            raise DegenerateSimplex("integration path crosses the branch point")
        points = [mp.mpf(0), mp.mpf(1)]
        # split near the closest approach to the branch point 1/z
        t_near = inv.real
        if 0 < t_near < 1:
            points = [mp.mpf(0), t_near, mp.mpf(1)]

        def integrand(t):
            return mp.log(1 - t * z) / t

        target = ctx.eps(5)
        for degree in (8, 10, 12):
            value, err = mp.quad(integrand, points, error=True, maxdegree=degree)
            if err <= target / 100:
                break
        else:
            raise QuadratureFailure(f"quadrature error estimate {mp.nstr(err, 5)} for z={z}")
        # Li2(z) = -integral, so Im Li2 = -Im(integral)
        return +(-value.imag + mp.arg(1 - z) * mp.log(abs(z)))


# ---------------------------------------------------------------------------
# integer polynomials and their roots


@dataclass(frozen=True)
class IntPolynomial:
    """Integer polynomial, coefficients in ascending degree."""

    coefficients: tuple

    def __init__(self, coefficients: Sequence[int]):
        coeffs = tuple(int(c) for c in coefficients)
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        if len(coeffs) < 2:
            raise ValueError("polynomial degree must be at least 1")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * x + c
        return acc

    def derivative_at(self, x):
        acc = 0
        for k in range(self.degree, 0, -1):
            acc = acc * x + k * self.coefficients[k]
        return acc

    def canonical(self) -> "IntPolynomial":
        """Content-free with positive leading coefficient."""
        from math import gcd

        g = 0
        for c in self.coefficients:
            g = gcd(g, c)
        sign = 1 if self.coefficients[-1] > 0 else -1
        return IntPolynomial([sign * c // g for c in self.coefficients])

    def __str__(self):
        return ",".join(str(c) for c in self.coefficients)

    @classmethod
    def parse(cls, text: str) -> "IntPolynomial":
        """Ascending coefficients separated by commas or whitespace."""
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        return cls([int(p) for p in parts])


@dataclass(frozen=True)
class RootSet:
    roots: tuple
    residual_bound: mp.mpf

    def __len__(self):
        return len(self.roots)

    def __iter__(self):
        return iter(self.roots)

    def __getitem__(self, i):
        return self.roots[i]


def _initial_guesses(coeffs, n):
    # coeffs ascending, leading coefficient coeffs[n]
    lead = mp.mpf(coeffs[n])
    center = -mp.mpf(coeffs[n - 1]) / (n * lead)
    radius = max(
        (abs(mp.mpf(coeffs[n - k]) / lead) ** (mp.mpf(1) / k) for k in range(1, n + 1)),
        default=mp.mpf(1),
    )
    radius = max(radius, mp.mpf("0.5"))
    return [center + radius * mp.expj(2 * mp.pi * k / n + mp.mpf("0.4")) for k in range(n)]


def _aberth(p: IntPolynomial, tol, max_iter: int):
    n = p.degree
    zs = _initial_guesses(p.coefficients, n)
    for iteration in range(max_iter):
        max_step = mp.mpf(0)
        for k in range(n):
            zk = zs[k]
            val = p(zk)
            if val == 0:
                continue
            ratio = val / p.derivative_at(zk) if p.derivative_at(zk) != 0 else mp.mpc(tol)
            repulsion = mp.fsum(1 / (zk - zs[j]) for j in range(n) if j != k and zk != zs[j])
            step = ratio / (1 - ratio * repulsion)
            zs[k] = zk - step
            max_step = max(max_step, abs(step) / max(1, abs(zs[k])))
        if max_step <= tol:
            return zs, iteration + 1
    return zs, max_iter


def _ordered(values, tol):
    """Sort by real part, breaking near-ties (within tol) by imaginary part."""
    by_re = sorted(values, key=lambda z: (z.real, z.imag))
    ordered, group = [], []
    for z in by_re:
        if group and abs(z.real - group[0].real) > tol:
            ordered.extend(sorted(group, key=lambda w: w.imag))
            group = []
        group.append(z)
    ordered.extend(sorted(group, key=lambda w: w.imag))
    return ordered


def roots(p: IntPolynomial, ctx: PrecisionContext) -> RootSet:
    """All complex roots of ``p`` by Aberth-Ehrlich simultaneous iteration.

    Seeds are fixed (rotated roots of unity around the root centroid), so the
    output order is reproducible.  Roots with ``|Im| <= 10**(10 - digits)``
    are snapped to the real axis, non-real roots are returned as exact
    conjugate pairs, and the list is sorted by (Re, Im).
    """
    with ctx.workdps():
        n = p.degree
        snap = ctx.eps(10)
        max_iter = 100 * n + 500
        zs, _ = _aberth(p, mp.mpf(10) ** (-ctx.work_dps + 3), max_iter)
        # Newton polish
        for k in range(n):
            for _ in range(3):
                d = p.derivative_at(zs[k])
                if d == 0:
                    break
                zs[k] = zs[k] - p(zs[k]) / d
        rho = max(mp.mpf(1), max(abs(z) for z in zs))
        scale = 1 + mp.fsum(abs(c) * rho**i for i, c in enumerate(p.coefficients))
        bound = snap * scale
        residuals = [abs(p(z)) for z in zs]
        worst = max(residuals)
        if worst > bound:
            raise RootFindingFailure(
                f"root iteration did not converge for {p}", best_residual=worst
            )

        real, upper, lower = [], [], []
        for z in zs:
            if abs(z.imag) <= snap * max(1, abs(z)):
                real.append(mp.mpc(z.real, 0))
            elif z.imag > 0:
                upper.append(z)
            else:
                lower.append(z)
        if len(upper) != len(lower):
            raise RootFindingFailure(f"unpaired complex roots for {p}", best_residual=worst)
        paired = []
        remaining = list(lower)
        for z in upper:
            j = min(range(len(remaining)), key=lambda i: abs(remaining[i] - mp.conj(z)))
            partner = remaining.pop(j)
            if abs(partner - mp.conj(z)) > mp.sqrt(snap) * max(1, abs(z)):
                raise RootFindingFailure(f"conjugate pairing failed for {p}", best_residual=worst)
            mid = (z + mp.conj(partner)) / 2
            paired.extend([mid, mp.conj(mid)])
        result = _ordered(real + paired, snap)
        return RootSet(tuple(result), +bound)


def count_complex_places(p: IntPolynomial, ctx: PrecisionContext) -> int:
    """Number r2 of conjugate pairs of non-real roots."""
    rs = roots(p, ctx)
    nonreal = sum(1 for z in rs if z.imag != 0)
    return nonreal // 2
