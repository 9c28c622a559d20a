"""Best-fit volume lattices for a single number field.

The pipeline for one field is: deduplicate and sort the volumes, build
rational coordinate vectors against greedily chosen independent volumes,
pick the dimension-sized subset with the smallest nonzero determinant, then
express every observed volume (geometric or exotic) in that basis.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import mpmath as mp

from .errors import (
    LatticeOverflow,
    LatticeViolation,
    NotInLattice,
    RankDeficient,
    TargetNotInvolved,
    TooManySubsets,
    Unsupported,
)
from .numerics import PrecisionContext, format_real
from .relations import (
    fractional_gcd,
    fractional_gcd_all,
    lindep,
    rational_coordinates,
    rational_determinant,
)

MAX_SUBSETS = 10**6
WEEKS_VOLUME = mp.mpf("0.9427")
WEEKS_MARGIN = mp.mpf("1e-3")


class SampleKind(enum.Enum):
    GEOMETRIC = "geometric"
    EXOTIC = "exotic"

    @classmethod
    def parse(cls, text: str) -> "SampleKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown sample kind {text!r}") from None


@dataclass(frozen=True)
class VolumeSample:
    name: str
    volume: mp.mpf
    kind: SampleKind = SampleKind.GEOMETRIC

    def __post_init__(self):
        if not self.name:
            raise ValueError("sample name must be non-empty")
        if not self.volume > 0:
            raise ValueError(f"volume of {self.name} must be positive")


@dataclass(frozen=True)
class RationalVecEntry:
    sample: VolumeSample
    coords: Tuple[Fraction, ...]


@dataclass(frozen=True)
class LatticeFit:
    dimension: int
    basis: Tuple[VolumeSample, ...]
    all_entries: Tuple[RationalVecEntry, ...]
    fit_ratio: Fraction
    best_det: Fraction
    det_gcd: Fraction

    @property
    def fit_ratio_is_integer(self) -> bool:
        return self.fit_ratio.denominator == 1

    def basis_entries(self) -> Tuple[RationalVecEntry, ...]:
        by_sample = {e.sample: e for e in self.all_entries}
        return tuple(by_sample[s] for s in self.basis)


class Flag(enum.Enum):
    UNDERDETERMINED = "UNDERDETERMINED"
    OVERFLOW = "OVERFLOW"
    NON_INTEGER_INDEX = "NON_INTEGER_INDEX"
    NOT_IN_LATTICE = "NOT_IN_LATTICE"


@dataclass(frozen=True)
class Expression:
    sample: VolumeSample
    coefficients: Optional[Tuple[Fraction, ...]]
    residual: Optional[mp.mpf] = None
    note: str = ""


@dataclass
class FitReport:
    """A lattice fit plus every observed volume expressed in its basis.

    ``fit_ratio`` is the smallest positive integer f for which f times every
    observed volume lies in the lattice spanned by the basis (the least
    common multiple of all coefficient denominators).  ``fit.fit_ratio`` is
    the determinant index of the chosen basis among the candidate volumes;
    the two agree when every observed volume is also a basis candidate.
    """

    fit: LatticeFit
    expressions: List[Expression]
    fit_ratio: int
    r2: int
    flags: List[Flag] = field(default_factory=list)
    field_label: str = ""

    @property
    def dimension(self) -> int:
        return self.fit.dimension

    @property
    def basis(self):
        return self.fit.basis

    def to_dict(self, ctx: PrecisionContext) -> dict:
        def frac(c):
            return str(c)

        return {
            "field": self.field_label,
            "r2": self.r2,
            "dimension": self.fit.dimension,
            "basis": [{"name": s.name, "volume": format_real(s.volume, ctx)} for s in self.fit.basis],
            "fit_ratio": self.fit_ratio,
            "index": str(self.fit.fit_ratio),
            "best_det": str(self.fit.best_det),
            "det_gcd": str(self.fit.det_gcd),
            "flags": [f.value for f in self.flags],
            "expressions": [
                {
                    "name": e.sample.name,
                    "volume": format_real(e.sample.volume, ctx),
                    "kind": e.sample.kind.value,
                    "coefficients": None if e.coefficients is None else [frac(c) for c in e.coefficients],
                    "note": e.note,
                }
                for e in self.expressions
            ],
        }

    def span_row(self, ctx: PrecisionContext) -> List[str]:
        return [
            self.field_label,
            " ".join(s.name for s in self.fit.basis),
            " ".join(format_real(s.volume, ctx) for s in self.fit.basis),
            str(self.fit_ratio),
        ]

    def combination_rows(self, ctx: PrecisionContext) -> List[List[str]]:
        rows = []
        for e in self.expressions:
            coeffs = "" if e.coefficients is None else " ".join(str(c) for c in e.coefficients)
            rows.append([e.sample.name, format_real(e.sample.volume, ctx), e.sample.kind.value, coeffs])
        return rows


# ---------------------------------------------------------------------------
# best-fit lattice search


def dedupe_tolerance(ctx: PrecisionContext):
    return min(ctx.eps(10), ctx.acceptance_tol)


def dedupe_volumes(samples: Sequence[VolumeSample], ctx: PrecisionContext) -> List[VolumeSample]:
    """Merge same-kind samples with equal volumes and sort by volume.

    Volumes within the dedupe tolerance collapse onto the sample with the
    lexicographically least name.
    """
    tol = dedupe_tolerance(ctx)
    with ctx.workdps():
        ordered = sorted(samples, key=lambda s: (s.volume, s.kind.value, s.name))
        kept: List[VolumeSample] = []
        for s in ordered:
            match = None
            for i in range(len(kept) - 1, -1, -1):
                k = kept[i]
                if s.volume - k.volume > tol:
                    break
                if k.kind is s.kind:
                    match = i
                    break
            if match is None:
                kept.append(s)
            elif s.name < kept[match].name:
                kept[match] = VolumeSample(s.name, kept[match].volume, s.kind)
        return sorted(kept, key=lambda s: (s.volume, s.kind.value, s.name))


def _is_integer_multiple(coords, prior) -> bool:
    """True if coords = k * prior for an integer k."""
    ratio = None
    for c, p in zip(coords, prior):
        if p == 0:
            if c != 0:
                return False
            continue
        r = c / p
        if ratio is None:
            ratio = r
        elif r != ratio:
            return False
    return ratio is not None and ratio.denominator == 1


def build_rational_vectors(
    sorted_samples: Sequence[VolumeSample], r2: int, ctx: PrecisionContext, coeff_bound: Optional[int] = None
) -> List[RationalVecEntry]:
    """First loop of the best-fit lattice algorithm.

    Each sample either opens a new coordinate direction (no relation with the
    volumes chosen so far), receives rational coordinates from a relation, or
    is dropped as an integer multiple of one earlier entry.  Raises
    LatticeOverflow once more than ``r2`` independent volumes appear.
    """
    if r2 < 1:
        raise ValueError("r2 must be at least 1")
    basis: List[VolumeSample] = []
    raw: List[Tuple[VolumeSample, List[Fraction]]] = []
    for s in sorted_samples:
        coords = None
        if basis:
            dep = lindep([s.volume] + [b.volume for b in basis], ctx, coeff_bound)
            if dep.found:
                try:
                    coords = rational_coordinates(dep)
                except TargetNotInvolved:
                    coords = None
        if coords is None:
            if len(basis) == r2:
                raise LatticeOverflow(
                    f"{s.name} is independent of {len(basis)} earlier volumes but the field has r2 = {r2}"
                )
            basis.append(s)
            coords = [Fraction(0)] * (len(basis) - 1) + [Fraction(1)]
        else:
            dim = len(basis)
            if any(_is_integer_multiple(coords, c + [Fraction(0)] * (dim - len(c))) for _, c in raw):
                continue
        raw.append((s, list(coords)))
    dim = len(basis)
    return [RationalVecEntry(s, tuple(c + [Fraction(0)] * (dim - len(c)))) for s, c in raw]


def _subset_key(subset):
    return (mp.fsum(e.sample.volume for e in subset), tuple(e.sample.name for e in subset))


def best_fit_basis(entries: Sequence[RationalVecEntry], dimension: int) -> LatticeFit:
    """Second loop: the subset with the smallest nonzero |determinant|."""
    if dimension < 1:
        raise ValueError("dimension must be positive")
    n = len(entries)
    if n < dimension:
        raise RankDeficient(f"{n} entries cannot span dimension {dimension}")
    if math.comb(n, dimension) > MAX_SUBSETS:
        raise TooManySubsets(
            f"{math.comb(n, dimension)} subsets exceed {MAX_SUBSETS}; pre-filter to the 40 smallest volumes"
        )
    g = None
    best = None
    best_key = None
    for subset in itertools.combinations(entries, dimension):
        det = rational_determinant([list(e.coords) for e in subset])
        if det == 0:
            continue
        g = abs(det) if g is None else fractional_gcd(g, det)
        key = (abs(det),) + _subset_key(subset)
        if best_key is None or key < best_key:
            best, best_key = (subset, det), key
    if best is None:
        raise RankDeficient("every determinant vanishes")
    subset, det = best
    return LatticeFit(
        dimension=dimension,
        basis=tuple(e.sample for e in subset),
        all_entries=tuple(entries),
        fit_ratio=abs(det) / g,
        best_det=det,
        det_gcd=g,
    )


def _unwrap(fit):
    if isinstance(fit, FitReport):
        return fit.fit, Fraction(fit.fit_ratio)
    return fit, fit.fit_ratio


def express_in_basis(target: VolumeSample, fit, ctx: PrecisionContext, coeff_bound: Optional[int] = None) -> List[Fraction]:
    """Rational coefficients of ``target`` over the basis volumes.

    ``fit`` may be a LatticeFit (denominators must divide its index) or a
    FitReport (denominators must divide its fit ratio).
    """
    lf, ratio = _unwrap(fit)
    dep = lindep([target.volume] + [b.volume for b in lf.basis], ctx, coeff_bound)
    if not dep.found:
        raise NotInLattice(f"{target.name} has no relation with the basis")
    try:
        coords = rational_coordinates(dep)
    except TargetNotInvolved as exc:
        raise NotInLattice(f"{target.name} is not involved in the relation found") from exc
    for c in coords:
        if (c * ratio).denominator != 1:
            raise LatticeViolation(
                f"{target.name} needs denominator {c.denominator}, beyond fit ratio {ratio}",
                coefficients=coords,
            )
    return coords


def _coords_in_basis(entry: RationalVecEntry, lf: LatticeFit) -> Tuple[Fraction, ...]:
    """Exact coordinates of a candidate entry in the chosen basis (Cramer)."""
    cols = [list(e.coords) for e in lf.basis_entries()]
    det = rational_determinant(cols)
    out = []
    for j in range(lf.dimension):
        m = [list(c) for c in cols]
        m[j] = list(entry.coords)
        out.append(rational_determinant(m) / det)
    return tuple(out)


def reconstruction_residual(sample: VolumeSample, coeffs, basis: Sequence[VolumeSample], ctx: PrecisionContext):
    with ctx.workdps():
        total = mp.fsum(mp.mpf(c.numerator) / c.denominator * b.volume for c, b in zip(coeffs, basis))
        return abs(sample.volume - total)


def fit_field(
    samples: Sequence[VolumeSample],
    r2: int,
    ctx: PrecisionContext,
    coeff_bound: Optional[int] = None,
    field_label: str = "",
) -> FitReport:
    """Fit a lattice to one field's volumes and express every sample in it.

    Geometric volumes choose the basis (all volumes do when none is
    geometric).  Raises LatticeOverflow if they span more than r2
    dimensions.
    """
    unique = dedupe_volumes(samples, ctx)
    if not unique:
        raise RankDeficient("no volumes to fit")
    candidates = [s for s in unique if s.kind is SampleKind.GEOMETRIC] or unique
    entries = build_rational_vectors(candidates, r2, ctx, coeff_bound)
    dim = len(entries[0].coords)
    flags = []
    if dim < r2:
        flags.append(Flag.UNDERDETERMINED)
    lf = best_fit_basis(entries, dim)
    if not lf.fit_ratio_is_integer:
        flags.append(Flag.NON_INTEGER_INDEX)

    by_sample = {e.sample: e for e in entries}
    expressions = []
    lcm = 1
    for s in unique:
        if s in by_sample:
            coeffs = _coords_in_basis(by_sample[s], lf)
            note = ""
        else:
            try:
                dep = lindep([s.volume] + [b.volume for b in lf.basis], ctx, coeff_bound)
                coeffs = tuple(rational_coordinates(dep)) if dep.found else None
            except TargetNotInvolved:
                coeffs = None
            note = "" if coeffs is not None else "no relation within the coefficient bound"
        if coeffs is None:
            if Flag.NOT_IN_LATTICE not in flags:
                flags.append(Flag.NOT_IN_LATTICE)
            expressions.append(Expression(s, None, None, note))
            continue
        for c in coeffs:
            lcm = math.lcm(lcm, c.denominator)
        expressions.append(Expression(s, coeffs, reconstruction_residual(s, coeffs, lf.basis, ctx), note))
    return FitReport(lf, expressions, lcm, r2, flags, field_label)


# ---------------------------------------------------------------------------
# diagnostics and plot data


@dataclass(frozen=True)
class WeeksDiagnostic:
    violation: bool
    generator: mp.mpf
    witnesses: Tuple[str, ...]
    message: str

    CODE = "STRENGTHENED-CONJECTURE-VIOLATION"


def check_weeks_bound(fit) -> WeeksDiagnostic:
    """Compare the implied lattice generator with the smallest closed volume.

    In one dimension the observed volumes generate the lattice g*Z with
    g = gcd(coordinates) * vol(basis).  A generator below 0.9427 (less a
    margin of 1e-3 for printed-digit truncation) is evidence against the
    strengthened conjecture, reported rather than raised.
    """
    lf, _ = _unwrap(fit)
    if lf.dimension != 1:
        raise Unsupported("the Weeks-bound check needs a one-dimensional lattice")
    base = lf.basis[0]
    if isinstance(fit, FitReport):
        pairs = [(e.sample, e.coefficients[0]) for e in fit.expressions if e.coefficients is not None]
    else:
        pairs = [(e.sample, _coords_in_basis(e, lf)[0]) for e in lf.all_entries]
    coords = [c for _, c in pairs]
    gcd = fractional_gcd_all(coords)
    generator = base.volume * mp.mpf(gcd.numerator) / gcd.denominator
    if generator < WEEKS_VOLUME - WEEKS_MARGIN:
        witnesses = (base.name,) + tuple(s.name for s, c in pairs if c.denominator != 1)
        msg = (
            f"{WeeksDiagnostic.CODE}: implied generator {mp.nstr(generator, 6)} < {WEEKS_VOLUME} "
            f"(witnesses: {', '.join(witnesses)})"
        )
        return WeeksDiagnostic(True, generator, witnesses, msg)
    return WeeksDiagnostic(False, generator, (base.name,), f"generator {mp.nstr(generator, 6)}: no violation")


@dataclass(frozen=True)
class GridPoint:
    x: mp.mpf
    y: mp.mpf
    a: Fraction
    b: Fraction
    label: str = ""
    kind: str = "lattice"


def lattice_grid(fit, x_range, y_range, ctx: Optional[PrecisionContext] = None) -> List[GridPoint]:
    """Plot data for a 2-D lattice: grid points then observed samples.

    Grid coefficients run over ``x_range`` and ``y_range`` (inclusive) in
    steps of 1/fit_ratio; each observed sample sits at
    (c1 * vol(g1), c2 * vol(g2)).
    """
    lf, ratio = _unwrap(fit)
    if lf.dimension != 2:
        raise Unsupported("lattice grids are two-dimensional")
    ctx = ctx or PrecisionContext()
    step = Fraction(1, ratio.numerator) if ratio.denominator == 1 else Fraction(1)
    g1, g2 = lf.basis[0].volume, lf.basis[1].volume

    def frange(lo, hi):
        lo, hi = Fraction(lo), Fraction(hi)
        k = math.ceil(lo / step)
        out = []
        while k * step <= hi:
            out.append(k * step)
            k += 1
        return out

    def scale(c, g):
        return mp.mpf(c.numerator) / c.denominator * g

    points = []
    with ctx.workdps():
        for a in frange(*x_range):
            for b in frange(*y_range):
                points.append(GridPoint(scale(a, g1), scale(b, g2), a, b))
        if isinstance(fit, FitReport):
            for e in fit.expressions:
                if e.coefficients is None:
                    continue
                a, b = e.coefficients
                points.append(GridPoint(scale(a, g1), scale(b, g2), a, b, e.sample.name, e.sample.kind.value))
        else:
            for e in lf.all_entries:
                a, b = _coords_in_basis(e, lf)
                points.append(GridPoint(scale(a, g1), scale(b, g2), a, b, e.sample.name, e.sample.kind.value))
    return points
