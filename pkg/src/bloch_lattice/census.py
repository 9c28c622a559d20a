"""Census ingestion, grouping by concrete field, surgery grids and field statistics."""

from __future__ import annotations

import csv
import enum
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import mpmath as mp

from .errors import FormatError
from .lattice import SampleKind, VolumeSample
from .numerics import IntPolynomial, PrecisionContext, count_complex_places, parse_complex, parse_real, roots

CENSUS_COLUMNS = ["name", "kind", "volume", "poly_degree", "poly_coeffs", "root_re", "root_im", "root_index"]
COMPLETE_COLUMNS = ["poly_coeffs", "discriminant"]
LOW_PRECISION_DIGITS = 50
ROOT_WARN_THRESHOLD = mp.mpf("1e-10")
# surgery coefficient bound by cusp count, as used for the census grid
SURGERY_BOUNDS = {1: 16, 2: 12, 3: 8, 4: 6, 5: 4, 6: 3, 7: 3}
SURGERY_BOUND_MANY = 2


@dataclass(frozen=True)
class CensusRecord:
    manifold_name: str
    volume: str
    kind: SampleKind
    polynomial: IntPolynomial
    root_approx: mp.mpc
    root_index: int
    low_precision: bool = False

    def sample(self, ctx: PrecisionContext) -> VolumeSample:
        return VolumeSample(self.manifold_name, parse_real(self.volume, ctx), self.kind)


@dataclass(frozen=True)
class RowIssue:
    line: int
    message: str


@dataclass
class ParsedCensus:
    records: List[CensusRecord]
    errors: List[RowIssue] = field(default_factory=list)
    warnings: List[RowIssue] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def significant_digits(text: str) -> int:
    mantissa = re.split(r"[eE]", text.strip().rstrip(".…").lstrip("+-"))[0]
    digits = mantissa.replace(".", "").lstrip("0")
    return len(digits)


def relative_root_residual(p: IntPolynomial, r, ctx: PrecisionContext):
    with ctx.workdps():
        r = mp.mpc(r)
        scale = mp.fsum(abs(c) * abs(r) ** i for i, c in enumerate(p.coefficients))
        return abs(p(r)) / scale


def _open_text(stream):
    if isinstance(stream, (str, bytes)):
        raise TypeError("pass an open text stream, not a string")
    return stream


def parse_census_csv(stream, ctx: Optional[PrecisionContext] = None) -> ParsedCensus:
    """Read census rows; malformed rows are reported, not fatal.

    The header must list exactly the census columns in order.
    """
    ctx = ctx or PrecisionContext()
    reader = csv.reader(_open_text(stream))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != CENSUS_COLUMNS:
        raise FormatError(f"census header must be {','.join(CENSUS_COLUMNS)}")
    out = ParsedCensus([])
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            out.records.append(_parse_row(row, ctx, line, out.warnings))
        except (ValueError, ArithmeticError) as exc:
            out.errors.append(RowIssue(line, str(exc)))
    return out


def _parse_row(row, ctx, line, warn_list) -> CensusRecord:
    if len(row) != len(CENSUS_COLUMNS):
        raise ValueError(f"expected {len(CENSUS_COLUMNS)} columns, found {len(row)}")
    name, kind, volume, degree, coeffs, re_s, im_s, index = (cell.strip() for cell in row)
    if not name:
        raise ValueError("empty manifold name")
    sample_kind = SampleKind.parse(kind)
    vol = parse_real(volume, ctx)
    if not vol > 0:
        raise ValueError(f"volume must be positive, got {volume}")
    poly = IntPolynomial.parse(coeffs)
    if int(degree) != poly.degree or len(coeffs.split()) != int(degree) + 1:
        raise ValueError(f"poly_degree {degree} does not match {len(coeffs.split())} coefficients")
    root = parse_complex(f"{re_s}{'' if im_s.startswith(('-', '+')) else '+'}{im_s}i", ctx)
    root_index = int(index)
    if root_index < 0:
        raise ValueError("root_index must be non-negative")
    resid = relative_root_residual(poly, root, ctx)
    if resid > ROOT_WARN_THRESHOLD:
        warn_list.append(RowIssue(line, f"{name}: root residual {mp.nstr(resid, 3)} relative to coefficients"))
    return CensusRecord(
        manifold_name=name,
        volume=volume,
        kind=sample_kind,
        polynomial=poly,
        root_approx=root,
        root_index=root_index,
        low_precision=significant_digits(volume) < LOW_PRECISION_DIGITS,
    )


def read_census(path, ctx: Optional[PrecisionContext] = None) -> ParsedCensus:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_census_csv(fh, ctx)


def write_census(records: Iterable[CensusRecord], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CENSUS_COLUMNS)
    for r in records:
        w.writerow([
            r.manifold_name,
            r.kind.value,
            r.volume,
            r.polynomial.degree,
            " ".join(str(c) for c in r.polynomial.coefficients),
            mp.nstr(r.root_approx.real, 30),
            mp.nstr(r.root_approx.imag, 30),
            r.root_index,
        ])


# ---------------------------------------------------------------------------
# concrete fields


@dataclass(frozen=True, order=True)
class FieldKey:
    """A polynomial (content-free, positive leading coefficient) and one of its roots.

    Roots are numbered from 0 after sorting by real part, then imaginary
    part, so complex-conjugate roots give different keys.
    """

    degree: int
    coefficients: Tuple[int, ...]
    root_index: int

    @classmethod
    def of(cls, p: IntPolynomial, root_index: int) -> "FieldKey":
        q = p.canonical()
        if not 0 <= root_index < q.degree:
            raise ValueError(f"root index {root_index} out of range for degree {q.degree}")
        return cls(q.degree, q.coefficients, root_index)

    @classmethod
    def parse(cls, text: str) -> "FieldKey":
        """Selector syntax ``"<ascending coeffs>:<root index>"``, e.g. ``"4,0,-3,0,1:1"``."""
        try:
            coeffs, index = text.rsplit(":", 1)
            return cls.of(IntPolynomial.parse(coeffs), int(index))
        except ValueError as exc:
            raise ValueError(f"bad field selector {text!r}: {exc}") from None

    @property
    def polynomial(self) -> IntPolynomial:
        return IntPolynomial(self.coefficients)

    def __str__(self):
        return ",".join(str(c) for c in self.coefficients) + f":{self.root_index}"


_root_cache: Dict[Tuple[Tuple[int, ...], int], tuple] = {}


def canonical_roots(p: IntPolynomial, ctx: PrecisionContext) -> tuple:
    key = (p.canonical().coefficients, ctx.digits)
    if key not in _root_cache:
        _root_cache[key] = roots(p.canonical(), ctx).roots
    return _root_cache[key]


def locate_root(p: IntPolynomial, approx, ctx: PrecisionContext) -> int:
    """Index of the root nearest ``approx``; ValueError if the match is ambiguous."""
    rs = canonical_roots(p, ctx)
    with ctx.workdps():
        dists = sorted((abs(r - approx), i) for i, r in enumerate(rs))
        if len(dists) > 1 and dists[0][0] >= dists[1][0] / 4:
            raise ValueError(f"root {mp.nstr(approx, 8)} is not clearly closest to a single root of {p}")
        return dists[0][1]


def conjugate_index(p: IntPolynomial, index: int, ctx: PrecisionContext) -> int:
    rs = canonical_roots(p, ctx)
    with ctx.workdps():
        target = mp.conj(rs[index])
        return min(range(len(rs)), key=lambda i: abs(rs[i] - target))


@dataclass
class Grouping:
    groups: Dict[FieldKey, List[VolumeSample]]
    quarantined: List[Tuple[CensusRecord, str]] = field(default_factory=list)

    def __getitem__(self, key):
        return self.groups[key]

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def items(self):
        return self.groups.items()


def group_by_field(records: Iterable[CensusRecord], ctx: Optional[PrecisionContext] = None) -> Grouping:
    """Group volumes by concrete field.

    The field of a record is its polynomial together with the root nearest
    the record's approximate root.  Records whose root cannot be matched
    unambiguously are quarantined.
    """
    ctx = ctx or PrecisionContext()
    buckets: Dict[FieldKey, List[VolumeSample]] = {}
    quarantined = []
    for rec in records:
        try:
            idx = locate_root(rec.polynomial, rec.root_approx, ctx)
            key = FieldKey.of(rec.polynomial, idx)
            buckets.setdefault(key, []).append(rec.sample(ctx))
        except (ValueError, ArithmeticError) as exc:
            quarantined.append((rec, str(exc)))
    groups = {}
    for key in sorted(buckets):
        groups[key] = sorted(buckets[key], key=lambda s: (s.volume, s.kind.value, s.name))
    return Grouping(groups, quarantined)


# ---------------------------------------------------------------------------
# Dehn surgery grid


def surgery_bound(cusp_count: int) -> int:
    if cusp_count < 1:
        raise ValueError("cusp count must be at least 1")
    return SURGERY_BOUNDS.get(cusp_count, SURGERY_BOUND_MANY)


def enumerate_surgeries(cusp_count: int) -> List[Tuple[int, int]]:
    """Coprime (p, q) with 0 <= p <= L and |q| <= L, L set by the cusp count."""
    L = surgery_bound(cusp_count)
    return [(p, q) for p in range(L + 1) for q in range(-L, L + 1) if math.gcd(p, q) == 1]


# ---------------------------------------------------------------------------
# observed-field statistics


class CountMode(enum.Enum):
    CONCRETE = "concrete"
    ABSTRACT = "abstract"


@dataclass(frozen=True)
class FieldStatsRow:
    degree: int
    discriminant_bound: int
    r2: int
    found: int
    total: int
    mode: CountMode = CountMode.CONCRETE

    def __post_init__(self):
        if not 0 <= self.found <= self.total:
            raise ValueError("need 0 <= found <= total")

    @property
    def percentage(self) -> Optional[Fraction]:
        """Exact 100 * found / total, or None when the total is zero."""
        if self.total == 0:
            return None
        return Fraction(100 * self.found, self.total)

    def rendered_percentage(self) -> str:
        """One decimal place, truncated rather than rounded; an empty total renders as a placeholder."""
        pct = self.percentage
        if pct is None:
            return "—"
        tenths = math.floor(pct * 10)
        return f"{tenths // 10}.{tenths % 10}%"

    def as_row(self) -> List[str]:
        return [
            self.mode.value,
            str(self.degree),
            str(self.discriminant_bound),
            str(self.r2),
            str(self.found),
            str(self.total),
            self.rendered_percentage(),
        ]


STATS_COLUMNS = ["mode", "degree", "bound", "r2", "found", "total", "percentage"]


def parse_complete_census(stream) -> List[Tuple[IntPolynomial, int]]:
    reader = csv.reader(_open_text(stream))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != COMPLETE_COLUMNS:
        raise FormatError(f"complete-census header must be {','.join(COMPLETE_COLUMNS)}")
    rows = []
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise FormatError(f"line {reader.line_num}: expected 2 columns")
        try:
            rows.append((IntPolynomial.parse(row[0]), int(row[1])))
        except ValueError as exc:
            raise FormatError(f"line {reader.line_num}: {exc}") from None
    return rows


def _r2_cached(p: IntPolynomial, ctx: PrecisionContext, cache: dict) -> int:
    key = p.canonical().coefficients
    if key not in cache:
        cache[key] = count_complex_places(p.canonical(), ctx)
    return cache[key]


def field_statistics(
    observed: Iterable[FieldKey],
    complete_census: Sequence[Tuple[IntPolynomial, int]],
    mode: CountMode,
    degree: int,
    bound: int,
    r2: int,
    ctx: Optional[PrecisionContext] = None,
) -> FieldStatsRow:
    """Fraction of census fields (degree n, |D|^(1/n) <= bound, given r2) that were observed.

    ABSTRACT counts polynomials.  CONCRETE counts a polynomial once per
    complex place; an observed key and its complex conjugate are the same
    place.
    """
    ctx = ctx or PrecisionContext(30)
    cache: Dict = {}
    limit = bound**degree
    selected = set()
    for p, disc in complete_census:
        if p.degree != degree or abs(disc) > limit:
            continue
        if _r2_cached(p, ctx, cache) != r2:
            continue
        selected.add(p.canonical().coefficients)
    if mode is CountMode.ABSTRACT:
        total = len(selected)
        found = len({k.coefficients for k in observed if k.coefficients in selected})
    else:
        total = r2 * len(selected)
        places = set()
        for k in observed:
            if k.coefficients not in selected:
                continue
            rs = canonical_roots(k.polynomial, ctx)
            idx = k.root_index
            if rs[idx].imag == 0:
                continue
            if rs[idx].imag < 0:
                idx = conjugate_index(k.polynomial, idx, ctx)
            places.add((k.coefficients, idx))
        found = len(places)
    return FieldStatsRow(degree, bound, r2, found, total, mode)


def read_observed_keys(stream, ctx: Optional[PrecisionContext] = None) -> Tuple[List[FieldKey], ParsedCensus, Grouping]:
    """Observed field keys from a census CSV."""
    parsed = parse_census_csv(stream, ctx)
    grouping = group_by_field(parsed.records, ctx)
    return list(grouping.groups), parsed, grouping
