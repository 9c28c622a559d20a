"""Ideal triangulations: shapes, gluing equations, Ptolemy coordinates, volume.

Angle slots follow the usual convention for a simplex with cross-ratio z:
edges 01 and 23 carry ``Z = z``, edges 03 and 12 carry
``ZPRIME = (z - 1)/z`` and edges 02 and 13 carry ``ZPRIMEPRIME = 1/(1 - z)``.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FilePath
from typing import List, Optional, Sequence, Tuple

import mpmath as mp

from .errors import (
    DegenerateSimplex,
    InvalidPath,
    InvalidPtolemy,
    SingularSystem,
    SolveFailure,
)
from .numerics import PrecisionContext, dilog_D, is_inf, parse_complex

FORMAT_NAME = "bloch-lattice-triangulation"
FORMAT_VERSION = 1
EDGES = ("01", "02", "03", "12", "13", "23")
MAX_NEWTON_ITERATIONS = 200


class Slot(enum.Enum):
    Z = "Z"
    ZPRIME = "ZPRIME"
    ZPRIMEPRIME = "ZPRIMEPRIME"


EDGE_SLOT = {
    "01": Slot.Z,
    "23": Slot.Z,
    "03": Slot.ZPRIME,
    "12": Slot.ZPRIME,
    "02": Slot.ZPRIMEPRIME,
    "13": Slot.ZPRIMEPRIME,
}


def _default_ctx(ctx):
    return ctx if ctx is not None else PrecisionContext()


# ---------------------------------------------------------------------------
# cross-ratios and shape parameters


def cross_ratio(a, b, c, d, ctx: Optional[PrecisionContext] = None):
    """(c - a)(d - b) / ((d - a)(c - b)), with one point allowed at infinity."""
    ctx = _default_ctx(ctx)
    pts = (a, b, c, d)
    if sum(1 for p in pts if is_inf(p)) > 1:
        raise DegenerateSimplex("repeated point at infinity")
    with ctx.workdps():
        finite = [mp.mpc(p) for p in pts if not is_inf(p)]
        for i in range(len(finite)):
            for j in range(i + 1, len(finite)):
                if finite[i] == finite[j]:
                    raise DegenerateSimplex("repeated vertex")
        if is_inf(a):
            b, c, d = mp.mpc(b), mp.mpc(c), mp.mpc(d)
            return (d - b) / (c - b)
        if is_inf(b):
            a, c, d = mp.mpc(a), mp.mpc(c), mp.mpc(d)
            return (c - a) / (d - a)
        if is_inf(c):
            a, b, d = mp.mpc(a), mp.mpc(b), mp.mpc(d)
            return (d - b) / (d - a)
        if is_inf(d):
            a, b, c = mp.mpc(a), mp.mpc(b), mp.mpc(c)
            return (c - a) / (c - b)
        a, b, c, d = (mp.mpc(p) for p in pts)
        return (c - a) * (d - b) / ((d - a) * (c - b))


def shape_parameters(z, ctx: Optional[PrecisionContext] = None):
    """The triple (z, (z - 1)/z, 1/(1 - z))."""
    ctx = _default_ctx(ctx)
    if is_inf(z):
        raise DegenerateSimplex("shape at infinity")
    with ctx.workdps():
        z = mp.mpc(z)
        if z == 0 or z == 1:
            raise DegenerateSimplex(f"degenerate shape {z}")
        return (z, (z - 1) / z, 1 / (1 - z))


def _slot_value(z, slot: Slot):
    if slot is Slot.Z:
        return z
    if slot is Slot.ZPRIME:
        return (z - 1) / z
    return 1 / (1 - z)


def _slot_log_derivative(z, slot: Slot):
    # d/dz of log(slot value)
    if slot is Slot.Z:
        return 1 / z
    if slot is Slot.ZPRIME:
        return 1 / (z * (z - 1))
    return 1 / (1 - z)


# ---------------------------------------------------------------------------
# data model


@dataclass(frozen=True)
class Step:
    simplex: int
    slot: Slot
    exponent: int = 1


@dataclass(frozen=True)
class Path:
    """A sequence of (simplex, slot) factors; exponents allow inverse factors."""

    steps: Tuple[Step, ...]

    def __post_init__(self):
        if not self.steps:
            raise InvalidPath("path has no steps")

    @classmethod
    def of(cls, *items) -> "Path":
        steps = []
        for item in items:
            if isinstance(item, Step):
                steps.append(item)
            else:
                simplex, slot, *rest = item
                steps.append(Step(int(simplex), Slot(slot), int(rest[0]) if rest else 1))
        return cls(tuple(steps))

    def __add__(self, other: "Path") -> "Path":
        return Path(self.steps + other.steps)

    def exponents(self) -> Counter:
        """Net exponent per (simplex, slot), ignoring order."""
        c = Counter()
        for s in self.steps:
            c[(s.simplex, s.slot)] += s.exponent
        return Counter({k: v for k, v in c.items() if v})


@dataclass(frozen=True)
class Cusp:
    meridian: Path
    longitude: Path


@dataclass(frozen=True)
class Triangulation:
    simplices: int
    edge_classes: Tuple[Tuple[Tuple[int, str], ...], ...]
    edge_paths: Tuple[Path, ...]
    cusps: Tuple[Cusp, ...] = ()
    name: str = ""
    reference_shapes: Tuple[str, ...] = ()
    reference_volume: Optional[str] = None
    ptolemy: Optional[dict] = field(default=None, compare=False, hash=False)

    def __post_init__(self):
        if self.simplices < 1:
            raise ValueError("a triangulation needs at least one simplex")
        seen = Counter()
        for cls in self.edge_classes:
            for simplex, edge in cls:
                if edge not in EDGES or not 0 <= simplex < self.simplices:
                    raise ValueError(f"bad simplex edge ({simplex}, {edge})")
                seen[(simplex, edge)] += 1
        expected = {(i, e) for i in range(self.simplices) for e in EDGES}
        if set(seen) != expected or any(v != 1 for v in seen.values()):
            raise ValueError("edge classes must partition the simplex edges")
        if len(self.edge_paths) != len(self.edge_classes):
            raise ValueError("need exactly one edge path per edge class")
        for p in self.all_paths():
            for s in p.steps:
                if not 0 <= s.simplex < self.simplices:
                    raise InvalidPath(f"step references missing simplex {s.simplex}")

    @property
    def cusp_paths(self) -> Tuple[Path, ...]:
        out = []
        for c in self.cusps:
            out.extend([c.meridian, c.longitude])
        return tuple(out)

    def all_paths(self) -> Tuple[Path, ...]:
        return tuple(self.edge_paths) + self.cusp_paths

    def edge_path_from_class(self, k: int) -> Path:
        """The edge path implied by an edge class: one factor per simplex edge."""
        return Path.of(*[(i, EDGE_SLOT[e]) for i, e in self.edge_classes[k]])

    def check_edge_paths(self):
        """Raise ValueError if an explicit edge path disagrees with its class."""
        for k, p in enumerate(self.edge_paths):
            if p.exponents() != self.edge_path_from_class(k).exponents():
                raise ValueError(f"edge path {k} does not match edge class {k}")


@dataclass(frozen=True)
class ShapeAssignment:
    shapes: Tuple

    def __post_init__(self):
        for z in self.shapes:
            if is_inf(z) or z == 0 or z == 1:
                raise DegenerateSimplex(f"degenerate shape {z}")

    @classmethod
    def of(cls, values, ctx: Optional[PrecisionContext] = None) -> "ShapeAssignment":
        ctx = _default_ctx(ctx)
        out = []
        with ctx.workdps():
            for v in values:
                out.append(parse_complex(v, ctx) if isinstance(v, str) else mp.mpc(v))
        return cls(tuple(out))

    @property
    def geometric(self) -> bool:
        return all(z.imag > 0 for z in self.shapes)

    def conjugate(self, ctx: Optional[PrecisionContext] = None) -> "ShapeAssignment":
        with _default_ctx(ctx).workdps():
            return ShapeAssignment(tuple(mp.conj(z) for z in self.shapes))

    def __len__(self):
        return len(self.shapes)


# ---------------------------------------------------------------------------
# JSON format


def _parse_path(raw) -> Path:
    return Path.of(*[tuple(step) for step in raw])


def triangulation_from_dict(doc: dict) -> Triangulation:
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not a triangulation document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported triangulation format version {doc.get('version')}")
    t = Triangulation(
        simplices=int(doc["simplices"]),
        edge_classes=tuple(tuple((int(i), str(e)) for i, e in cls) for cls in doc["edge_classes"]),
        edge_paths=tuple(_parse_path(p) for p in doc["edge_paths"]),
        cusps=tuple(Cusp(_parse_path(c["meridian"]), _parse_path(c["longitude"])) for c in doc.get("cusps", [])),
        name=doc.get("name", ""),
        reference_shapes=tuple(doc.get("geometric_shapes", ())),
        reference_volume=doc.get("volume"),
        ptolemy=doc.get("ptolemy"),
    )
    t.check_edge_paths()
    return t


def triangulation_to_dict(t: Triangulation) -> dict:
    def path(p):
        return [[s.simplex, s.slot.value, s.exponent] for s in p.steps]

    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "name": t.name,
        "simplices": t.simplices,
        "edge_classes": [[[i, e] for i, e in cls] for cls in t.edge_classes],
        "edge_paths": [path(p) for p in t.edge_paths],
        "cusps": [{"meridian": path(c.meridian), "longitude": path(c.longitude)} for c in t.cusps],
    }
    if t.reference_shapes:
        doc["geometric_shapes"] = list(t.reference_shapes)
    if t.reference_volume is not None:
        doc["volume"] = t.reference_volume
    if t.ptolemy is not None:
        doc["ptolemy"] = t.ptolemy
    return doc


def load_triangulation(source) -> Triangulation:
    """Load from a JSON path, or by bundled name such as ``"m004"``."""
    p = FilePath(source)
    if p.exists():
        text = p.read_text(encoding="utf-8")
    else:
        bundled = resources.files("bloch_lattice") / "data" / f"{source}.json"
        if not bundled.is_file():
            raise FileNotFoundError(source)
        text = bundled.read_text(encoding="utf-8")
    return triangulation_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# monodromy and residuals


def path_monodromy(t: Triangulation, path: Path, s: ShapeAssignment, ctx: Optional[PrecisionContext] = None):
    """Product over the path of the selected shape parameters."""
    ctx = _default_ctx(ctx)
    with ctx.workdps():
        acc = mp.mpc(1)
        for step in path.steps:
            if not 0 <= step.simplex < min(t.simplices, len(s.shapes)):
                raise InvalidPath(f"step references missing simplex {step.simplex}")
            acc *= _slot_value(mp.mpc(s.shapes[step.simplex]), step.slot) ** step.exponent
        return acc


def cusp_residuals(t: Triangulation, s: ShapeAssignment, ctx: Optional[PrecisionContext] = None) -> List:
    return [path_monodromy(t, p, s, ctx) - 1 for p in t.cusp_paths]


def edge_residuals(t: Triangulation, s: ShapeAssignment, ctx: Optional[PrecisionContext] = None) -> List:
    return [path_monodromy(t, p, s, ctx) - 1 for p in t.edge_paths]


def max_residual(t: Triangulation, s: ShapeAssignment, ctx: Optional[PrecisionContext] = None):
    res = edge_residuals(t, s, ctx) + cusp_residuals(t, s, ctx)
    return max((abs(r) for r in res), default=mp.mpf(0))


# ---------------------------------------------------------------------------
# Newton solve of the gluing equations


@dataclass
class NewtonReport:
    iterations: int
    residual: mp.mpf
    equations: Tuple[int, ...]
    escalations: int = 0


class _LogSystem:
    """Log-form gluing equations with branches frozen at the seed.

    Each factor's logarithm is tracked continuously (nearest branch to its
    previous value), and each equation's target 2*pi*i*k is the multiple
    nearest the seed's value.
    """

    def __init__(self, t: Triangulation, paths: Sequence[Path], seed):
        self.t = t
        self.paths = list(paths)
        self.factors = sorted({(st.simplex, st.slot) for p in paths for st in p.steps}, key=lambda f: (f[0], f[1].value))
        self.logs = {f: mp.log(_slot_value(seed[f[0]], f[1])) for f in self.factors}
        two_pi = 2 * mp.pi
        self.targets = []
        for p in self.paths:
            total = self._sum(p)
            self.targets.append(mp.mpc(0, two_pi * mp.nint(total.imag / two_pi)))

    def _sum(self, p: Path):
        return mp.fsum(st.exponent * self.logs[(st.simplex, st.slot)] for st in p.steps)

    def update(self, z):
        two_pi = 2 * mp.pi
        for f in self.factors:
            w = mp.log(_slot_value(z[f[0]], f[1]))
            k = mp.nint((self.logs[f].imag - w.imag) / two_pi)
            self.logs[f] = w + mp.mpc(0, two_pi * k)

    def values(self, rows):
        return [self._sum(self.paths[r]) - self.targets[r] for r in rows]

    def jacobian(self, z, rows):
        n = len(z)
        J = mp.matrix(len(rows), n)
        for a, r in enumerate(rows):
            for st in self.paths[r].steps:
                J[a, st.simplex] += st.exponent * _slot_log_derivative(z[st.simplex], st.slot)
        return J


def _independent_rows(J, n, tol):
    """Greedy Gram-Schmidt row selection in the given order."""
    chosen, basis = [], []
    for r in range(J.rows):
        v = [J[r, j] for j in range(n)]
        for b in basis:
            proj = mp.fsum(v[j] * mp.conj(b[j]) for j in range(n))
            v = [v[j] - proj * b[j] for j in range(n)]
        norm = mp.sqrt(mp.fsum(abs(x) ** 2 for x in v))
        scale = mp.sqrt(mp.fsum(abs(J[r, j]) ** 2 for j in range(n)))
        if scale > 0 and norm > tol * scale:
            basis.append([x / norm for x in v])
            chosen.append(r)
        if len(chosen) == n:
            break
    return chosen


def newton_solve(t: Triangulation, initial: ShapeAssignment, ctx: PrecisionContext):
    """Newton iteration on the log-form gluing equations.

    Returns ``(ShapeAssignment, NewtonReport)``.  The residual reported is
    the largest ``|M(path) - 1|`` over every edge and cusp path.
    """
    if len(initial.shapes) != t.simplices:
        raise ValueError("need one shape per simplex")
    tol = ctx.eps(5)
    with ctx.workdps():
        seed = [mp.mpc(z) for z in initial.shapes]
        first = max_residual(t, initial, ctx)
        if first <= tol:
            return initial, NewtonReport(0, first, ())

    paths = t.all_paths()
    dps = ctx.work_dps
    escalations = 0
    with mp.workdps(dps):
        system = _LogSystem(t, paths, seed)
        J_all = system.jacobian(seed, range(len(paths)))
        rows = _independent_rows(J_all, t.simplices, mp.mpf(10) ** (-dps // 3))
    if len(rows) < t.simplices:
        raise SingularSystem(
            f"gluing system has rank {len(rows)} < {t.simplices} at the seed",
            residual=first,
        )

    z = list(seed)
    history = []
    residual = first
    for iteration in range(1, MAX_NEWTON_ITERATIONS + 1):
        with mp.workdps(dps):
            z = [mp.mpc(w) for w in z]
            F = system.values(rows)
            J = system.jacobian(z, rows)
            try:
                delta = mp.lu_solve(J, mp.matrix(F))
            except ZeroDivisionError as exc:
                raise SingularSystem("Jacobian is numerically singular", residual=residual) from exc
            # damp steps that would jump across a degenerate point
            step = 1
            for _ in range(30):
                trial = [z[j] - step * delta[j] for j in range(len(z))]
                if all(w != 0 and w != 1 and mp.isfinite(w.real) and mp.isfinite(w.imag) for w in trial):
                    break
                step /= 2
            else:
                raise SolveFailure("Newton step degenerated", residual=residual)
            z = trial
            try:
                system.update(z)
                residual = max_residual(t, ShapeAssignment(tuple(z)), ctx)
            except (DegenerateSimplex, ZeroDivisionError) as exc:
                raise SolveFailure("iteration reached a degenerate shape", residual=residual) from exc
        if residual <= tol:
            # one more step costs little and fills the guard digits
            with mp.workdps(dps):
                try:
                    delta = mp.lu_solve(system.jacobian(z, rows), mp.matrix(system.values(rows)))
                    polished = [z[j] - delta[j] for j in range(len(z))]
                    system.update(polished)
                    better = max_residual(t, ShapeAssignment(tuple(polished)), ctx)
                    if better < residual:
                        z, residual = polished, better
                except (ZeroDivisionError, DegenerateSimplex):
                    pass
            with ctx.workdps():
                out = ShapeAssignment(tuple(+w for w in z))
            return out, NewtonReport(iteration, residual, tuple(rows), escalations)
        history.append(residual)
        # a stall is several steps without a tenfold improvement
        if len(history) > 6 and history[-1] > history[-6] / 10:
            if dps < 4 * ctx.work_dps:
                dps *= 2
                escalations += 1
                history.clear()
    raise SolveFailure(
        f"no convergence after {MAX_NEWTON_ITERATIONS} iterations (residual {mp.nstr(residual, 5)})",
        residual=residual,
    )


def solve_shapes_newton(t: Triangulation, initial: ShapeAssignment, ctx: PrecisionContext) -> ShapeAssignment:
    """Solve the edge and cusp equations starting from ``initial``.

    Redundant equations are dropped by rank-revealing selection at the seed
    (edge equations first, then meridians, then longitudes).  The result is
    non-geometric if Newton lands on a solution with some Im z <= 0.
    """
    return newton_solve(t, initial, ctx)[0]


# ---------------------------------------------------------------------------
# volume


def triangulation_volume(s: ShapeAssignment, ctx: PrecisionContext):
    """Sum of D over the simplex shapes."""
    with ctx.workdps():
        return +mp.fsum(dilog_D(z, ctx) for z in s.shapes)


# ---------------------------------------------------------------------------
# Ptolemy coordinates


@dataclass(frozen=True)
class PtolemyAssignment:
    """Edge values c^i_jk per simplex, in the edge order 01, 02, 03, 12, 13, 23.

    ``identification`` optionally records for each simplex edge the edge
    class it belongs to and the sign relating its value to the class value.
    """

    values: Tuple[Tuple, ...]
    obstruction_signs: Tuple[int, ...]
    identification: Optional[Tuple[Tuple[Tuple[int, int], ...], ...]] = None

    def __post_init__(self):
        if len(self.obstruction_signs) != len(self.values):
            raise InvalidPtolemy("need one obstruction sign per simplex")
        for s in self.obstruction_signs:
            if s not in (1, -1):
                raise InvalidPtolemy("obstruction signs must be +1 or -1")
        for row in self.values:
            if len(row) != 6:
                raise InvalidPtolemy("need six edge values per simplex")

    @classmethod
    def from_classes(cls, class_values, identification, obstruction_signs) -> "PtolemyAssignment":
        """Build from one value per edge class; identified edges agree by construction."""
        # negating an mpc rounds to the ambient precision, so call this
        # inside the caller's workdps block
        values = tuple(
            tuple(class_values[k] if sign > 0 else -class_values[k] for k, sign in simplex)
            for simplex in identification
        )
        ident = tuple(tuple((int(k), int(sign)) for k, sign in simplex) for simplex in identification)
        return cls(values, tuple(int(s) for s in obstruction_signs), ident)

    def c(self, simplex: int, j: int, k: int):
        """c^simplex_jk, antisymmetric under swapping j and k."""
        if j == k:
            raise InvalidPtolemy("c_jj is undefined")
        if j > k:
            return -self.c(simplex, k, j)
        return self.values[simplex][EDGES.index(f"{j}{k}")]

    def identification_defect(self):
        """Largest disagreement between identified edges (0 if none recorded)."""
        if self.identification is None:
            return mp.mpf(0)
        seen = {}
        worst = mp.mpf(0)
        for i, simplex in enumerate(self.identification):
            for e, (k, sign) in enumerate(simplex):
                v = sign * self.values[i][e]
                if k in seen:
                    worst = max(worst, abs(v - seen[k]))
                else:
                    seen[k] = v
        return worst


def _check_nonzero(pa: PtolemyAssignment):
    for i, row in enumerate(pa.values):
        for e, v in zip(EDGES, row):
            if v == 0:
                raise InvalidPtolemy(f"zero Ptolemy value on simplex {i} edge {e}")


def ptolemy_residuals(pa: PtolemyAssignment, ctx: Optional[PrecisionContext] = None) -> List:
    """c03 c12 + c01 c23 - c02 c13 for every simplex."""
    ctx = _default_ctx(ctx)
    _check_nonzero(pa)
    with ctx.workdps():
        out = []
        for i in range(len(pa.values)):
            c = lambda j, k: mp.mpc(pa.c(i, j, k))  # noqa: E731
            out.append(c(0, 3) * c(1, 2) + c(0, 1) * c(2, 3) - c(0, 2) * c(1, 3))
        return out


def cross_ratio_from_ptolemy(pa: PtolemyAssignment, simplex: int, ctx: Optional[PrecisionContext] = None):
    """obstruction_sign * c03 c12 / (c02 c13)."""
    ctx = _default_ctx(ctx)
    _check_nonzero(pa)
    with ctx.workdps():
        c = lambda j, k: mp.mpc(pa.c(simplex, j, k))  # noqa: E731
        den = c(0, 2) * c(1, 3)
        if den == 0:
            raise InvalidPtolemy("zero denominator")
        return pa.obstruction_signs[simplex] * c(0, 3) * c(1, 2) / den


def shapes_from_ptolemy(pa: PtolemyAssignment, ctx: Optional[PrecisionContext] = None) -> ShapeAssignment:
    return ShapeAssignment(tuple(cross_ratio_from_ptolemy(pa, i, ctx) for i in range(len(pa.values))))


def ptolemy_from_triangulation(t: Triangulation, ctx: PrecisionContext) -> PtolemyAssignment:
    """The Ptolemy solution shipped with a triangulation document."""
    if not t.ptolemy:
        raise InvalidPtolemy(f"triangulation {t.name or '?'} carries no Ptolemy data")
    block = t.ptolemy
    if list(block.get("edge_order", EDGES)) != list(EDGES):
        raise InvalidPtolemy("unexpected Ptolemy edge order")
    with ctx.workdps():
        values = [parse_complex(v, ctx) for v in block["values"]]
        return PtolemyAssignment.from_classes(values, block["identification"], block["obstruction_signs"])
