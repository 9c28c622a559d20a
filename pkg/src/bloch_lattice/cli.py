"""Command-line interface: ``bloch-lattice <command> ...``.

Exit codes: 0 clean, 1 quarantined rows or a failed solve/fit, 2 bad input
(format errors, unparsable arguments).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence

import mpmath as mp

from . import census as cz
from .errors import BlochLatticeError, FormatError, LatticeOverflow, LatticeViolation, NotInLattice, SolveFailure
from .lattice import (
    FitReport,
    LatticeFit,
    SampleKind,
    VolumeSample,
    check_weeks_bound,
    express_in_basis,
    fit_field,
    lattice_grid,
    reconstruction_residual,
)
from .numerics import (
    DEFAULT_DIGITS,
    PRECISION_ENV,
    PrecisionContext,
    count_complex_places,
    dilog_D,
    format_complex,
    format_real,
    parse_complex,
    parse_real,
)
from .relations import lindep
from .triangulation import ShapeAssignment, load_triangulation, max_residual, newton_solve, triangulation_volume

EXIT_OK, EXIT_QUARANTINE, EXIT_INPUT = 0, 1, 2
LOW_PRECISION_TOLERANCE = "5e-4"


class UsageError(Exception):
    pass


@dataclass
class GlobalConfig:
    ctx: PrecisionContext
    coeff_bound: Optional[int]
    fmt: str
    jobs: int


def _config(args) -> GlobalConfig:
    digits = args.precision
    if digits is None:
        digits = int(os.environ.get(PRECISION_ENV, DEFAULT_DIGITS))
    tol = args.tolerance
    if args.allow_low_precision and tol is None:
        tol = LOW_PRECISION_TOLERANCE
    try:
        ctx = PrecisionContext(digits, low_precision=args.allow_low_precision, tolerance=tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return GlobalConfig(ctx, args.coeff_bound, args.format, max(1, args.jobs))


# ---------------------------------------------------------------------------
# output


def emit(rows: List[dict], fmt: str, out) -> None:
    """Write rows of string values as CSV (with header) or as a JSON list."""
    if fmt == "json":
        json.dump(rows, out, indent=2, ensure_ascii=False)
        out.write("\n")
        return
    if not rows:
        return
    w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def _read_census(path, cfg: GlobalConfig):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            parsed = cz.parse_census_csv(fh, cfg.ctx)
    except OSError as exc:
        raise FormatError(str(exc)) from None
    for issue in parsed.errors:
        print(f"{path}:{issue.line}: skipped row: {issue.message}", file=sys.stderr)
    for issue in parsed.warnings:
        print(f"{path}:{issue.line}: warning: {issue.message}", file=sys.stderr)
    grouping = cz.group_by_field(parsed.records, cfg.ctx)
    for rec, why in grouping.quarantined:
        print(f"{path}: quarantined {rec.manifold_name}: {why}", file=sys.stderr)
    dirty = bool(parsed.errors or grouping.quarantined)
    return parsed, grouping, dirty


# ---------------------------------------------------------------------------
# commands


def cmd_dilog(args, cfg: GlobalConfig, out) -> int:
    try:
        z = parse_complex(args.z, cfg.ctx)
        value = dilog_D(z, cfg.ctx)
    except (ValueError, BlochLatticeError) as exc:
        raise UsageError(str(exc)) from None
    emit([{"z": args.z, "D": format_real(value, cfg.ctx)}], cfg.fmt, out)
    return EXIT_OK


def _key_values(pairs, cfg, out):
    emit([{"key": k, "value": v} for k, v in pairs], cfg.fmt, out)


def cmd_volume(args, cfg: GlobalConfig, out) -> int:
    try:
        with open(args.shapes, encoding="utf-8") as fh:
            doc = json.load(fh)
        s = ShapeAssignment.of(doc["shapes"], cfg.ctx)
        vol = triangulation_volume(s, cfg.ctx)
    except (OSError, ValueError, KeyError, BlochLatticeError) as exc:
        raise UsageError(f"{args.shapes}: {exc}") from None
    _key_values([("volume", format_real(vol, cfg.ctx)), ("geometric", str(s.geometric).lower())], cfg, out)
    return EXIT_OK


def cmd_solve(args, cfg: GlobalConfig, out) -> int:
    try:
        t = load_triangulation(args.triangulation)
        seeds = args.seed or ["0.5+0.8i"]
        if len(seeds) == 1:
            seeds = seeds * t.simplices
        if len(seeds) != t.simplices:
            raise ValueError(f"need 1 or {t.simplices} seed shapes, got {len(seeds)}")
        initial = ShapeAssignment.of(seeds, cfg.ctx)
    except (OSError, ValueError, KeyError, BlochLatticeError) as exc:
        raise UsageError(str(exc)) from None
    try:
        s, report = newton_solve(t, initial, cfg.ctx)
    except SolveFailure as exc:
        resid = "" if exc.residual is None else f" (residual {mp.nstr(exc.residual, 5)})"
        print(f"solve failed: {exc}{resid}", file=sys.stderr)
        return EXIT_QUARANTINE
    pairs = [(f"shape_{i}", format_complex(z, cfg.ctx)) for i, z in enumerate(s.shapes)]
    pairs += [
        ("volume", format_real(triangulation_volume(s, cfg.ctx), cfg.ctx)),
        ("geometric", str(s.geometric).lower()),
        ("residual", mp.nstr(max_residual(t, s, cfg.ctx), 3)),
        ("iterations", str(report.iterations)),
    ]
    _key_values(pairs, cfg, out)
    return EXIT_OK


def cmd_lindep(args, cfg: GlobalConfig, out) -> int:
    try:
        values = [parse_real(v, cfg.ctx) for v in args.values]
        result = lindep(values, cfg.ctx, cfg.coeff_bound)
    except (ValueError, BlochLatticeError) as exc:
        raise UsageError(str(exc)) from None
    emit([{"relation": str(result), "residual": mp.nstr(result.residual, 5)}], cfg.fmt, out)
    return EXIT_OK


def _fit_one(payload):
    key, samples, cfg_digits, low, tol, coeff_bound = payload
    ctx = PrecisionContext(cfg_digits, low_precision=low, tolerance=tol)
    r2 = count_complex_places(key.polynomial, PrecisionContext(max(cfg_digits, 30)))
    try:
        return fit_field(samples, r2, ctx, coeff_bound, field_label=str(key)), None
    except LatticeOverflow as exc:
        return None, f"{key}: {exc}"
    except BlochLatticeError as exc:
        return None, f"{key}: {type(exc).__name__}: {exc}"


def _select_fields(grouping, args):
    if args.field:
        try:
            key = cz.FieldKey.parse(args.field)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if key not in grouping.groups:
            raise UsageError(f"no census records for field {key}")
        return [key]
    return list(grouping.groups)


def _run_fits(grouping, keys, cfg: GlobalConfig):
    payloads = [
        (k, grouping.groups[k], cfg.ctx.digits, cfg.ctx.low_precision, cfg.ctx.tolerance, cfg.coeff_bound)
        for k in keys
    ]
    if cfg.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(_fit_one, payloads))
    return [_fit_one(p) for p in payloads]


def cmd_fit(args, cfg: GlobalConfig, out) -> int:
    parsed, grouping, dirty = _read_census(args.census, cfg)
    keys = _select_fields(grouping, args)
    results = _run_fits(grouping, keys, cfg)
    failed = False
    reports = []
    for report, err in results:
        if err:
            print(f"fit failed: {err}", file=sys.stderr)
            failed = True
        else:
            reports.append(report)
    if cfg.fmt == "json":
        payload = [r.to_dict(cfg.ctx) for r in reports]
        json.dump(payload if not args.field else (payload[0] if payload else None), out, indent=2, ensure_ascii=False)
        out.write("\n")
    else:
        rows = []
        for r in reports:
            field, names, vols, ratio = r.span_row(cfg.ctx)
            rows.append({
                "field": field,
                "basis_names": names,
                "basis_volumes": vols,
                "fit_ratio": ratio,
                "index": str(r.fit.fit_ratio),
                "flags": " ".join(f.value for f in r.flags),
            })
        emit(rows, "csv", out)
    return EXIT_QUARANTINE if (dirty or failed) else EXIT_OK


def _report_from_json(doc: dict, ctx: PrecisionContext) -> FitReport:
    basis = tuple(VolumeSample(b["name"], parse_real(b["volume"], ctx)) for b in doc["basis"])
    index = Fraction(doc.get("index", "1"))
    lf = LatticeFit(
        dimension=len(basis),
        basis=basis,
        all_entries=(),
        fit_ratio=index,
        best_det=Fraction(doc.get("best_det", "1")),
        det_gcd=Fraction(doc.get("det_gcd", "1")),
    )
    return FitReport(lf, [], int(doc["fit_ratio"]), int(doc.get("r2", len(basis))), [], doc.get("field", ""))


def cmd_lincomb(args, cfg: GlobalConfig, out) -> int:
    parsed, grouping, dirty = _read_census(args.census, cfg)
    try:
        with open(args.fitreport, encoding="utf-8") as fh:
            doc = json.load(fh)
        if isinstance(doc, list):
            if len(doc) != 1:
                raise ValueError("fit report file must hold exactly one report")
            doc = doc[0]
        report = _report_from_json(doc, cfg.ctx)
        key = cz.FieldKey.parse(doc["field"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.fitreport}: {exc}") from None
    samples = grouping.groups.get(key, [])
    if not args.all_kinds:
        samples = [s for s in samples if s.kind is SampleKind.EXOTIC]
    rows = []
    status = EXIT_QUARANTINE if dirty else EXIT_OK
    for s in samples:
        note = ""
        try:
            coeffs = express_in_basis(s, report, cfg.ctx, cfg.coeff_bound)
        except LatticeViolation as exc:
            coeffs, note = exc.coefficients, "LatticeViolation"
        except NotInLattice:
            coeffs, note = None, "NotInLattice"
        rows.append({
            "name": s.name,
            "volume": format_real(s.volume, cfg.ctx),
            "kind": s.kind.value,
            "coefficients": "" if coeffs is None else " ".join(str(c) for c in coeffs),
            "residual": "" if coeffs is None else mp.nstr(reconstruction_residual(s, coeffs, report.basis, cfg.ctx), 3),
            "note": note,
        })
    if cfg.fmt == "json" or rows:
        emit(rows, cfg.fmt, out)
    else:
        out.write("name,volume,kind,coefficients,residual,note\n")
    return status


def _single_report(args, cfg):
    parsed, grouping, dirty = _read_census(args.census, cfg)
    keys = _select_fields(grouping, args)
    return grouping, keys, dirty


def cmd_grid(args, cfg: GlobalConfig, out) -> int:
    grouping, keys, dirty = _single_report(args, cfg)
    if len(keys) != 1:
        raise UsageError("grid needs --field")
    report, err = _fit_one((keys[0], grouping.groups[keys[0]], cfg.ctx.digits, cfg.ctx.low_precision,
                            cfg.ctx.tolerance, cfg.coeff_bound))
    if err:
        print(f"fit failed: {err}", file=sys.stderr)
        return EXIT_QUARANTINE
    try:
        points = lattice_grid(report, tuple(args.x_range), tuple(args.y_range), cfg.ctx)
    except BlochLatticeError as exc:
        print(f"grid: {exc}", file=sys.stderr)
        return EXIT_QUARANTINE
    rows = [
        {
            "x": mp.nstr(p.x, 6),
            "y": mp.nstr(p.y, 6),
            "a": str(p.a),
            "b": str(p.b),
            "label": p.label,
            "kind": p.kind,
        }
        for p in points
    ]
    emit(rows, cfg.fmt, out)
    return EXIT_QUARANTINE if dirty else EXIT_OK


def cmd_stats(args, cfg: GlobalConfig, out) -> int:
    parsed, grouping, dirty = _read_census(args.observed, cfg)
    try:
        with open(args.complete, newline="", encoding="utf-8") as fh:
            complete = cz.parse_complete_census(fh)
    except OSError as exc:
        raise FormatError(str(exc)) from None
    modes = [cz.CountMode.CONCRETE, cz.CountMode.ABSTRACT] if args.mode == "both" else [cz.CountMode(args.mode)]
    rows = []
    for mode in modes:
        row = cz.field_statistics(list(grouping.groups), complete, mode, args.degree, args.bound, args.r2)
        rows.append(dict(zip(cz.STATS_COLUMNS, row.as_row())))
    emit(rows, cfg.fmt, out)
    return EXIT_QUARANTINE if dirty else EXIT_OK


def cmd_check_weeks(args, cfg: GlobalConfig, out) -> int:
    parsed, grouping, dirty = _read_census(args.census, cfg)
    keys = _select_fields(grouping, args)
    rows = []
    failed = False
    for key in keys:
        r2 = count_complex_places(key.polynomial, PrecisionContext(max(cfg.ctx.digits, 30)))
        if r2 != 1:
            continue
        report, err = _fit_one((key, grouping.groups[key], cfg.ctx.digits, cfg.ctx.low_precision,
                                cfg.ctx.tolerance, cfg.coeff_bound))
        if err:
            print(f"fit failed: {err}", file=sys.stderr)
            failed = True
            continue
        diag = check_weeks_bound(report)
        if diag.violation:
            rows.append({
                "field": str(key),
                "diagnostic": diag.CODE,
                "generator": mp.nstr(diag.generator, 6),
                "witnesses": " ".join(diag.witnesses),
            })
    emit(rows, cfg.fmt, out)
    return EXIT_QUARANTINE if (dirty or failed) else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--precision", type=int, default=None,
                        help=f"decimal digits (default ${PRECISION_ENV} or {DEFAULT_DIGITS})")
    common.add_argument("--coeff-bound", type=int, default=None,
                        help="largest relation coefficient (default 4096, or 64 at low precision)")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for multi-field fits")
    common.add_argument("--allow-low-precision", action="store_true",
                        help="accept 6-19 digit inputs such as printed tables")
    common.add_argument("--tolerance", default=None,
                        help=f"relation acceptance tolerance (low-precision default {LOW_PRECISION_TOLERANCE})")

    # global flags live on each subcommand so their defaults cannot shadow each other
    p = argparse.ArgumentParser(prog="bloch-lattice", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("dilog", parents=[common], help="Bloch-Wigner D(z)")
    s.add_argument("--z", required=True)
    s.set_defaults(func=cmd_dilog)

    s = sub.add_parser("volume", parents=[common], help="sum of D over shapes in a JSON file")
    s.add_argument("shapes")
    s.set_defaults(func=cmd_volume)

    s = sub.add_parser("solve", parents=[common], help="Newton-solve gluing equations")
    s.add_argument("triangulation", help="triangulation JSON path or bundled name (m004, m032)")
    s.add_argument("--seed", nargs="+", help="seed shape(s); one value is used for every simplex")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("lindep", parents=[common], help="integer relation among values")
    s.add_argument("values", nargs="+")
    s.set_defaults(func=cmd_lindep)

    for name, func, hint in (
        ("fit", cmd_fit, "best-fit lattice per field"),
        ("check-weeks", cmd_check_weeks, "compare one-dimensional lattices with the Weeks volume"),
    ):
        s = sub.add_parser(name, parents=[common], help=hint)
        s.add_argument("census")
        g = s.add_mutually_exclusive_group()
        g.add_argument("--field", help='field selector "<ascending coeffs>:<root index>"')
        g.add_argument("--all", action="store_true", help="every field (default)")
        s.set_defaults(func=func)

    s = sub.add_parser("lincomb", parents=[common], help="express volumes over a fitted basis")
    s.add_argument("census")
    s.add_argument("fitreport", help="JSON written by `fit --format json --field ...`")
    s.add_argument("--all-kinds", action="store_true", help="include geometric volumes")
    s.set_defaults(func=cmd_lincomb)

    s = sub.add_parser("grid", parents=[common], help="plot-ready lattice points for a 2-D field")
    s.add_argument("census")
    s.add_argument("--field", required=True)
    s.add_argument("--x-range", nargs=2, type=Fraction, default=[Fraction(-2), Fraction(2)])
    s.add_argument("--y-range", nargs=2, type=Fraction, default=[Fraction(-2), Fraction(2)])
    s.set_defaults(func=cmd_grid, all=False)

    s = sub.add_parser("stats", parents=[common], help="observed share of census fields")
    s.add_argument("observed")
    s.add_argument("complete")
    s.add_argument("--degree", type=int, required=True)
    s.add_argument("--bound", type=int, required=True, help="bound on |D|^(1/degree)")
    s.add_argument("--r2", type=int, required=True)
    s.add_argument("--mode", choices=["concrete", "abstract", "both"], default="concrete")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = _config(args)
        return args.func(args, cfg, out)
    except (UsageError, FormatError) as exc:
        print(f"bloch-lattice: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
