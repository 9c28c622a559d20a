import io
import math

import mpmath as mp
import pytest
from hypothesis import given
from hypothesis import strategies as st

import synthetic
from bloch_lattice.census import (
    CENSUS_COLUMNS,
    CountMode,
    FieldKey,
    FieldStatsRow,
    canonical_roots,
    conjugate_index,
    enumerate_surgeries,
    field_statistics,
    group_by_field,
    locate_root,
    parse_census_csv,
    parse_complete_census,
    read_census,
    read_observed_keys,
    significant_digits,
    surgery_bound,
    write_census,
)
from bloch_lattice.errors import FormatError
from bloch_lattice.lattice import dedupe_volumes
from bloch_lattice.numerics import IntPolynomial, PrecisionContext

CTX = PrecisionContext(30)
HEADER = ",".join(CENSUS_COLUMNS) + "\n"
GOOD = "m004,geometric,2.029883212819307,2,1 -1 1,0.5,0.8660254037844386,1\n"


def parse(text, ctx=CTX):
    return parse_census_csv(io.StringIO(text), ctx)


# --- ingestion -------------------------------------------------------------


def test_fixture_tables(fixtures):
    census = read_census(fixtures / "v1859_field.csv", CTX)
    assert len(census) == 11 and not census.errors and not census.warnings
    assert census[0].manifold_name == "v1859(-1,3)"
    assert all(r.low_precision for r in census)
    full = read_census(fixtures / "census_m032.csv", CTX)
    assert not full.errors and not full.records[0].low_precision


def test_header_required():
    with pytest.raises(FormatError):
        parse("name,volume\n" + GOOD)
    with pytest.raises(FormatError):
        parse("")
    with pytest.raises(TypeError):
        parse_census_csv(HEADER + GOOD)


@pytest.mark.parametrize(
    "row",
    [
        "m004,geometric,2.03,2,1 -1 1,0.5,0.866\n",
        "m004,weird,2.03,2,1 -1 1,0.5,0.866,1\n",
        "m004,geometric,-2.03,2,1 -1 1,0.5,0.866,1\n",
        "m004,geometric,abc,2,1 -1 1,0.5,0.866,1\n",
        "m004,geometric,2.03,3,1 -1 1,0.5,0.866,1\n",
        "m004,geometric,2.03,2,1 -1 1,0.5,0.866,-1\n",
        "m004,geometric,2.03,2,1 -1 1,0.5,xyz,1\n",
        ",geometric,2.03,2,1 -1 1,0.5,0.866,1\n",
    ],
)
def test_malformed_rows_are_reported(row):
    out = parse(HEADER + GOOD + row + GOOD)
    assert len(out.records) == 2
    assert len(out.errors) == 1 and out.errors[0].line == 3


def test_root_residual_warning():
    out = parse(HEADER + "m004,geometric,2.03,2,1 -1 1,0.6,0.8,1\n")
    assert len(out.records) == 1 and len(out.warnings) == 1
    assert "root residual" in out.warnings[0].message


def test_blank_lines_skipped():
    assert len(parse(HEADER + "\n" + GOOD + " , , \n")) == 1


def test_write_read_round_trip(fixtures):
    census = read_census(fixtures / "v3318_field.csv", CTX)
    buf = io.StringIO()
    write_census(census, buf)
    again = parse(buf.getvalue())
    assert not again.errors
    assert [(r.manifold_name, r.volume, r.kind, r.polynomial, r.root_index) for r in again] == [
        (r.manifold_name, r.volume, r.kind, r.polynomial, r.root_index) for r in census
    ]


def test_significant_digits():
    assert significant_digits("4.4986...") == 5
    assert significant_digits("0.0012") == 2
    assert significant_digits("-1.5e3") == 2


# --- field keys and grouping ----------------------------------------------


def test_field_key_syntax():
    key = FieldKey.parse("4,0,-3,0,1:1")
    assert key == FieldKey.parse("4 0 -3 0 1:1")
    assert str(key) == "4,0,-3,0,1:1"
    assert FieldKey.of(IntPolynomial([-4, 0, 3, 0, -1]), 1) == key
    for bad in ("4,0,-3,0,1", "4,0,-3,0,1:9", "x:1"):
        with pytest.raises(ValueError):
            FieldKey.parse(bad)


def test_root_location():
    p = IntPolynomial([4, 0, -3, 0, 1])
    with CTX.workdps():
        assert locate_root(p, mp.mpc("-1.3228", "0.5"), CTX) == 1
        assert conjugate_index(p, 1, CTX) == 0
        assert canonical_roots(p, CTX)[3].imag > 0
        with pytest.raises(ValueError):
            # equidistant from 1.32+-0.5i
            locate_root(p, mp.mpc("1.3228", "0"), CTX)


def test_grouping_and_duplicates(fixtures):
    census = read_census(fixtures / "census_m032.csv")
    grouping = group_by_field(census)
    assert len(grouping) == 2 and not grouping.quarantined
    m032_key = FieldKey.parse("1,-1,1,0,1:2")
    names = [s.name for s in grouping[m032_key]]
    assert sorted(names) == ["6_1", "m032"]
    merged = dedupe_volumes(grouping[m032_key], PrecisionContext())
    assert [s.name for s in merged] == ["6_1"]


def test_v1859_field_key(fixtures):
    grouping = group_by_field(read_census(fixtures / "v1859_field.csv", CTX), CTX)
    assert list(grouping) == [FieldKey.parse("4,0,-3,0,1:1")]


def test_ambiguous_root_quarantined():
    row = "x,geometric,1.5,4,4 0 -3 0 1,1.3228756555322952952508078768,0,0\n"
    grouping = group_by_field(parse(HEADER + row).records, CTX)
    assert len(grouping) == 0 and len(grouping.quarantined) == 1


# --- surgery grid ----------------------------------------------------------


def test_surgery_bounds():
    assert [surgery_bound(n) for n in range(1, 10)] == [16, 12, 8, 6, 4, 3, 3, 2, 2]
    with pytest.raises(ValueError):
        surgery_bound(0)


def test_surgery_grid_eight_cusps():
    assert sorted(enumerate_surgeries(8)) == sorted(
        [(0, -1), (0, 1), (1, -2), (1, -1), (1, 0), (1, 1), (1, 2), (2, -1), (2, 1)]
    )


@given(st.integers(1, 12))
def test_surgery_grid_properties(n):
    pairs = enumerate_surgeries(n)
    L = surgery_bound(n)
    assert len(pairs) == len(set(pairs))
    assert all(0 <= p <= L and -L <= q <= L and math.gcd(p, q) == 1 for p, q in pairs)
    assert (2, 2) not in pairs


# --- statistics ------------------------------------------------------------


def test_percentage_rendering():
    assert FieldStatsRow(4, 8, 1, 56, 137).rendered_percentage() == "40.8%"
    assert FieldStatsRow(4, 8, 1, 2, 3).rendered_percentage() == "66.6%"
    assert FieldStatsRow(4, 8, 1, 0, 0).rendered_percentage() == "—"
    assert FieldStatsRow(4, 8, 1, 0, 0).percentage is None
    with pytest.raises(ValueError):
        FieldStatsRow(4, 8, 1, 5, 3)


def test_statistics_ignore_decoys_and_conjugates():
    census = synthetic.complete_census()
    observed = synthetic.observed_keys()
    row = field_statistics(observed, census, CountMode.ABSTRACT, 4, 8, 1)
    assert (row.found, row.total) == (56, 137)
    concrete = field_statistics(observed, census, CountMode.CONCRETE, 4, 8, 1)
    assert (concrete.found, concrete.total) == (56, 137)


def test_statistics_real_place_not_counted():
    p = synthetic.R1_QUARTICS[0]
    real_index = next(i for i, r in enumerate(canonical_roots(p, synthetic.CTX)) if r.imag == 0)
    keys = [FieldKey.of(p, real_index)]
    census = synthetic.complete_census()
    assert field_statistics(keys, census, CountMode.CONCRETE, 4, 8, 1).found == 0
    assert field_statistics(keys, census, CountMode.ABSTRACT, 4, 8, 1).found == 1


def test_statistics_empty_filter():
    row = field_statistics([], synthetic.complete_census(), CountMode.ABSTRACT, 6, 10, 1)
    assert row.total == 0 and row.rendered_percentage() == "—"


def test_statistics_from_csv_files():
    census = parse_complete_census(io.StringIO(synthetic.complete_csv()))
    keys, parsed, grouping = read_observed_keys(io.StringIO(synthetic.observed_csv()), synthetic.CTX)
    assert not parsed.errors and not grouping.quarantined
    row = field_statistics(keys, census, CountMode.CONCRETE, 4, 8, 2)
    assert (row.found, row.total, row.rendered_percentage()) == (76, 408, "18.6%")
    row = field_statistics(keys, census, CountMode.ABSTRACT, 4, 8, 2)
    assert (row.found, row.total, row.rendered_percentage()) == (60, 204, "29.4%")


def test_complete_census_format():
    with pytest.raises(FormatError):
        parse_complete_census(io.StringIO("a,b\n"))
    with pytest.raises(FormatError):
        parse_complete_census(io.StringIO("poly_coeffs,discriminant\n1 0 1,-4,9\n"))
    with pytest.raises(FormatError):
        parse_complete_census(io.StringIO("poly_coeffs,discriminant\n1 0 1,abc\n"))
