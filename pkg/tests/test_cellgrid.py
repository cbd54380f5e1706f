import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actjoin import cellgrid as cg
from actjoin.cellgrid import DomainError

from conftest import reference_cell_id

lat_st = st.floats(-90, 90, allow_nan=False)
lng_st = st.floats(-180, 180, allow_nan=False)
level_st = st.integers(0, 30)


def test_root_cell_for_any_point():
    assert cg.cell_from_point((12.3, -45.6), 0) == 1 << 60
    assert cg.cell_level(1 << 60) == 0


def test_origin_level_one_is_upper_right_quadrant():
    c = cg.cell_from_point((0.0, 0.0), 1)
    assert c == (0b11 << 59) | (1 << 58)
    assert cg.cell_level(c) == 1


def test_frozen_ids():
    # values from the string-based reference encoder
    assert cg.cell_from_point((40.7, -74.0), 10) == 0x1358F70000000000
    assert cg.to_token(cg.cell_from_point((40.7, -74.0), 24)) == "1358f7810db39000"
    assert cg.cell_from_point((-90.0, -180.0), 30) == 1
    assert cg.cell_from_point((90.0, 180.0), 30) == (1 << 61) - 1


@given(lat_st, lng_st, level_st)
def test_matches_reference_encoder(lat, lng, level):
    assert cg.cell_from_point((lat, lng), level) == reference_cell_id(lat, lng, level)


@given(lat_st, lng_st, level_st)
def test_level_roundtrip_and_face(lat, lng, level):
    c = cg.cell_from_point((lat, lng), level)
    assert cg.is_valid(c)
    assert cg.cell_level(c) == level
    assert cg.face(c) == 0


@pytest.mark.parametrize("bad", [(math.nan, 0.0), (0.0, math.inf), (90.5, 0.0), (0.0, -180.01)])
def test_bad_coordinates(bad):
    with pytest.raises(DomainError):
        cg.cell_from_point(bad, 5)


@pytest.mark.parametrize("bad", [0, 1 << 61, (1 << 60) | (1 << 59), 2, 1 << 64])
def test_malformed_ids(bad):
    assert not cg.is_valid(bad)
    with pytest.raises(DomainError):
        cg.cell_level(bad)


def test_level_of_marker():
    assert cg.cell_level((0b11 << 59) | (1 << 58)) == 1


@given(lat_st, lng_st, st.integers(0, 30), st.integers(0, 30))
def test_parent_shares_prefix(lat, lng, a, b):
    lo, hi = sorted((a, b))
    p = (lat, lng)
    child = cg.cell_from_point(p, hi)
    assert cg.cell_parent(child, lo) == cg.cell_from_point(p, lo)
    assert cg.cell_parent(child, hi) == child
    assert cg.cell_contains(cg.cell_parent(child, lo), child)


def test_parent_of_deeper_level_rejected():
    with pytest.raises(DomainError):
        cg.cell_parent(cg.cell_from_point((1, 1), 3), 4)


def test_children_of_root():
    kids = cg.cell_children(cg.ROOT)
    assert kids == [(q << 59) | (1 << 58) for q in range(4)]


@given(lat_st, lng_st, st.integers(0, 29))
def test_children_properties(lat, lng, level):
    c = cg.cell_from_point((lat, lng), level)
    kids = cg.cell_children(c)
    assert kids == sorted(kids)
    assert all(cg.cell_contains(c, k) and cg.cell_level(k) == level + 1 for k in kids)
    assert all(not cg.cell_contains(a, b) for a in kids for b in kids if a != b)
    assert not cg.cell_contains(kids[0], c)


def test_children_of_leaf_rejected():
    with pytest.raises(DomainError):
        cg.cell_children(cg.cell_from_point((0, 0), 30))


@given(lat_st, lng_st, level_st)
def test_contains_reflexive_and_root(lat, lng, level):
    c = cg.cell_from_point((lat, lng), level)
    assert cg.cell_contains(c, c)
    assert cg.cell_contains(cg.ROOT, c)


@given(lat_st, lng_st, st.integers(0, 30))
def test_point_inside_its_cell_box(lat, lng, level):
    c = cg.cell_from_point((lat, lng), level)
    lat_lo, lng_lo, lat_hi, lng_hi = cg.cell_bounds(c)
    # discretisation rounds points within one ulp of a grid line onto it
    tol = 1e-12
    assert lat_lo - tol <= lat <= lat_hi + tol
    assert lng_lo - tol <= lng <= lng_hi + tol


def _haversine_oracle(a, b):
    # written from the cosine-free atan2 form
    la1, lo1, la2, lo2 = map(math.radians, (*a, *b))
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2
    return 6371000.0 * 2 * math.atan2(math.sqrt(h), math.sqrt(1 - h))


def test_level20_diagonal_near_equator():
    c = cg.cell_from_point((0.001, 0.001), 20)
    lat_lo, lng_lo, lat_hi, lng_hi = cg.cell_bounds(c)
    expected = _haversine_oracle((lat_lo, lng_lo), (lat_hi, lng_hi))
    assert cg.cell_diagonal_meters(c) == pytest.approx(expected, rel=1e-6)
    assert cg.cell_diagonal_meters(c) == pytest.approx(42.6818, abs=1e-3)


def test_root_diagonal():
    # SW and NE corners of the whole grid are antipodal-ish: half the circumference
    assert cg.cell_diagonal_meters(cg.ROOT) == pytest.approx(math.pi * 6371000.0, rel=1e-9)


@given(st.floats(-88.9, 88.9), lng_st, st.integers(3, 30))
def test_diagonal_monotone(lat, lng, level):
    # level-2 cells span 45 x 90 degrees; there a great-circle diagonal can
    # equal the parent's, so the property is checked from level 3 down
    c = cg.cell_from_point((lat, lng), level)
    parent = cg.cell_parent(c, level - 1)
    assert cg.cell_diagonal_meters(c) < cg.cell_diagonal_meters(parent)


def test_difference_counts():
    a = cg.cell_from_point((10.0, 20.0), 3)
    assert len(cg.cell_difference(a, cg.cell_from_point((10.0, 20.0), 4))) == 3
    assert len(cg.cell_difference(a, cg.cell_from_point((10.0, 20.0), 5))) == 6


def _leaves(c, level):
    """All descendants of ``c`` at ``level`` (or ``c`` itself)."""
    out = [c]
    while cg.cell_level(out[0]) < level:
        out = [k for x in out for k in cg.cell_children(x)]
    return out


def test_difference_leaf_union_exhaustive():
    depth = 5
    for anc in _leaves(cg.ROOT, 1) + [cg.ROOT]:
        for d in range(cg.cell_level(anc) + 1, depth + 1):
            for desc in _leaves(anc, d):
                diff = cg.cell_difference(anc, desc)
                assert len(diff) == 3 * (d - cg.cell_level(anc))
                union = [leaf for x in diff + [desc] for leaf in _leaves(x, depth)]
                assert sorted(union) == sorted(_leaves(anc, depth))
                assert len(set(union)) == len(union)


@pytest.mark.parametrize("pair", ["same", "unrelated", "reversed"])
def test_difference_rejects_bad_pairs(pair):
    a = cg.cell_from_point((0.5, 0.5), 4)
    b = {"same": a, "unrelated": cg.cell_from_point((-30.0, 100.0), 6),
         "reversed": cg.cell_parent(a, 2)}[pair]
    with pytest.raises(DomainError):
        cg.cell_difference(a, b)


@given(lat_st, lng_st, level_st)
def test_token_roundtrip(lat, lng, level):
    c = cg.cell_from_point((lat, lng), level)
    assert cg.from_token(cg.to_token(c)) == c
    assert cg.from_token(str(c)) == c


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    lats = rng.uniform(-90, 90, 2000)
    lngs = rng.uniform(-180, 180, 2000)
    for level in (0, 7, 24, 30):
        got = cg.cells_from_points(lats, lngs, level).tolist()
        assert got == [cg.cell_from_point((a, b), level) for a, b in zip(lats, lngs)]


def test_vectorised_rejects_nan():
    with pytest.raises(DomainError, match="index 1"):
        cg.cells_from_points([0.0, math.nan], [0.0, 0.0])
