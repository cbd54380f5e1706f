import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actjoin import cellgrid as cg
from actjoin.act import ActSizeEstimator
from actjoin.cellgrid import DomainError
from actjoin.geometry import Covering, CoveringConfig, Polygon, compute_covering, normalize_covering, pip_test_many
from actjoin.logical import (
    PolygonReference,
    SuperCovering,
    build_super_covering,
    lookup_logical,
    max_candidate_diagonal,
    refine_to_precision,
)

from conftest import random_polygons

R = PolygonReference


def assert_overlap_free(sc):
    keys = np.array(list(sc), dtype=object)
    lo = np.array([cg.range_min(c) for c in keys], dtype=np.uint64)
    hi = np.array([cg.range_max(c) for c in keys], dtype=np.uint64)
    # every pair of keys must have disjoint leaf ranges
    overlap = (lo[:, None] <= hi[None, :]) & (lo[None, :] <= hi[:, None])
    np.fill_diagonal(overlap, False)
    assert not overlap.any()


def test_single_covering_cell():
    c = cg.cell_from_point((5.0, 5.0), 8)
    sc = build_super_covering([Covering(3, (c,), False)], [])
    assert list(sc.items()) == [(c, (R(3, False),))]


def test_parent_covering_child_interior():
    parent = cg.cell_from_point((5.0, 5.0), 8)
    child = cg.cell_children(parent)[1]
    sc = build_super_covering([Covering(3, (parent,), False)], [Covering(3, (child,), True)])
    assert len(sc) == 4
    assert sc.refs(child) == (R(3, True),)
    for d in cg.cell_difference(parent, child):
        assert sc.refs(d) == (R(3, False),)
    assert parent not in sc


def test_disjoint_polygons_union():
    a = cg.cell_from_point((5.0, 5.0), 8)
    b = cg.cell_from_point((-5.0, -5.0), 8)
    sc = build_super_covering([Covering(1, (a,), False), Covering(2, (b,), False)])
    assert dict(sc.items()) == {a: (R(1, False),), b: (R(2, False),)}


def test_unnormalized_rejected():
    c = cg.cell_from_point((5.0, 5.0), 8)
    with pytest.raises(DomainError):
        build_super_covering([Covering(1, (c, cg.cell_children(c)[0]), False)])


def test_lookup():
    c = cg.cell_from_point((5.0, 5.0), 8)
    sc = build_super_covering([Covering(1, (c,), False)])
    assert lookup_logical(sc, cg.cell_from_point((5.0, 5.0), 24)) == (R(1, False),)
    assert lookup_logical(sc, cg.cell_from_point((50.0, 5.0), 24)) is None


def test_dump_format():
    c = cg.cell_from_point((5.0, 5.0), 8)
    sc = build_super_covering([Covering(1, (c,), False), Covering(2, (c,), False)], [Covering(2, (c,), True)])
    assert sc.dump() == f"{cg.to_token(c)} 8 ci 1 2\n"


cell_spec = st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(1, 5))


def _cells(specs, base):
    # cells inside a small fixed region so that coverings overlap often
    y0, x0, _ = cg.cell_grid_bounds(base)
    out = []
    for qy, qx, depth in specs:
        size = 1 << (30 - cg.cell_level(base) - 2)
        out.append(cg.from_grid(y0 + qy * size, x0 + qx * size, cg.cell_level(base) + depth))
    return normalize_covering(out)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.lists(cell_spec, min_size=1, max_size=6), st.lists(cell_spec, max_size=6)),
                min_size=1, max_size=4),
       st.integers(0, 2**32 - 1))
def test_merge_matches_leaf_oracle(groups, seed):
    base = cg.cell_from_point((12.0, 34.0), 6)
    coverings, interiors = [], []
    for pid, (cov, inner) in enumerate(groups):
        coverings.append(Covering(pid, tuple(_cells(cov, base)), False))
        interiors.append(Covering(pid, tuple(_cells(inner, base)), True))
    sc = build_super_covering(coverings, interiors)
    assert_overlap_free(sc)
    rng = np.random.default_rng(seed)
    y0, x0, size = cg.cell_grid_bounds(base)
    ys = rng.integers(y0, y0 + size, 300)
    xs = rng.integers(x0, x0 + size, 300)
    for y, x in zip(ys.tolist(), xs.tolist()):
        leaf = cg.from_grid(y, x, 30)
        expect = {}
        for cov, inner in zip(coverings, interiors):
            in_cov = any(cg.cell_contains(c, leaf) for c in cov.cells)
            in_inner = any(cg.cell_contains(c, leaf) for c in inner.cells)
            if in_cov or in_inner:
                expect[cov.polygon_id] = in_inner
        got = sc.lookup(leaf)
        assert dict(got or ()) == expect


def test_real_polygons_overlap_free(twenty_polygons):
    cfg = CoveringConfig(max_covering_level=24)
    covs = [compute_covering(p, cfg) for p in twenty_polygons]
    inner = [compute_covering(p, cfg, True) for p in twenty_polygons]
    assert_overlap_free(build_super_covering(covs, inner))


def _sc_for(polys, level=24):
    cfg = CoveringConfig(max_covering_level=level)
    return build_super_covering([compute_covering(p, cfg) for p in polys],
                                [compute_covering(p, cfg, True) for p in polys])


def test_refine_noop_when_already_precise():
    polys = random_polygons(1, count=2)
    sc = _sc_for(polys)
    before = dict(sc.items())
    worst = max_candidate_diagonal(sc)
    rep = refine_to_precision(sc, polys, worst, ActSizeEstimator(), 1 << 40)
    assert rep.achieved and rep.splits == 0
    # no cell is split; stale candidate references may be dropped or promoted
    after = {c: {r.polygon_id: r.interior for r in refs} for c, refs in sc.items()}
    assert set(after) <= set(before)
    for cell, refs in after.items():
        old = {r.polygon_id: r.interior for r in before[cell]}
        assert set(refs) <= set(old)
        assert all(refs[pid] or not old[pid] for pid in refs) and all(refs[pid] for pid in refs if old[pid])


def test_refine_single_split():
    poly = Polygon(4, [(0.1, 0.1), (0.1, 0.4), (0.45, 0.3)])
    cell = cg.cell_from_point((0.2, 0.2), 8)
    sc = build_super_covering([Covering(4, (cell,), False)])
    diag = cg.cell_diagonal_meters(cell)
    rep = refine_to_precision(sc, [poly], diag * 0.99, ActSizeEstimator(), 1 << 30)
    assert rep.splits == 1
    keys = list(sc)
    assert 1 <= len(keys) <= 4
    assert all(cg.cell_parent(k, 8) == cell and cg.cell_level(k) == 9 for k in keys)


def test_refine_stops_at_budget():
    polys = random_polygons(2, count=3)
    sc = _sc_for(polys)
    est = ActSizeEstimator()
    budget = est(sc) + 4096
    rep = refine_to_precision(sc, polys, 1.0, est, budget)
    assert not rep.achieved
    assert est(sc) <= budget


def test_refine_bad_precision():
    with pytest.raises(ValueError):
        refine_to_precision(SuperCovering(), [], 0.0, ActSizeEstimator(), 1)


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_refine_keeps_recall_and_soundness(seed):
    polys = random_polygons(seed, count=4, radius=0.004, spread=0.004)
    sc = _sc_for(polys)
    rep = refine_to_precision(sc, polys, 25.0, ActSizeEstimator(), 1 << 30)
    assert rep.achieved and rep.max_candidate_cell_diagonal <= 25.0
    assert_overlap_free(sc)
    rng = np.random.default_rng(seed)
    lats = rng.uniform(40.69, 40.71, 3000)
    lngs = rng.uniform(-74.01, -73.99, 3000)
    leaves = cg.cells_from_points(lats, lngs, 24).tolist()
    truth = {p.id: pip_test_many(p, lats, lngs) for p in polys}
    for i, leaf in enumerate(leaves):
        refs = dict(sc.lookup(leaf) or ())
        for pid, inside in truth.items():
            if inside[i]:
                assert pid in refs
            if refs.get(pid):
                assert inside[i]
