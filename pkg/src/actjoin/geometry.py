"""Exact planar polygon geometry in lat/lng degrees.

Edges are straight lines in (lng, lat) space, matching the planar grid.
Point-in-polygon follows ST_Covers semantics: points on an edge or vertex
are inside.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import cellgrid
from .cellgrid import LatLng

BOUNDARY_EPS = 1e-12
MAX_POLYGON_ID = (1 << 30) - 1


class PolygonError(ValueError):
    """Invalid polygon input (too few vertices, self-intersection, bad id)."""


class CellRelation(enum.Enum):
    DISJOINT = 0
    INTERSECTS_BOUNDARY = 1
    CONTAINED = 2


@dataclass(frozen=True)
class CoveringConfig:
    max_covering_cells: int = 128
    max_covering_level: int = 30
    max_interior_cells: int = 256
    max_interior_level: int = 20

    def __post_init__(self):
        for name in ("max_covering_cells", "max_covering_level", "max_interior_cells", "max_interior_level"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if max(self.max_covering_level, self.max_interior_level) > cellgrid.MAX_LEVEL:
            raise ValueError("covering levels cannot exceed 30")


@dataclass(frozen=True)
class Covering:
    polygon_id: int
    cells: tuple[int, ...]
    interior: bool


@dataclass(frozen=True, eq=False)
class Polygon:
    """A simple polygon given by one ring of vertices (not closed)."""

    id: int
    vertices: tuple[LatLng, ...]
    lats: np.ndarray = field(init=False, repr=False)
    lngs: np.ndarray = field(init=False, repr=False)
    bbox: tuple[float, float, float, float] = field(init=False, repr=False)

    def __post_init__(self):
        verts = [LatLng(float(v[0]), float(v[1])) for v in self.vertices]
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts.pop()
        if not 0 <= self.id <= MAX_POLYGON_ID:
            raise PolygonError(f"polygon id {self.id} outside [0, 2^30)")
        if len(verts) < 3:
            raise PolygonError(f"polygon {self.id} has fewer than 3 vertices")
        for v in verts:
            if not (math.isfinite(v.lat) and math.isfinite(v.lng)) or abs(v.lat) > 90 or abs(v.lng) > 180:
                raise PolygonError(f"polygon {self.id} has an invalid vertex {tuple(v)}")
        object.__setattr__(self, "vertices", tuple(verts))
        lats = np.array([v.lat for v in verts])
        lngs = np.array([v.lng for v in verts])
        lats.setflags(write=False)
        lngs.setflags(write=False)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lngs", lngs)
        object.__setattr__(self, "bbox", (float(lats.min()), float(lngs.min()), float(lats.max()), float(lngs.max())))
        x1, y1 = np.roll(lngs, -1), np.roll(lats, -1)
        x1.setflags(write=False)
        y1.setflags(write=False)
        object.__setattr__(self, "_ends", (x1, y1))
        object.__setattr__(self, "_edge_list", list(zip(lngs.tolist(), lats.tolist(), x1.tolist(), y1.tolist())))
        _check_simple(self)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def edges(self):
        """Edge arrays ``(x0, y0, x1, y1)`` with x = lng and y = lat."""
        return (self.lngs, self.lats) + self._ends


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _check_simple(poly: Polygon) -> None:
    x0, y0, x1, y1 = poly.edges()
    n = poly.n
    if np.any((x0 == x1) & (y0 == y1)):
        raise PolygonError(f"polygon {poly.id} has repeated consecutive vertices")
    # adjacent edges folding back onto each other
    nx, ny = np.roll(x1, -1), np.roll(y1, -1)
    cross = _orient(x0, y0, x1, y1, nx, ny)
    dot = (x1 - x0) * (nx - x1) + (y1 - y0) * (ny - y1)
    if np.any((cross == 0) & (dot < 0)):
        raise PolygonError(f"polygon {poly.id} is not simple (spike)")
    for i in range(n - 2):
        j = np.arange(i + 2, n if i > 0 else n - 1)
        if j.size == 0:
            continue
        if np.any(_segments_intersect(x0[i], y0[i], x1[i], y1[i], x0[j], y0[j], x1[j], y1[j])):
            raise PolygonError(f"polygon {poly.id} is not simple (edge {i} crosses another edge)")


def _segments_intersect(ax, ay, bx, by, cx, cy, dx, dy):
    """Closed segment intersection, vectorised over the second segment."""
    d1 = _orient(cx, cy, dx, dy, ax, ay)
    d2 = _orient(cx, cy, dx, dy, bx, by)
    d3 = _orient(ax, ay, bx, by, cx, cy)
    d4 = _orient(ax, ay, bx, by, dx, dy)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0)))

    def on_seg(px, py, qx, qy, rx, ry):
        return (np.minimum(px, qx) <= rx) & (rx <= np.maximum(px, qx)) & (np.minimum(py, qy) <= ry) & (ry <= np.maximum(py, qy))

    touch = ((d1 == 0) & on_seg(cx, cy, dx, dy, ax, ay)) | ((d2 == 0) & on_seg(cx, cy, dx, dy, bx, by))
    touch |= ((d3 == 0) & on_seg(ax, ay, bx, by, cx, cy)) | ((d4 == 0) & on_seg(ax, ay, bx, by, dx, dy))
    return proper | touch


def _seg_dist2(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    ex, ey = ax + t * dx - px, ay + t * dy - py
    return ex * ex + ey * ey


def pip_test(poly: Polygon, p) -> bool:
    """Crossing-number point-in-polygon test; boundary points count as inside."""
    y, x = float(p[0]), float(p[1])
    lat_lo, lng_lo, lat_hi, lng_hi = poly.bbox
    if y < lat_lo - BOUNDARY_EPS or y > lat_hi + BOUNDARY_EPS or x < lng_lo - BOUNDARY_EPS or x > lng_hi + BOUNDARY_EPS:
        return False
    verts = poly.vertices
    eps2 = BOUNDARY_EPS * BOUNDARY_EPS
    inside = False
    yj, xj = verts[-1]
    for yi, xi in verts:
        if _seg_dist2(x, y, xj, yj, xi, yi) <= eps2:
            return True
        if (yi > y) != (yj > y) and x < xj + (y - yj) * (xi - xj) / (yi - yj):
            inside = not inside
        yj, xj = yi, xi
    return inside


def pip_test_many(poly: Polygon, lats, lngs) -> np.ndarray:
    """Vectorised :func:`pip_test` over arrays of points."""
    y = np.asarray(lats, dtype=np.float64)
    x = np.asarray(lngs, dtype=np.float64)
    lat_lo, lng_lo, lat_hi, lng_hi = poly.bbox
    out = np.zeros(y.shape, dtype=bool)
    near = (y >= lat_lo - BOUNDARY_EPS) & (y <= lat_hi + BOUNDARY_EPS) & (x >= lng_lo - BOUNDARY_EPS) & (x <= lng_hi + BOUNDARY_EPS)
    idx = np.flatnonzero(near)
    if idx.size == 0:
        return out
    y, x = y[idx], x[idx]
    inside = np.zeros(idx.size, dtype=bool)
    boundary = np.zeros(idx.size, dtype=bool)
    eps2 = BOUNDARY_EPS * BOUNDARY_EPS
    xs, ys, xe, ye = poly.edges()
    for xj, yj, xi, yi in zip(xs.tolist(), ys.tolist(), xe.tolist(), ye.tolist()):
        dx, dy = xi - xj, yi - yj
        t = np.clip(((x - xj) * dx + (y - yj) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        boundary |= (xj + t * dx - x) ** 2 + (yj + t * dy - y) ** 2 <= eps2
        straddle = (yi > y) != (yj > y)
        if yi != yj:
            inside ^= straddle & (x < xj + (y - yj) * dx / dy)
    out[idx] = inside | boundary
    return out


def _seg_box(x0, y0, x1, y1, ymin, xmin, ymax, xmax, strict):
    # Liang-Barsky clip of one segment; strict asks for the open box
    dx, dy = x1 - x0, y1 - y0
    lo, hi = 0.0, 1.0
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0:
            if q < 0 or (strict and q == 0):
                return False
        else:
            r = q / p
            if p < 0:
                if r > lo:
                    lo = r
            elif r < hi:
                hi = r
    return lo < hi if strict else lo <= hi


def _edges_meeting_box(poly: Polygon, box, strict: bool, hint=None) -> list[int]:
    """Indices of edges meeting the box (closed) or its open interior (strict).

    ``hint`` restricts the search to a known superset of the answer.
    """
    ymin, xmin, ymax, xmax = box
    if hint is not None:
        edges = poly._edge_list
        return [i for i in hint if _seg_box(*edges[i], ymin, xmin, ymax, xmax, strict)]
    x0, y0, x1, y1 = poly.edges()
    dx, dy = x1 - x0, y1 - y0
    lo = np.zeros(x0.shape)
    hi = np.ones(x0.shape)
    ok = np.ones(x0.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
            zero = p == 0
            ok &= ~zero | ((q > 0) if strict else (q >= 0))
            r = np.where(zero, 0.0, q / np.where(zero, 1.0, p))
            lo = np.where(p < 0, np.maximum(lo, r), lo)
            hi = np.where(p > 0, np.minimum(hi, r), hi)
    hit = ok & ((lo < hi) if strict else (lo <= hi))
    return np.flatnonzero(hit).tolist()


def classify_box(box, poly: Polygon, hint=None) -> tuple[CellRelation, bool, list[int]]:
    """Relation of a box to ``poly``, a touch-only flag and the nearby edges.

    The touch-only flag marks boxes that meet the polygon only on their
    border. The edge list (edges meeting the slightly inflated box) is a
    valid ``hint`` for any sub-box.
    """
    ymin, xmin, ymax, xmax = box
    e = 2 * BOUNDARY_EPS
    plat_lo, plng_lo, plat_hi, plng_hi = poly.bbox
    if ymax + e < plat_lo or ymin - e > plat_hi or xmax + e < plng_lo or xmin - e > plng_hi:
        return CellRelation.DISJOINT, False, []
    center = ((ymin + ymax) / 2, (xmin + xmax) / 2)
    # the eps-inflated closed test keeps Disjoint consistent with the
    # tolerant boundary check of pip_test
    near = _edges_meeting_box(poly, (ymin - e, xmin - e, ymax + e, xmax + e), False, hint)
    if not near:
        return (CellRelation.CONTAINED if pip_test(poly, center) else CellRelation.DISJOINT), False, near
    if not _edges_meeting_box(poly, box, True, near):
        if pip_test(poly, center):
            return CellRelation.CONTAINED, False, near
        return CellRelation.INTERSECTS_BOUNDARY, True, near
    return CellRelation.INTERSECTS_BOUNDARY, False, near


def box_polygon_relation(box, poly: Polygon) -> CellRelation:
    """Relation of an axis-aligned ``(lat_lo, lng_lo, lat_hi, lng_hi)`` box to ``poly``."""
    return classify_box(box, poly)[0]


def cell_polygon_relation(c: int, poly: Polygon) -> CellRelation:
    return box_polygon_relation(cellgrid.cell_bounds(c), poly)


def normalize_covering(cells) -> list[int]:
    """Sort, drop duplicates and drop cells contained in another cell."""
    ordered = sorted(set(cells), key=lambda c: (cellgrid.range_min(c), -cellgrid.lsb(c)))
    kept = []
    last_max = -1
    for c in ordered:
        if c <= last_max:
            continue
        kept.append(c)
        last_max = cellgrid.range_max(c)
    return sorted(kept)


def is_normalized(cells) -> bool:
    cells = list(cells)
    return cells == normalize_covering(cells)


def bounding_cell(poly: Polygon) -> int:
    """Smallest cell whose box holds the polygon's bounding box."""
    lat_lo, lng_lo, lat_hi, lng_hi = poly.bbox
    a = cellgrid.cell_from_point((lat_lo, lng_lo))
    b = cellgrid.cell_from_point((lat_hi, lng_hi))
    return cellgrid.common_ancestor(a, b)


def compute_covering(poly: Polygon, cfg: CoveringConfig | None = None, interior: bool = False) -> Covering:
    """Best-first covering (or interior covering) of ``poly``.

    The coarsest boundary cell is split first (ties by ascending id) until
    the cell budget would be exceeded or every boundary cell sits at the
    maximum level.
    """
    cfg = cfg or CoveringConfig()
    max_cells = cfg.max_interior_cells if interior else cfg.max_covering_cells
    max_level = cfg.max_interior_level if interior else cfg.max_covering_level
    seed = bounding_cell(poly)
    while cellgrid.cell_level(seed) > max_level:
        seed = cellgrid.cell_parent(seed, cellgrid.cell_level(seed) - 1)

    contained: list[int] = []
    frontier: list[tuple[int, int]] = []
    stuck: list[int] = []
    hints: dict[int, list[int]] = {}
    rel, _, hints[seed] = classify_box(cellgrid.cell_bounds(seed), poly)
    if rel is CellRelation.CONTAINED:
        contained.append(seed)
    elif rel is CellRelation.INTERSECTS_BOUNDARY:
        heapq.heappush(frontier, (cellgrid.cell_level(seed), seed))

    while frontier:
        level, cell = frontier[0]
        if level >= max_level:
            heapq.heappop(frontier)
            stuck.append(cell)
            continue
        kids = []
        for ch in cellgrid.cell_children(cell):
            r, touch_only, hints[ch] = classify_box(cellgrid.cell_bounds(ch), poly, hints[cell])
            if r is not CellRelation.DISJOINT:
                kids.append((None if touch_only else r, ch))
        if interior:
            # boundary cells are dropped from interior coverings, so only
            # contained cells use up the budget
            projected = len(contained) + sum(r is CellRelation.CONTAINED for r, _ in kids)
        else:
            projected = len(contained) + len(frontier) + len(stuck) - 1 + len(kids)
        if projected > max_cells:
            break
        heapq.heappop(frontier)
        for r, ch in kids:
            if r is CellRelation.CONTAINED:
                contained.append(ch)
            elif r is None:
                # splitting a cell that only touches the polygon never helps
                stuck.append(ch)
            else:
                heapq.heappush(frontier, (level + 1, ch))

    if interior:
        cells = contained
    else:
        cells = contained + stuck + [c for _, c in frontier]
    return Covering(poly.id, tuple(normalize_covering(cells)), interior)


def distance_point_polygon(p, poly: Polygon) -> float:
    """Distance in meters from ``p`` to ``poly`` (0 when covered)."""
    if pip_test(poly, p):
        return 0.0
    lat, lng = float(p[0]), float(p[1])
    scale = math.cos(math.radians(float(poly.lats.mean())))
    x0, y0, x1, y1 = poly.edges()
    best = math.inf
    for ax, ay, bx, by in zip(x0.tolist(), y0.tolist(), x1.tolist(), y1.tolist()):
        best = min(best, _seg_dist2(lng * scale, lat, ax * scale, ay, bx * scale, by))
    return math.sqrt(best) * math.pi / 180.0 * cellgrid.EARTH_RADIUS_M
