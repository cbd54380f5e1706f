import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

from actjoin.geometry import Polygon

FIXTURES = Path(__file__).parent / "fixtures"


def star_polygon(rng, pid, clat, clng, radius, n):
    """Random polygon, star-shaped around its centre and therefore simple."""
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    # near-duplicate angles produce spikes; a gap of half a turn or more lets
    # the closing edge pass behind the centre and cross other edges
    gaps = np.diff(np.r_[ang, ang[0] + 2 * np.pi])
    while gaps.min() < 1e-3 or gaps.max() >= np.pi:
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        gaps = np.diff(np.r_[ang, ang[0] + 2 * np.pi])
    rad = radius * rng.uniform(0.4, 1.0, n)
    return Polygon(pid, list(zip(clat + rad * np.sin(ang), clng + rad * np.cos(ang))))


def random_polygons(seed, count=20, center=(40.7, -74.0), spread=0.02, radius=0.01):
    rng = np.random.default_rng(seed)
    return [
        star_polygon(rng, i, center[0] + rng.uniform(-spread, spread), center[1] + rng.uniform(-spread, spread),
                     radius, int(rng.integers(8, 65)))
        for i in range(count)
    ]


def bounding_region(polygons, pad=0.0):
    lat_lo = min(p.bbox[0] for p in polygons) - pad
    lng_lo = min(p.bbox[1] for p in polygons) - pad
    lat_hi = max(p.bbox[2] for p in polygons) + pad
    lng_hi = max(p.bbox[3] for p in polygons) + pad
    return lat_lo, lng_lo, lat_hi, lng_hi


def uniform_points(rng, region, n):
    lat_lo, lng_lo, lat_hi, lng_hi = region
    return np.column_stack([rng.uniform(lat_lo, lat_hi, n), rng.uniform(lng_lo, lng_hi, n)])


def winding_contains(vertices, lats, lngs):
    """Independent winding-number oracle (interior only, no boundary handling)."""
    v = np.asarray(vertices, dtype=np.float64)
    y0, x0 = v[:, 0], v[:, 1]
    y1, x1 = np.roll(y0, -1), np.roll(x0, -1)
    lats = np.asarray(lats)[:, None]
    lngs = np.asarray(lngs)[:, None]
    cross = (x1 - x0) * (lats - y0) - (lngs - x0) * (y1 - y0)
    up = (y0 <= lats) & (y1 > lats) & (cross > 0)
    down = (y0 > lats) & (y1 <= lats) & (cross < 0)
    return (up.sum(axis=1) - down.sum(axis=1)) != 0


def oracle_pairs(polygons, points):
    out = set()
    for poly in polygons:
        hit = np.flatnonzero(winding_contains(poly.vertices, points[:, 0], points[:, 1]))
        out.update((int(i), poly.id) for i in hit)
    return out


def reference_cell_id(lat, lng, level):
    """Cell id built from binary strings, independent of the bit tricks."""
    if level == 0:
        return 1 << 60
    y = min(math.floor((lat + 90.0) / 180.0 * 2**30), 2**30 - 1)
    x = min(math.floor((lng + 180.0) / 360.0 * 2**30), 2**30 - 1)
    ys, xs = format(y, "030b")[:level], format(x, "030b")[:level]
    bits = "000" + "".join(a + b for a, b in zip(ys, xs)) + "1"
    return int(bits.ljust(64, "0"), 2)


def load_fixture(name):
    doc = json.loads((FIXTURES / name).read_text())
    polys = [Polygon(p["id"], [tuple(v) for v in p["vertices"]]) for p in doc["polygons"]]
    out = {"polygons": polys}
    for key, val in doc.items():
        if key != "polygons":
            out[key] = np.asarray(val, dtype=np.float64)
    return out


@pytest.fixture(scope="session")
def twenty_polygons():
    return random_polygons(7)


@pytest.fixture(scope="session")
def neighborhoods():
    return load_fixture("neighborhoods.json")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(results):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
