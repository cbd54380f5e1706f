# Quickstart: index twenty polygons, join a stream of points, count per polygon.
#
# Run with:  python demos/01_quickstart.py

import time

import numpy as np

from actjoin import Polygon
from actjoin.join import JoinConfig, JoinStats, build_index, collect_metrics, count_per_polygon, join_exact

rng = np.random.default_rng(0)


# ---------------------------------------------------------------------------
# Polygons. Star-shaped rings with sorted angles are always simple, which
# makes them a handy stand-in for neighbourhood boundaries around Manhattan.
# ---------------------------------------------------------------------------

def star(pid, lat, lng, radius, n):
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = radius * rng.uniform(0.4, 1.0, n)
    return Polygon(pid, list(zip(lat + r * np.sin(ang), lng + r * np.cos(ang))))


polygons = [star(i, 40.75 + rng.uniform(-0.03, 0.03), -73.98 + rng.uniform(-0.03, 0.03), 0.012,
                 int(rng.integers(8, 65))) for i in range(20)]
print(f"{len(polygons)} polygons, {sum(p.n for p in polygons)} vertices in total")

# ---------------------------------------------------------------------------
# Build. Exact mode keeps every answer exact: points landing in interior
# cells are accepted without geometry, the rest get a point-in-polygon test.
# ---------------------------------------------------------------------------

t0 = time.perf_counter()
bundle = build_index(polygons, JoinConfig())
print(f"built in {time.perf_counter() - t0:.2f} s: {bundle.act.node_count} trie nodes, "
      f"{bundle.memory_usage() / 1024:.0f} KiB")

# ---------------------------------------------------------------------------
# Join one million points.
# ---------------------------------------------------------------------------

n = 1_000_000
points = np.column_stack([rng.uniform(40.70, 40.80, n), rng.uniform(-74.03, -73.93, n)])
stats = JoinStats()
t0 = time.perf_counter()
pairs = join_exact(bundle, points, stats)
dt = time.perf_counter() - t0
print(f"joined {n} points in {dt:.2f} s ({n / dt / 1e6:.2f} M points/s), {len(pairs)} pairs")
print(f"  exact tests run for {stats.pip_tests} point/polygon pairs, "
      f"{stats.true_hits} pairs accepted straight from interior cells")

counts = count_per_polygon(pairs)
print("first five counts:", dict(list(counts.items())[:5]))

# ---------------------------------------------------------------------------
# How good is the index for this workload?
# ---------------------------------------------------------------------------

m = collect_metrics(bundle, points)
print(f"false hits {m.false_hit_fraction:.1%}, solely true hits {m.solely_true_hit_fraction:.1%}, "
      f"{m.avg_candidates:.2f} candidates per refined point")
