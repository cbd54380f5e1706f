# Approximate joins: trade memory for a distance bound.
#
# In approximate mode every candidate hit is accepted without geometry. The
# index is refined until no candidate cell is wider than the requested
# precision, so a wrongly reported point is never further than that from its
# polygon. Finer precision means more cells and more memory.
#
# Run with:  python demos/02_precision_vs_memory.py

import time

import numpy as np

from actjoin import Polygon
from actjoin.geometry import distance_point_polygon
from actjoin.join import JoinConfig, build_index, join_approx, join_exact

rng = np.random.default_rng(1)


def star(pid, lat, lng, radius, n):
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = radius * rng.uniform(0.4, 1.0, n)
    return Polygon(pid, list(zip(lat + r * np.sin(ang), lng + r * np.cos(ang))))


polygons = [star(i, 40.75 + rng.uniform(-0.01, 0.01), -73.98 + rng.uniform(-0.01, 0.01), 0.006, 24)
            for i in range(6)]
by_id = {p.id: p for p in polygons}
points = np.column_stack([rng.uniform(40.735, 40.765, 50_000), rng.uniform(-73.995, -73.965, 50_000)])

print(f"{'precision':>10} {'mode':>7} {'bound':>8} {'nodes':>6} {'memory':>10} {'extra pairs':>11} "
      f"{'worst':>8} {'build':>7}")
for precision in (200.0, 100.0, 50.0, 20.0, 10.0):
    t0 = time.perf_counter()
    bundle = build_index(polygons, JoinConfig(mode="approx", precision=precision, memory_budget=64 << 20))
    build_s = time.perf_counter() - t0
    exact = set(join_exact(bundle, points))
    extra = set(join_approx(bundle, points)) - exact
    worst = max((distance_point_polygon(points[i], by_id[pid]) for i, pid in extra), default=0.0)
    print(f"{precision:>9.0f}m {bundle.mode.value:>7} {bundle.precision:>7.1f}m {bundle.act.node_count:>6} "
          f"{bundle.memory_usage() / 2**20:>8.2f}MiB {len(extra):>11} {worst:>7.2f}m {build_s:>6.1f}s")

# With a budget that is too small for the requested precision the build
# falls back to an exact index instead of silently loosening the bound.
tight = build_index(polygons, JoinConfig(mode="approx", precision=5.0, memory_budget=512 << 10),
                    training_points=points[:5000])
print(f"\n5 m within 512 KiB -> mode {tight.mode.value}, "
      f"refinement stopped at {tight.report.max_candidate_cell_diagonal:.1f} m, "
      f"{tight.training.cells_split} cells split by training")
