# Training: spend spare memory where the points actually are.
#
# Historical points that hit boundary cells cause those cells to be split.
# Later points from the same distribution then tend to land in cells that are
# either fully inside a polygon (no geometry needed) or fully outside (no
# match at all). Results stay exact whatever the budget.
#
# Run with:  python demos/03_training.py

import numpy as np

from actjoin import Polygon
from actjoin.join import JoinConfig, build_index, collect_metrics, count_per_polygon, join_exact

rng = np.random.default_rng(2)

# A 4 x 4 grid of districts with wobbly shared borders would take a while to
# build by hand; plain squares with a gap between them do the job here.
polygons = []
for i in range(4):
    for j in range(4):
        lat, lng = 40.70 + 0.011 * i, -74.00 + 0.011 * j
        polygons.append(Polygon(4 * i + j, [(lat, lng), (lat + 0.01, lng), (lat + 0.01, lng + 0.01),
                                            (lat, lng + 0.01)]))


def pickups(n):
    # taxi-like: a handful of busy corners and a thin uniform background
    hot = np.array([[40.711, -73.989], [40.722, -73.967], [40.733, -73.978], [40.744, -73.956]])
    pts = hot[rng.integers(0, len(hot), n)] + rng.normal(0, 0.0015, (n, 2))
    bg = rng.random(n) < 0.15
    pts[bg] = np.column_stack([rng.uniform(40.70, 40.744, bg.sum()), rng.uniform(-74.0, -73.956, bg.sum())])
    return pts


history, today = pickups(20_000), pickups(20_000)
base = build_index(polygons, JoinConfig())
reference = count_per_polygon(join_exact(base, today))
m = collect_metrics(base, today)
print(f"untrained: {base.memory_usage() / 1024:7.0f} KiB, solely true hits {m.solely_true_hit_fraction:.1%}, "
      f"false hits {m.false_hit_fraction:.1%}")

for extra_kib in (64, 256, 1024, 4096):
    budget = base.memory_usage() + extra_kib * 1024
    trained = build_index(polygons, JoinConfig(memory_budget=budget), training_points=history)
    m = collect_metrics(trained, today)
    same = count_per_polygon(join_exact(trained, today)) == reference
    print(f"+{extra_kib:>4} KiB: {trained.memory_usage() / 1024:7.0f} KiB, "
          f"solely true hits {m.solely_true_hit_fraction:.1%}, false hits {m.false_hit_fraction:.1%}, "
          f"{trained.training.cells_split:>5} splits, counts unchanged: {same}")
