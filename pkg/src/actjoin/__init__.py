"""Streaming point / static polygon join with true-hit filtering."""

from .cellgrid import LatLng, DomainError
from .geometry import Polygon, CoveringConfig, CellRelation, pip_test, compute_covering
from .logical import PolygonReference, SuperCovering, build_super_covering, refine_to_precision
from .act import ACTConfig, ACTIndex, build_act, train
from .join import (
    IndexBundle,
    JoinConfig,
    JoinPair,
    MemoryBudgetError,
    Mode,
    build_index,
    collect_metrics,
    count_per_polygon,
    join_approx,
    join_exact,
    load_bundle,
    save_bundle,
)

__version__ = "0.1.0"
