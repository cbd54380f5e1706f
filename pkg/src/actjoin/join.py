"""Five-phase join: coverings, super covering, physical index, probe, refine."""

from __future__ import annotations

import enum
import json
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .act import ACTConfig, ACTIndex, CorruptIndexError, ActSizeEstimator, TrainingStats, build_act, train
from .cellgrid import DomainError
from .geometry import CoveringConfig, Polygon, compute_covering, pip_test_many
from .logical import PrecisionReport, SuperCovering, build_super_covering, refine_to_precision

MAX_POLYGONS = 1 << 30
BUNDLE_MAGIC = b"BNDL"


class Mode(str, enum.Enum):
    EXACT = "exact"
    APPROX = "approx"


class MemoryBudgetError(ValueError):
    """The unrefined index alone does not fit into the memory budget."""


@dataclass(frozen=True)
class JoinConfig:
    mode: Mode = Mode.EXACT
    precision: float | None = None
    memory_budget: int = 256 << 20
    covering: CoveringConfig = field(default_factory=CoveringConfig)
    training_limit: int | None = None
    k_max: int = 48

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is Mode.APPROX and not (self.precision and self.precision > 0):
            raise ValueError("approximate mode needs a positive precision")
        if self.memory_budget <= 0:
            raise ValueError("memory_budget must be positive")


class JoinPair(NamedTuple):
    point: int
    polygon_id: int


@dataclass
class IndexMetrics:
    tree_nodes: int
    false_hit_fraction: float
    solely_true_hit_fraction: float
    avg_candidates: float | None

    def as_table_row(self) -> dict:
        return {
            "tree_nodes": self.tree_nodes,
            "false_hits": self.false_hit_fraction,
            "solely_true_hits": self.solely_true_hit_fraction,
            "avg_candidates": self.avg_candidates,
        }


@dataclass
class IndexBundle:
    act: ACTIndex
    polygons: dict[int, Polygon]
    mode: Mode
    precision: float | None
    memory_budget: int
    report: PrecisionReport | None = None
    training: TrainingStats | None = None
    super_covering: SuperCovering | None = None

    def memory_usage(self) -> int:
        return self.act.memory_usage()


@dataclass
class JoinStats:
    pip_tests: int = 0
    true_hits: int = 0
    candidate_hits: int = 0


def _as_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(points, tuple) and len(points) == 2 and isinstance(points[0], np.ndarray):
        return np.asarray(points[0], dtype=np.float64), np.asarray(points[1], dtype=np.float64)
    arr = np.asarray(points if isinstance(points, np.ndarray) else list(points), dtype=np.float64)
    arr = arr.reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def covering_config_for(cfg: JoinConfig) -> CoveringConfig:
    """The covering config with levels capped at what the trie can index."""
    cap = cfg.k_max // 2
    c = cfg.covering
    return CoveringConfig(c.max_covering_cells, min(c.max_covering_level, cap),
                          c.max_interior_cells, min(c.max_interior_level, cap))


def build_logical_index(polygons: Iterable[Polygon], cfg: JoinConfig) -> SuperCovering:
    cov_cfg = covering_config_for(cfg)
    polygons = list(polygons)
    coverings = [compute_covering(p, cov_cfg) for p in polygons]
    interiors = [compute_covering(p, cov_cfg, interior=True) for p in polygons]
    return build_super_covering(coverings, interiors)


def build_index(polygons, cfg: JoinConfig, training_points=None) -> IndexBundle:
    """Negotiate approximate vs exact mode and build the physical index.

    Approximate mode is kept when refinement reaches the precision within the
    memory budget; otherwise the unrefined index is trained and the join runs
    exactly.
    """
    polygons = list(polygons)
    if len(polygons) > MAX_POLYGONS:
        raise DomainError("at most 2^30 polygons can be indexed")
    by_id = {}
    for p in polygons:
        if p.id in by_id:
            raise DomainError(f"duplicate polygon id {p.id}")
        by_id[p.id] = p
    act_cfg = ACTConfig(k_max=cfg.k_max)
    estimator = ActSizeEstimator(act_cfg)
    sc = build_logical_index(polygons, cfg)
    base = estimator(sc)
    if base > cfg.memory_budget:
        raise MemoryBudgetError(f"unrefined index needs {base} bytes, budget is {cfg.memory_budget}")

    if cfg.mode is Mode.APPROX:
        refined = sc.copy()
        report = refine_to_precision(refined, by_id, cfg.precision, estimator, cfg.memory_budget, act_cfg.max_level)
        if report.achieved:
            act = build_act(refined, act_cfg)
            bundle = IndexBundle(act, by_id, Mode.APPROX, report.max_candidate_cell_diagonal,
                                 cfg.memory_budget, report, None, refined)
            assert act.memory_usage() <= cfg.memory_budget
            return bundle
    else:
        report = None

    act = build_act(sc, act_cfg)
    stats = None
    if training_points is not None:
        lats, lngs = _as_arrays(training_points)
        if cfg.training_limit is not None:
            lats, lngs = lats[: cfg.training_limit], lngs[: cfg.training_limit]
        stats = train(act, by_id, np.column_stack([lats, lngs]), cfg.memory_budget)
    assert act.memory_usage() <= cfg.memory_budget
    return IndexBundle(act, by_id, Mode.EXACT, None, cfg.memory_budget, report, stats, sc)


def _join(bundle: IndexBundle, points, refine: bool, stats: JoinStats | None = None):
    lats, lngs = _as_arrays(points)
    act = bundle.act
    entries = act.probe_points(lats, lngs)
    order = np.argsort(entries, kind="stable")
    sorted_entries = entries[order]
    uniq, starts = np.unique(sorted_entries, return_index=True)
    bounds = list(starts) + [len(entries)]
    pts_out, ids_out = [], []
    pending: dict[int, list[np.ndarray]] = {}
    for k, entry in enumerate(uniq.tolist()):
        if entry == 0:
            continue
        idx = order[bounds[k]:bounds[k + 1]]
        for ref in act.resolve(entry):
            if ref.interior or not refine:
                if stats is not None:
                    if ref.interior:
                        stats.true_hits += len(idx)
                    else:
                        stats.candidate_hits += len(idx)
                pts_out.append(idx)
                ids_out.append(np.full(len(idx), ref.polygon_id, dtype=np.int64))
            else:
                pending.setdefault(ref.polygon_id, []).append(idx)
    # one vectorised exact test per polygon over all of its candidate points
    for pid, parts in pending.items():
        idx = np.concatenate(parts)
        if stats is not None:
            stats.candidate_hits += len(idx)
            stats.pip_tests += len(idx)
        keep = idx[pip_test_many(bundle.polygons[pid], lats[idx], lngs[idx])]
        pts_out.append(keep)
        ids_out.append(np.full(len(keep), pid, dtype=np.int64))
    if not pts_out:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    p = np.concatenate(pts_out).astype(np.int64)
    q = np.concatenate(ids_out)
    o = np.lexsort((q, p))
    return p[o], q[o]


def join_arrays(bundle: IndexBundle, points, exact: bool = True, stats: JoinStats | None = None):
    """Join as two aligned arrays ``(point_index, polygon_id)``, sorted."""
    return _join(bundle, points, exact, stats)


def join_exact(bundle: IndexBundle, points, stats: JoinStats | None = None) -> list[JoinPair]:
    p, q = _join(bundle, points, True, stats)
    return [JoinPair(a, b) for a, b in zip(p.tolist(), q.tolist())]


def join_approx(bundle: IndexBundle, points, stats: JoinStats | None = None) -> list[JoinPair]:
    """Treat candidate hits as hits; extra pairs lie within the bundle's precision."""
    p, q = _join(bundle, points, False, stats)
    return [JoinPair(a, b) for a, b in zip(p.tolist(), q.tolist())]


def count_per_polygon(pairs: Iterable) -> dict[int, int]:
    counts = Counter(pair[1] for pair in pairs)
    return dict(sorted(counts.items()))


def count_stream(bundle: IndexBundle, chunks: Iterable, exact: bool = True, threads: int = 1) -> dict[int, int]:
    """Per-polygon counts over a stream of point chunks without keeping pairs.

    Each chunk is anything :func:`join_exact` accepts. With ``threads > 1``
    chunks are joined concurrently and partial counts merged.
    """
    total: Counter = Counter()

    def one(chunk):
        _, ids = _join(bundle, chunk, exact)
        u, c = np.unique(ids, return_counts=True)
        return dict(zip(u.tolist(), c.tolist()))

    if threads <= 1:
        for chunk in chunks:
            total.update(one(chunk))
    else:
        with ThreadPoolExecutor(threads) as pool:
            for part in pool.map(one, chunks):
                total.update(part)
    return dict(sorted(total.items()))


def collect_metrics(bundle: IndexBundle, points) -> IndexMetrics:
    """Table-1 style index quality metrics over a probe workload."""
    lats, lngs = _as_arrays(points)
    n = len(lats)
    act = bundle.act
    if n == 0:
        return IndexMetrics(act.node_count, 0.0, 0.0, None)
    entries = act.probe_points(lats, lngs)
    uniq, counts = np.unique(entries, return_counts=True)
    false_hits = solely_true = refining = 0
    cand_total = 0
    for entry, cnt in zip(uniq.tolist(), counts.tolist()):
        refs = act.resolve(entry)
        if not refs:
            false_hits += cnt
            continue
        cands = sum(1 for r in refs if not r.interior)
        if cands == 0:
            solely_true += cnt
        else:
            refining += cnt
            cand_total += cands * cnt
    avg = cand_total / refining if refining else None
    return IndexMetrics(act.node_count, false_hits / n, solely_true / n, avg)


def brute_force_join(polygons: Iterable[Polygon], points) -> list[JoinPair]:
    """Nested-loop join with the exact point-in-polygon test only."""
    lats, lngs = _as_arrays(points)
    pairs = []
    for poly in polygons:
        hit = np.flatnonzero(pip_test_many(poly, lats, lngs))
        pairs.extend(JoinPair(int(i), poly.id) for i in hit)
    pairs.sort()
    return pairs


def save_bundle(bundle: IndexBundle, path) -> None:
    """Write the trie snapshot followed by a JSON trailer with mode and polygons.

    The trailer is needed so that a saved index can be joined exactly without
    the original polygon file.
    """
    meta = {
        "mode": bundle.mode.value,
        "precision": bundle.precision,
        "memory_budget": bundle.memory_budget,
        "polygons": [{"id": p.id, "vertices": [list(v) for v in p.vertices]}
                     for p in sorted(bundle.polygons.values(), key=lambda p: p.id)],
    }
    blob = json.dumps(meta, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        bundle.act.save(f)
        f.write(BUNDLE_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)


def load_bundle(path) -> IndexBundle:
    with open(path, "rb") as f:
        act = ACTIndex.load(f)
        head = f.read(12)
        if len(head) != 12 or head[:4] != BUNDLE_MAGIC:
            raise CorruptIndexError("index file has no polygon trailer")
        (n,) = struct.unpack("<Q", head[4:])
        blob = f.read(n)
        if len(blob) != n:
            raise CorruptIndexError("polygon trailer is truncated")
    try:
        meta = json.loads(blob.decode("utf-8"))
        polys = {d["id"]: Polygon(d["id"], [tuple(v) for v in d["vertices"]]) for d in meta["polygons"]}
        return IndexBundle(act, polys, Mode(meta["mode"]), meta["precision"], meta["memory_budget"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptIndexError(f"polygon trailer is malformed: {exc}") from None
