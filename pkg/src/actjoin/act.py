"""Adaptive Cell Trie: a 256-way radix trie over cell-id bits.

Every node is 256 tagged 64-bit entries. The two low bits select the kind:

    00  link to a child node (node id << 2); the all-zero value is the sentinel
    01  one inlined payload in bits 32..2
    10  two inlined payloads in bits 63..33 and 32..2
    11  offset into the lookup table in bits 32..2

A payload is ``(polygon_id << 1) | interior``. Reference lists with three or
more entries live in a flat uint32 lookup table as
``[t, true ids..., c, candidate ids...]`` records, deduplicated.

Node ids are 1-based indices into a growable arena so that id 0 can act as
the sentinel. Cells whose level is not a multiple of four are stored by
replicating their entry across the matching slot run of the final node.
"""

from __future__ import annotations

import io
import math
import struct
from collections import Counter
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Mapping

import numpy as np

from . import cellgrid
from .cellgrid import DomainError
from .geometry import Polygon
from .logical import PolygonReference, SuperCovering, split_references

FANOUT = 256
GRANULARITY = 4
NODE_BYTES = FANOUT * 8
FACE_LANES = 8
# roots, prefixes and prefix lengths, one 8-lane 64-bit vector each
FACE_NODE_BYTES = 3 * FACE_LANES * 8

TAG_LINK, TAG_ONE, TAG_TWO, TAG_OFFSET = 0, 1, 2, 3
SENTINEL = 0
FALSE_HIT: tuple = ()

MAGIC = b"ACT1"
_U64 = np.dtype("<u8")
_U32 = np.dtype("<u4")


class IndexBuildError(ValueError):
    """The super covering cannot be stored with the chosen configuration."""


class CorruptIndexError(ValueError):
    """An entry or snapshot does not decode to a valid index."""


@dataclass(frozen=True)
class ACTConfig:
    k_max: int = 48
    batch_width: int = 8

    def __post_init__(self):
        if self.k_max % 8 or not 8 <= self.k_max <= 56:
            raise ValueError("k_max must be a multiple of 8 in [8, 56]")
        if self.batch_width < 1:
            raise ValueError("batch_width must be positive")

    @property
    def fanout(self) -> int:
        return FANOUT

    @property
    def granularity(self) -> int:
        return GRANULARITY

    @property
    def max_level(self) -> int:
        return self.k_max // 2


@dataclass
class ACTStats:
    node_count: int
    memory_bytes: int
    avg_key_length_bits: float
    estimated_cost: int


@dataclass
class TrainingStats:
    points_consumed: int = 0
    cells_split: int = 0
    expensive_before: float = 0.0
    expensive_after: float = 0.0
    budget_exhausted: bool = False


# -- entry encoding ---------------------------------------------------------

def tag(entry: int) -> int:
    return entry & 3


def _payload(ref: PolygonReference) -> int:
    return (ref.polygon_id << 1) | int(ref.interior)


def _unpayload(p: int) -> PolygonReference:
    return PolygonReference(p >> 1, bool(p & 1))


def encode_one(ref: PolygonReference) -> int:
    return (_payload(ref) << 2) | TAG_ONE


def encode_two(a: PolygonReference, b: PolygonReference) -> int:
    return (_payload(a) << 33) | (_payload(b) << 2) | TAG_TWO


def encode_offset(offset: int) -> int:
    if not 0 <= offset < 1 << 31:
        raise IndexBuildError("lookup table offset exceeds 31 bits")
    return (offset << 2) | TAG_OFFSET


def final_chunk(level: int) -> int:
    """Index of the 8-bit key chunk (trie depth) that stores a cell of ``level``."""
    return max((level + 3) // 4, 1) - 1


def chunk_of(key: int, j: int) -> int:
    return (key >> (53 - 8 * j)) & 0xFF


def slot_run(cell: int, level: int) -> tuple[int, int]:
    """First slot and run length of ``cell`` inside its final node."""
    j = final_chunk(level)
    r = level - 4 * j
    size = 1 << (8 - 2 * r)
    return chunk_of(cell, j) & ~(size - 1) & 0xFF, size


def _canonical(refs: Iterable[PolygonReference]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    refs = list(refs)
    return (tuple(sorted(r.polygon_id for r in refs if r.interior)),
            tuple(sorted(r.polygon_id for r in refs if not r.interior)))


def _record_words(key) -> list[int]:
    trues, cands = key
    return [len(trues), *trues, len(cands), *cands]


def _common_prefix_chunks(cells: list[int]) -> int:
    if not cells:
        return 0
    limit = min(final_chunk(cellgrid.cell_level(c)) for c in cells)
    p = 0
    first = cells[0]
    while p < limit and all(chunk_of(c, p) == chunk_of(first, p) for c in cells):
        p += 1
    return p


class ACTIndex:
    """Physical index: face node, node arena and lookup table."""

    def __init__(self, cfg: ACTConfig | None = None):
        self.cfg = cfg or ACTConfig()
        self._arena = np.zeros((16, FANOUT), dtype=np.uint64)
        self._n_nodes = 0
        self.roots = np.zeros(FACE_LANES, dtype=np.uint64)
        self.prefixes = np.zeros(FACE_LANES, dtype=np.uint64)
        self.prefix_lengths = np.zeros(FACE_LANES, dtype=np.uint64)
        self.lut: list[int] = []
        self._lut_index: dict = {}
        self.level_counts: Counter = Counter()

    # -- bookkeeping -------------------------------------------------------

    @property
    def k_max(self) -> int:
        return self.cfg.k_max

    @property
    def max_level(self) -> int:
        return self.cfg.max_level

    @property
    def node_count(self) -> int:
        return self._n_nodes

    @property
    def nodes(self) -> np.ndarray:
        return self._arena[: self._n_nodes]

    def memory_usage(self) -> int:
        return self._n_nodes * NODE_BYTES + 4 * len(self.lut) + FACE_NODE_BYTES

    def walk_memory(self) -> int:
        """Memory recomputed by walking every node reachable from the face node."""
        seen = set()
        stack = [int(r) for r in self.roots if r]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            row = self._arena[nid - 1]
            links = row[(row & np.uint64(3)) == 0]
            stack.extend(int(v) >> 2 for v in links if v)
        return len(seen) * NODE_BYTES + 4 * len(self.lut) + FACE_NODE_BYTES

    def _alloc(self) -> int:
        if self._n_nodes == len(self._arena):
            grown = np.zeros((2 * len(self._arena), FANOUT), dtype=np.uint64)
            grown[: self._n_nodes] = self._arena[: self._n_nodes]
            self._arena = grown
        self._n_nodes += 1
        return self._n_nodes

    def _root_for(self, cell: int) -> tuple[int, int]:
        f = cell >> cellgrid.FACE_SHIFT
        return int(self.roots[f]), int(self.prefix_lengths[f]) // 8

    def record_offset(self, refs: Iterable[PolygonReference]) -> int:
        key = _canonical(refs)
        off = self._lut_index.get(key)
        if off is None:
            off = len(self.lut)
            self.lut.extend(_record_words(key))
            self._lut_index[key] = off
        return off

    def encode(self, refs) -> int:
        refs = list(refs)
        if not refs:
            return SENTINEL
        if len(refs) == 1:
            return encode_one(refs[0])
        if len(refs) == 2:
            return encode_two(refs[0], refs[1])
        return encode_offset(self.record_offset(refs))

    def _new_entry_bytes(self, ref_lists) -> int:
        seen = set()
        extra = 0
        for refs in ref_lists:
            if len(refs) >= 3:
                key = _canonical(refs)
                if key not in self._lut_index and key not in seen:
                    seen.add(key)
                    extra += 4 * len(_record_words(key))
        return extra

    def _store(self, cell: int, entry: int, level: int | None = None) -> None:
        level = cellgrid.cell_level(cell) if level is None else level
        node, p = self._root_for(cell)
        e = final_chunk(level)
        for j in range(p, e):
            idx = chunk_of(cell, j)
            v = int(self._arena[node - 1, idx])
            if v == SENTINEL:
                child = self._alloc()
                self._arena[node - 1, idx] = child << 2
                node = child
            elif v & 3:
                raise IndexBuildError(f"cell {cellgrid.to_token(cell)} overlaps an indexed cell")
            else:
                node = v >> 2
        start, size = slot_run(cell, level)
        self._arena[node - 1, start:start + size] = np.uint64(entry)

    # -- probing -----------------------------------------------------------

    def _descend(self, key: int):
        """Return ``(entry, node, chunk, node_accesses)`` for a cell key."""
        f = key >> cellgrid.FACE_SHIFT
        accesses = 1  # face node
        root = int(self.roots[f])
        if not root:
            return SENTINEL, 0, -1, accesses
        plen = int(self.prefix_lengths[f])
        if key >> (cellgrid.FACE_SHIFT - plen) != int(self.prefixes[f]):
            return SENTINEL, 0, -1, accesses
        node = root
        j = plen // 8
        arena = self._arena
        while True:
            accesses += 1
            entry = int(arena[node - 1, chunk_of(key, j)])
            if entry & 3 or entry == SENTINEL:
                return entry, node, j, accesses
            node = entry >> 2
            j += 1

    def probe(self, cell: int) -> int:
        """Tagged entry for a cell id at level ``k_max / 2`` (0 means false hit)."""
        return self._descend(cell)[0]

    def probe_traced(self, cell: int) -> tuple[int, int]:
        entry, _, _, accesses = self._descend(cell)
        return entry, accesses

    def resolve(self, entry: int) -> tuple[PolygonReference, ...]:
        t = entry & 3
        if t == TAG_LINK:
            if entry == SENTINEL:
                return FALSE_HIT
            raise DomainError("cannot resolve a link entry")
        if t == TAG_ONE:
            return (_unpayload((entry >> 2) & 0x7FFFFFFF),)
        if t == TAG_TWO:
            return (_unpayload(entry >> 33), _unpayload((entry >> 2) & 0x7FFFFFFF))
        off = (entry >> 2) & 0x7FFFFFFF
        lut = self.lut
        try:
            nt = lut[off]
            trues = lut[off + 1: off + 1 + nt]
            nc = lut[off + 1 + nt]
            cands = lut[off + 2 + nt: off + 2 + nt + nc]
        except IndexError:
            raise CorruptIndexError(f"lookup table offset {off} is out of range") from None
        if len(trues) != nt or len(cands) != nc:
            raise CorruptIndexError(f"lookup table record at {off} is truncated")
        return tuple(PolygonReference(i, True) for i in trues) + tuple(PolygonReference(i, False) for i in cands)

    def probe_lanes(self, cell_ids) -> np.ndarray:
        """Lockstep traversal of many keys at once; returns tagged entries.

        Stage 1 picks the root and checks the common prefix per lane, stage 2
        walks all active lanes one trie level per iteration under masks.
        """
        ids = np.asarray(cell_ids, dtype=np.uint64)
        # stage 1: determine tree root
        faces = (ids >> np.uint64(61)).astype(np.intp)
        nodes = self.roots[faces]
        p = self.prefixes[faces]
        lengths = self.prefix_lengths[faces]
        p_actual = ids >> (np.uint64(61) - lengths)
        m = (p_actual == p) & (nodes != 0)
        # stage 2: tree traversal
        level = (lengths // np.uint64(8)).astype(np.int64)
        m_traverse = m.copy()
        m_output = np.zeros(ids.shape, dtype=bool)
        m_done = np.zeros(ids.shape, dtype=bool)
        values = np.zeros(ids.shape, dtype=np.uint64)
        flat = self._arena.reshape(-1)
        limit = self.k_max // 8
        rounds = 0
        while m_traverse.any():
            rounds += 1
            if rounds > limit:
                raise CorruptIndexError("traversal exceeded k_max / 8 trie levels")
            shift = np.maximum(53 - 8 * level, 0).astype(np.uint64)
            offsets = (ids >> shift) & np.uint64(0xFF)
            sel = np.flatnonzero(m_traverse)
            values[sel] = flat[(nodes[sel] - np.uint64(1)) * np.uint64(FANOUT) + offsets[sel]]
            m_ptr = ((values & np.uint64(3)) == 0) & m_traverse
            m_sentinel = (values == 0) & m_ptr
            nodes = np.where(m_ptr, values >> np.uint64(2), nodes)
            m_output |= ~m_ptr & m_traverse
            m_done |= m_output | m_sentinel
            m_traverse ^= m_done & m_traverse
            level += 1
        return np.where(m_output, values, np.uint64(0))

    def probe_batch(self, cell_ids) -> list[tuple[PolygonReference, ...]]:
        """Probe exactly ``batch_width`` keys in lockstep and resolve each lane."""
        ids = np.asarray(cell_ids, dtype=np.uint64)
        if ids.shape != (self.cfg.batch_width,):
            raise DomainError(f"probe_batch expects {self.cfg.batch_width} lanes, got {ids.shape}")
        # stage 3: produce output
        return [self.resolve(int(v)) for v in self.probe_lanes(ids)]

    def probe_points(self, lats, lngs) -> np.ndarray:
        return self.probe_lanes(cellgrid.cells_from_points(lats, lngs, self.max_level))

    # -- training helpers ---------------------------------------------------

    def logical_cell(self, key: int, node: int, j: int, entry: int) -> int:
        """Recover the coarsest cell around ``key`` stored with ``entry``."""
        row = self._arena[node - 1]
        slot = chunk_of(key, j)
        for r in (0, 1, 2, 3):
            if r == 0 and j != 0:
                continue
            size = 1 << (8 - 2 * r)
            start = slot & ~(size - 1)
            if np.all(row[start:start + size] == np.uint64(entry)):
                return cellgrid.cell_parent(key, 4 * j + r)
        return cellgrid.cell_parent(key, 4 * j + 4)

    def split_cell(self, cell: int, children: Mapping[int, Mapping[int, bool]]) -> None:
        level = cellgrid.cell_level(cell)
        node, p = self._root_for(cell)
        # find the node holding the cell's slot run
        for j in range(p, final_chunk(level)):
            node = int(self._arena[node - 1, chunk_of(cell, j)]) >> 2
        start, size = slot_run(cell, level)
        self._arena[node - 1, start:start + size] = np.uint64(SENTINEL)
        self.level_counts[level] -= 1
        for ch, refs in children.items():
            if refs:
                self._store(ch, self.encode(_refs_of(refs)), level + 1)
                self.level_counts[level + 1] += 1
        self.level_counts += Counter()

    def compact_lookup_table(self) -> None:
        """Drop lookup-table records no entry refers to any more."""
        rows = self._arena[: self._n_nodes]
        is_off = (rows & np.uint64(3)) == np.uint64(3)
        used = np.unique(rows[is_off] >> np.uint64(2)).tolist()
        if set(used) == set(self._lut_index.values()):
            return
        by_offset = {off: key for key, off in self._lut_index.items()}
        self.lut = []
        self._lut_index = {}
        remap = {}
        for off in used:
            key = by_offset[off]
            remap[off] = self.record_offset(_refs_from_key(key))
        for off, new in remap.items():
            rows[is_off & ((rows >> np.uint64(2)) == np.uint64(off))] = np.uint64(encode_offset(new))

    def stats(self) -> ACTStats:
        total = sum(self.level_counts.values())
        k_avg = sum(2 * lvl * n for lvl, n in self.level_counts.items()) / total if total else 0.0
        return ACTStats(self._n_nodes, self.memory_usage(), k_avg, estimate_probe_cost(self))

    # -- snapshots -----------------------------------------------------------

    def save(self, f: BinaryIO) -> None:
        """Write the little-endian ``ACT1`` snapshot."""
        f.write(MAGIC)
        f.write(struct.pack("<IQQ", self.k_max, self._n_nodes, len(self.lut)))
        for vec in (self.roots, self.prefixes, self.prefix_lengths):
            f.write(vec.astype(_U64).tobytes())
        levels = np.zeros(cellgrid.MAX_LEVEL + 1, dtype=_U64)
        for lvl, n in self.level_counts.items():
            levels[lvl] = n
        f.write(levels.tobytes())
        f.write(self._arena[: self._n_nodes].astype(_U64).tobytes())
        f.write(np.asarray(self.lut, dtype=_U32).tobytes())

    @classmethod
    def load(cls, f: BinaryIO) -> "ACTIndex":
        def read(n):
            buf = f.read(n)
            if len(buf) != n:
                raise CorruptIndexError("snapshot is truncated")
            return buf

        if read(4) != MAGIC:
            raise CorruptIndexError("not an ACT1 snapshot")
        k_max, n_nodes, n_lut = struct.unpack("<IQQ", read(20))
        act = cls(ACTConfig(k_max=k_max))
        act.roots = np.frombuffer(read(8 * FACE_LANES), dtype=_U64).astype(np.uint64)
        act.prefixes = np.frombuffer(read(8 * FACE_LANES), dtype=_U64).astype(np.uint64)
        act.prefix_lengths = np.frombuffer(read(8 * FACE_LANES), dtype=_U64).astype(np.uint64)
        levels = np.frombuffer(read(8 * (cellgrid.MAX_LEVEL + 1)), dtype=_U64)
        act.level_counts = Counter({i: int(n) for i, n in enumerate(levels) if n})
        arena = np.frombuffer(read(NODE_BYTES * n_nodes), dtype=_U64).reshape(n_nodes, FANOUT)
        act._arena = np.zeros((max(16, n_nodes), FANOUT), dtype=np.uint64)
        act._arena[:n_nodes] = arena
        act._n_nodes = n_nodes
        act.lut = np.frombuffer(read(4 * n_lut), dtype=_U32).astype(np.int64).tolist()
        act._rebuild_lut_index()
        return act

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ACTIndex":
        return cls.load(io.BytesIO(data))

    def _rebuild_lut_index(self) -> None:
        self._lut_index = {}
        off = 0
        lut = self.lut
        while off < len(lut):
            nt = lut[off]
            trues = tuple(lut[off + 1: off + 1 + nt])
            if off + 1 + nt >= len(lut):
                raise CorruptIndexError("lookup table record is truncated")
            nc = lut[off + 1 + nt]
            cands = tuple(lut[off + 2 + nt: off + 2 + nt + nc])
            if len(cands) != nc:
                raise CorruptIndexError("lookup table record is truncated")
            self._lut_index.setdefault((trues, cands), off)
            off += 2 + nt + nc


def _refs_of(refs: Mapping[int, bool]) -> tuple[PolygonReference, ...]:
    return tuple(PolygonReference(pid, flag) for pid, flag in sorted(refs.items()))


def _refs_from_key(key) -> list[PolygonReference]:
    trues, cands = key
    return [PolygonReference(i, True) for i in trues] + [PolygonReference(i, False) for i in cands]


def build_act(sc: SuperCovering, cfg: ACTConfig | None = None) -> ACTIndex:
    act = ACTIndex(cfg)
    cells = list(sc)
    for c in cells:
        if cellgrid.cell_level(c) > act.max_level:
            raise IndexBuildError(
                f"cell {cellgrid.to_token(c)} is at level {cellgrid.cell_level(c)}; "
                f"k_max={act.k_max} indexes up to level {act.max_level}, use a larger k_max"
            )
    by_face: dict[int, list[int]] = {}
    for c in cells:
        by_face.setdefault(c >> cellgrid.FACE_SHIFT, []).append(c)
    for f, group in sorted(by_face.items()):
        p = _common_prefix_chunks(group)
        act.roots[f] = act._alloc()
        act.prefix_lengths[f] = 8 * p
        act.prefixes[f] = group[0] >> (cellgrid.FACE_SHIFT - 8 * p)
    for cell, refs in sc.items():
        level = cellgrid.cell_level(cell)
        act._store(cell, act.encode(refs), level)
        act.level_counts[level] += 1
    return act


def probe(act: ACTIndex, cell_id: int) -> int:
    return act.probe(cell_id)


def resolve(act: ACTIndex, entry: int) -> tuple[PolygonReference, ...]:
    return act.resolve(entry)


def probe_batch(act: ACTIndex, cell_ids) -> list[tuple[PolygonReference, ...]]:
    return act.probe_batch(cell_ids)


def memory_usage(act: ACTIndex) -> int:
    return act.memory_usage()


def estimate_probe_cost(act: ACTIndex) -> int:
    """``ceil(k_avg / log2(fanout))`` with unit cost per node access."""
    total = sum(act.level_counts.values())
    if not total:
        return 0
    k_avg = sum(2 * lvl * n for lvl, n in act.level_counts.items()) / total
    return math.ceil(k_avg / math.log2(FANOUT))


def _has_candidate(refs) -> bool:
    return any(not r.interior for r in refs)


def expensive_fraction(act: ACTIndex, keys: np.ndarray) -> float:
    if len(keys) == 0:
        return 0.0
    entries = act.probe_lanes(keys)
    uniq, counts = np.unique(entries, return_counts=True)
    hit = sum(int(n) for v, n in zip(uniq.tolist(), counts.tolist()) if v and _has_candidate(act.resolve(v)))
    return hit / len(keys)


def train(act: ACTIndex, polygons, training_points, memory_budget: int) -> TrainingStats:
    """Split expensive cells hit by training points until the budget is used up.

    ``training_points`` is an ``(n, 2)`` array of ``lat, lng`` or an iterable
    of ``LatLng``. Exact join results are unaffected.
    """
    polys = polygons if isinstance(polygons, Mapping) else {p.id: p for p in polygons}
    pts = np.asarray(list(training_points) if not isinstance(training_points, np.ndarray) else training_points,
                     dtype=np.float64).reshape(-1, 2)
    stats = TrainingStats()
    if memory_budget < act.memory_usage():
        raise DomainError("memory budget is already exceeded before training")
    keys = cellgrid.cells_from_points(pts[:, 0], pts[:, 1], act.max_level)
    stats.expensive_before = expensive_fraction(act, keys)
    for key in keys.tolist():
        stats.points_consumed += 1
        entry, node, j, _ = act._descend(key)
        if entry == SENTINEL:
            continue
        refs = act.resolve(entry)
        if not _has_candidate(refs):
            continue
        cell = act.logical_cell(key, node, j, entry)
        level = cellgrid.cell_level(cell)
        if level >= act.max_level:
            continue
        children = split_references(cell, {r.polygon_id: r.interior for r in refs}, polys)
        grow = NODE_BYTES if level % 4 == 0 and level > 0 and any(children.values()) else 0
        grow += act._new_entry_bytes(_refs_of(k) for k in children.values())
        if act.memory_usage() + grow > memory_budget:
            stats.budget_exhausted = True
            break
        act.split_cell(cell, children)
        stats.cells_split += 1
    act.compact_lookup_table()
    stats.expensive_after = expensive_fraction(act, keys)
    return stats


class ActSizeEstimator:
    """Predicts :func:`memory_usage` of the ACT a super covering would produce."""

    def __init__(self, cfg: ACTConfig | None = None):
        self.cfg = cfg or ACTConfig()

    def __call__(self, sc: SuperCovering) -> int:
        cells = list(sc)
        if not cells:
            return FACE_NODE_BYTES
        tracker = _SizeTracker(_common_prefix_chunks(cells))
        for cell, refs in sc.items():
            tracker.add(cell, refs)
        return tracker.bytes

    def tracker(self, sc: SuperCovering) -> "_SizeTracker":
        """Incremental size tracker; keeps the initial root prefix, so it never underestimates."""
        cells = list(sc)
        tracker = _SizeTracker(_common_prefix_chunks(cells))
        for cell, refs in sc.items():
            tracker.add(cell, refs)
        return tracker


class _SizeTracker:
    def __init__(self, p: int):
        self.p = p
        self.cells = 0
        self.nodes: Counter = Counter()
        self.records: Counter = Counter()
        self.lut_words = 0

    @property
    def bytes(self) -> int:
        n = (1 if self.cells else 0) + len(self.nodes)
        return n * NODE_BYTES + 4 * self.lut_words + FACE_NODE_BYTES

    def _node_keys(self, cell: int, level: int):
        return [(j, cell >> (cellgrid.FACE_SHIFT - 8 * j)) for j in range(self.p + 1, final_chunk(level) + 1)]

    def add(self, cell: int, refs) -> None:
        self.cells += 1
        for k in self._node_keys(cell, cellgrid.cell_level(cell)):
            self.nodes[k] += 1
        if len(refs) >= 3:
            key = _canonical(refs)
            if not self.records[key]:
                self.lut_words += len(_record_words(key))
            self.records[key] += 1

    def remove(self, cell: int, refs) -> None:
        self.cells -= 1
        for k in self._node_keys(cell, cellgrid.cell_level(cell)):
            self.nodes[k] -= 1
            if not self.nodes[k]:
                del self.nodes[k]
        if len(refs) >= 3:
            key = _canonical(refs)
            self.records[key] -= 1
            if not self.records[key]:
                del self.records[key]
                self.lut_words -= len(_record_words(key))

    def apply_split(self, cell: int, refs: Mapping[int, bool], children) -> None:
        self.remove(cell, _refs_of(refs))
        for ch, kid in children.items():
            if kid:
                self.add(ch, _refs_of(kid))

    def bytes_after_split(self, cell: int, refs: Mapping[int, bool], children) -> int:
        self.apply_split(cell, refs, children)
        out = self.bytes
        # undo
        for ch, kid in children.items():
            if kid:
                self.remove(ch, _refs_of(kid))
        self.add(cell, _refs_of(refs))
        return out
