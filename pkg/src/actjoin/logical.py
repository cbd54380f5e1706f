"""The logical index: an overlap-free super covering of all polygons.

Coverings and interior coverings are merged without losing precision:
when one cell contains another, the ancestor is replaced by the descendant
plus the cell difference, and the ancestor's references are copied onto
all of them.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple

from . import cellgrid
from .cellgrid import DomainError
from .geometry import CellRelation, Covering, Polygon, classify_box, is_normalized


class PolygonReference(NamedTuple):
    polygon_id: int
    interior: bool


class SuperCovering:
    """Ordered map from cell id to polygon references with no overlapping keys."""

    def __init__(self):
        self._refs: dict[int, dict[int, bool]] = {}
        # number of keys strictly below each ancestor cell
        self._below: dict[int, int] = {}

    def __len__(self):
        return len(self._refs)

    def __contains__(self, cell):
        return cell in self._refs

    def __iter__(self):
        return iter(sorted(self._refs))

    def refs(self, cell: int) -> tuple[PolygonReference, ...]:
        return _as_refs(self._refs[cell])

    def items(self):
        for cell in sorted(self._refs):
            yield cell, _as_refs(self._refs[cell])

    def copy(self) -> "SuperCovering":
        out = SuperCovering()
        out._refs = {c: dict(r) for c, r in self._refs.items()}
        out._below = dict(self._below)
        return out

    def is_candidate(self, cell: int) -> bool:
        return not all(self._refs[cell].values())

    def ancestor_key(self, cell: int) -> int | None:
        for a in cellgrid.ancestors(cell):
            if a in self._refs:
                return a
        return None

    def descendant_key(self, cell: int) -> int | None:
        if cell not in self._below:
            return None
        while True:
            for ch in cellgrid.cell_children(cell):
                if ch in self._refs:
                    return ch
                if ch in self._below:
                    cell = ch
                    break
            else:  # pragma: no cover - counters out of sync
                raise AssertionError("descendant counter out of sync")

    def lookup(self, leaf: int) -> tuple[PolygonReference, ...] | None:
        if leaf in self._refs:
            return _as_refs(self._refs[leaf])
        for a in cellgrid.ancestors(leaf):
            if a in self._refs:
                return _as_refs(self._refs[a])
        return None

    # -- mutation ---------------------------------------------------------

    def _add_key(self, cell: int, refs: dict[int, bool]) -> None:
        self._refs[cell] = refs
        for a in cellgrid.ancestors(cell):
            self._below[a] = self._below.get(a, 0) + 1

    def _remove_key(self, cell: int) -> dict[int, bool]:
        refs = self._refs.pop(cell)
        for a in cellgrid.ancestors(cell):
            n = self._below[a] - 1
            if n:
                self._below[a] = n
            else:
                del self._below[a]
        return refs

    def insert(self, cell: int, refs: Mapping[int, bool]) -> None:
        """Insert ``cell`` resolving duplicates and containment conflicts."""
        existing = self._refs.get(cell)
        if existing is not None:
            _merge(existing, refs)
            return
        anc = self.ancestor_key(cell)
        if anc is not None:
            # existing key is the ascendant: it gives way to the new cell and
            # the difference, which cannot conflict with anything else
            anc_refs = self._remove_key(anc)
            for d in cellgrid.cell_difference(anc, cell):
                self._add_key(d, dict(anc_refs))
            merged = dict(anc_refs)
            _merge(merged, refs)
            self._add_key(cell, merged)
            return
        desc = self.descendant_key(cell)
        if desc is not None:
            # new cell is the ascendant; difference cells may contain further
            # keys, so they go through insert again
            _merge(self._refs[desc], refs)
            for d in cellgrid.cell_difference(cell, desc):
                self.insert(d, refs)
            return
        self._add_key(cell, dict(refs))

    def replace(self, cell: int, children: Mapping[int, Mapping[int, bool]]) -> None:
        """Swap ``cell`` for non-overlapping sub-cells (used by refinement)."""
        self._remove_key(cell)
        for ch, refs in children.items():
            if refs:
                self._add_key(ch, dict(refs))

    def dump(self) -> str:
        """Text dump: ``cell_hex level flags polygon_ids...`` per line."""
        lines = []
        for cell, refs in self.items():
            flags = "".join("i" if r.interior else "c" for r in refs)
            ids = " ".join(str(r.polygon_id) for r in refs)
            lines.append(f"{cellgrid.to_token(cell)} {cellgrid.cell_level(cell)} {flags} {ids}")
        return "\n".join(lines) + ("\n" if lines else "")


def _as_refs(refs: dict[int, bool]) -> tuple[PolygonReference, ...]:
    return tuple(PolygonReference(pid, flag) for pid, flag in sorted(refs.items()))


def _merge(into: dict[int, bool], refs: Mapping[int, bool]) -> None:
    # interior wins: an interior cell region is inside the polygon
    for pid, flag in refs.items():
        into[pid] = into.get(pid, False) or flag


def build_super_covering(coverings: Iterable[Covering], interiors: Iterable[Covering] = ()) -> SuperCovering:
    sc = SuperCovering()
    coverings = list(coverings)
    interiors = list(interiors)
    for cov in coverings + interiors:
        if not is_normalized(cov.cells):
            raise DomainError(f"covering of polygon {cov.polygon_id} is not normalized")
    for group, flag in ((coverings, False), (interiors, True)):
        for cov in group:
            for cell in cov.cells:
                sc.insert(cell, {cov.polygon_id: flag})
    return sc


def lookup_logical(sc: SuperCovering, leaf: int) -> tuple[PolygonReference, ...] | None:
    return sc.lookup(leaf)


@dataclass
class PrecisionReport:
    max_candidate_cell_diagonal: float
    cell_count: int
    achieved: bool
    splits: int = 0


def max_candidate_diagonal(sc: SuperCovering) -> float:
    return max((cellgrid.cell_diagonal_meters(c) for c in sc._refs if sc.is_candidate(c)), default=0.0)


def split_references(cell: int, refs: Mapping[int, bool], polygons: Mapping[int, Polygon],
                     hints: dict | None = None) -> dict[int, dict[int, bool]]:
    """Reclassify ``refs`` on each child of ``cell``.

    Interior references are inherited; candidate references are dropped on
    disjoint children and promoted on contained ones. ``hints`` caches the
    polygon edges near each (cell, polygon) pair between calls.
    """
    out = {}
    for ch in cellgrid.cell_children(cell):
        box = cellgrid.cell_bounds(ch)
        kid = {}
        for pid, interior in refs.items():
            if interior:
                kid[pid] = True
                continue
            hint = hints.get((cell, pid)) if hints is not None else None
            rel, _, near = classify_box(box, polygons[pid], hint)
            if rel is CellRelation.CONTAINED:
                kid[pid] = True
            elif rel is CellRelation.INTERSECTS_BOUNDARY:
                kid[pid] = False
                if hints is not None:
                    hints[(ch, pid)] = near
        out[ch] = kid
    if hints is not None:
        for pid in refs:
            hints.pop((cell, pid), None)
    return out


def prune_candidates(sc: SuperCovering, polygons: Mapping[int, Polygon]) -> int:
    """Re-test every candidate reference against its polygon.

    Merging cuts coarse cells into pieces that keep the coarse cell's
    references, so a piece may list a polygon it never touches. Those
    references are dropped and fully covered ones become interior. Returns
    the number of references changed.
    """
    changed = 0
    for cell in list(sc._refs):
        refs = sc._refs[cell]
        if all(refs.values()):
            continue
        box = cellgrid.cell_bounds(cell)
        kept = {}
        for pid, interior in refs.items():
            rel = CellRelation.INTERSECTS_BOUNDARY if interior else classify_box(box, polygons[pid])[0]
            if rel is CellRelation.DISJOINT:
                changed += 1
                continue
            kept[pid] = interior or rel is CellRelation.CONTAINED
            changed += kept[pid] != interior
        if not kept:
            sc._remove_key(cell)
        elif kept != refs:
            sc._refs[cell] = kept
    return changed


def refine_to_precision(
    sc: SuperCovering,
    polygons,
    precision: float,
    node_budget_estimator: Callable[[SuperCovering], int],
    memory_budget: int,
    max_level: int = 24,
) -> PrecisionReport:
    """Split candidate cells, largest diagonal first, until all are below ``precision``.

    Refinement stops early (``achieved=False``) when the estimated physical
    size would exceed ``memory_budget`` or a cell cannot be split further.
    An estimator exposing ``tracker(sc)`` is used incrementally; any other
    callable is re-evaluated on a trial copy for every split.
    """
    if precision <= 0:
        raise ValueError("precision must be positive")
    polys = polygons if isinstance(polygons, Mapping) else {p.id: p for p in polygons}
    # the diagonal only bounds the error if each candidate cell meets its polygon
    prune_candidates(sc, polys)
    heap = [(-cellgrid.cell_diagonal_meters(c), c) for c in sc._refs if sc.is_candidate(c)]
    heapq.heapify(heap)
    tracker = node_budget_estimator.tracker(sc) if hasattr(node_budget_estimator, "tracker") else None
    hints: dict = {}
    splits = 0
    blocked = False
    while heap:
        neg_diag, cell = heap[0]
        if -neg_diag <= precision:
            break
        if cellgrid.cell_level(cell) >= max_level:
            blocked = True
            break
        refs = sc._refs[cell]
        children = split_references(cell, refs, polys, hints)
        if tracker is not None:
            projected = tracker.bytes_after_split(cell, refs, children)
        else:
            trial = sc.copy()
            trial.replace(cell, children)
            projected = node_budget_estimator(trial)
        if projected > memory_budget:
            blocked = True
            break
        heapq.heappop(heap)
        sc.replace(cell, children)
        if tracker is not None:
            tracker.apply_split(cell, refs, children)
        splits += 1
        for ch, kid in children.items():
            if kid and not all(kid.values()):
                heapq.heappush(heap, (-cellgrid.cell_diagonal_meters(ch), ch))
    worst = max_candidate_diagonal(sc)
    return PrecisionReport(worst, len(sc), (not blocked) and worst <= precision, splits)
