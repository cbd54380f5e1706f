"""64-bit hierarchical cell ids over a single planar quadtree face.

Layout of a cell id (most significant bit first)::

    bits 63..61   face (always 0 here, kept for layout compatibility)
    2*level bits  quadrant pairs, level 1 first; y bit is the high bit
    1 bit         level marker
    rest          zero

Cell ids are plain Python ints. The vectorised helpers take and return
``numpy.uint64`` arrays.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

MAX_LEVEL = 30
POS_BITS = 2 * MAX_LEVEL
FACE_SHIFT = 61
GRID_SIZE = 1 << MAX_LEVEL
ROOT = 1 << 60
MASK64 = (1 << 64) - 1
EARTH_RADIUS_M = 6371000.0


class DomainError(ValueError):
    """Raised for out-of-domain cell ids, levels or coordinates."""


class LatLng(NamedTuple):
    lat: float
    lng: float


def _check_level(level: int) -> None:
    if not 0 <= level <= MAX_LEVEL:
        raise DomainError(f"level {level} outside [0, {MAX_LEVEL}]")


def _spread(v: int) -> int:
    # 30-bit value -> bits at even positions
    v &= 0x3FFFFFFF
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    v = (v | (v << 1)) & 0x5555555555555555
    return v


def _compact(v: int) -> int:
    v &= 0x5555555555555555
    v = (v | (v >> 1)) & 0x3333333333333333
    v = (v | (v >> 2)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF0000FFFF
    v = (v | (v >> 16)) & 0x00000000FFFFFFFF
    return v


def _grid_coords(lat: float, lng: float) -> tuple[int, int]:
    if not (math.isfinite(lat) and math.isfinite(lng)):
        raise DomainError(f"non-finite coordinate ({lat}, {lng})")
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lng <= 180.0):
        raise DomainError(f"coordinate out of range ({lat}, {lng})")
    y = min(int(math.floor((lat + 90.0) / 180.0 * GRID_SIZE)), GRID_SIZE - 1)
    x = min(int(math.floor((lng + 180.0) / 360.0 * GRID_SIZE)), GRID_SIZE - 1)
    return y, x


def from_grid(y: int, x: int, level: int = MAX_LEVEL) -> int:
    """Cell at ``level`` containing the level-30 grid position ``(y, x)``."""
    _check_level(level)
    pos = (_spread(y) << 1) | _spread(x)
    shift = POS_BITS - 2 * level
    return ((pos >> shift) << (shift + 1)) | (1 << shift)


def cell_from_point(p: LatLng | tuple[float, float], level: int = MAX_LEVEL) -> int:
    y, x = _grid_coords(float(p[0]), float(p[1]))
    return from_grid(y, x, level)


def lsb(c: int) -> int:
    return c & -c


def is_valid(c: int) -> bool:
    if not 0 < c <= MASK64:
        return False
    body = c & ((1 << FACE_SHIFT) - 1)
    if body == 0:
        return False
    bit = (body & -body).bit_length() - 1
    return bit % 2 == 0 and bit <= 60


def cell_level(c: int) -> int:
    if not is_valid(c):
        raise DomainError(f"malformed cell id {c:#x}")
    body = c & ((1 << FACE_SHIFT) - 1)
    return (60 - ((body & -body).bit_length() - 1)) // 2


def face(c: int) -> int:
    return c >> FACE_SHIFT


def cell_parent(c: int, target_level: int) -> int:
    level = cell_level(c)
    if target_level > level or target_level < 0:
        raise DomainError(f"cannot take level-{target_level} parent of a level-{level} cell")
    new_lsb = 1 << (60 - 2 * target_level)
    return (c & (-new_lsb & MASK64)) | new_lsb


def cell_children(c: int) -> list[int]:
    level = cell_level(c)
    if level >= MAX_LEVEL:
        raise DomainError("level-30 cells have no children")
    low = lsb(c)
    first = c - low + (low >> 2)
    step = low >> 1
    return [first + k * step for k in range(4)]


def range_min(c: int) -> int:
    return c - (lsb(c) - 1)


def range_max(c: int) -> int:
    return c + (lsb(c) - 1)


def cell_contains(a: int, b: int) -> bool:
    """True when ``b`` equals ``a`` or is one of its descendants."""
    low = a & -a
    return a - (low - 1) <= b <= a + (low - 1)


def cell_grid_bounds(c: int) -> tuple[int, int, int]:
    """Return ``(y0, x0, size)`` of the cell on the level-30 integer grid."""
    level = cell_level(c)
    shift = 60 - 2 * level
    pos = ((c & ((1 << FACE_SHIFT) - 1)) >> (shift + 1)) << shift
    size = 1 << (MAX_LEVEL - level)
    return _compact(pos >> 1), _compact(pos), size


def cell_bounds(c: int) -> tuple[float, float, float, float]:
    """Return ``(lat_lo, lng_lo, lat_hi, lng_hi)`` of the cell box in degrees."""
    y0, x0, size = cell_grid_bounds(c)
    lat_lo = y0 * 180.0 / GRID_SIZE - 90.0
    lat_hi = (y0 + size) * 180.0 / GRID_SIZE - 90.0
    lng_lo = x0 * 360.0 / GRID_SIZE - 180.0
    lng_hi = (x0 + size) * 360.0 / GRID_SIZE - 180.0
    return lat_lo, lng_lo, lat_hi, lng_hi


def haversine_m(lat1: float, lng1: float, lat2: float, lng2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lng2 - lng1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def cell_diagonal_meters(c: int) -> float:
    lat_lo, lng_lo, lat_hi, lng_hi = cell_bounds(c)
    return haversine_m(lat_lo, lng_lo, lat_hi, lng_hi)


def cell_difference(ancestor: int, descendant: int) -> list[int]:
    """Cells covering ``ancestor`` minus ``descendant``.

    Three siblings per level between the two, so ``3 * (level delta)`` cells.
    """
    if ancestor == descendant or not (is_valid(ancestor) and cell_contains(ancestor, descendant)):
        raise DomainError("cell_difference needs a strict ancestor/descendant pair")
    top = cell_level(ancestor)
    bottom = cell_level(descendant)
    out = []
    for level in range(top + 1, bottom + 1):
        on_path = cell_parent(descendant, level)
        out.extend(ch for ch in cell_children(cell_parent(descendant, level - 1)) if ch != on_path)
    return out


def common_ancestor(a: int, b: int) -> int:
    """Smallest cell containing both ``a`` and ``b``."""
    level = min(cell_level(a), cell_level(b))
    while level > 0 and cell_parent(a, level) != cell_parent(b, level):
        level -= 1
    return cell_parent(a, level)


def to_token(c: int) -> str:
    return f"{c:016x}"


def from_token(s: str) -> int:
    # 16 characters means hex; anything else is decimal
    s = s.strip()
    c = int(s, 16) if len(s) == 16 or s.lower().startswith("0x") else int(s)
    if not is_valid(c):
        raise DomainError(f"malformed cell token {s!r}")
    return c


# -- vectorised helpers -----------------------------------------------------

def _spread_u64(v: np.ndarray) -> np.ndarray:
    v = v & np.uint64(0x3FFFFFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x0000FFFF0000FFFF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x00FF00FF00FF00FF)
    v = (v | (v << np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    v = (v | (v << np.uint64(2))) & np.uint64(0x3333333333333333)
    v = (v | (v << np.uint64(1))) & np.uint64(0x5555555555555555)
    return v


def cells_from_points(lats, lngs, level: int = MAX_LEVEL) -> np.ndarray:
    """Vectorised :func:`cell_from_point`; returns a ``uint64`` array."""
    _check_level(level)
    lats = np.asarray(lats, dtype=np.float64)
    lngs = np.asarray(lngs, dtype=np.float64)
    bad = ~(np.isfinite(lats) & np.isfinite(lngs))
    bad |= (lats < -90) | (lats > 90) | (lngs < -180) | (lngs > 180)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(f"invalid coordinate at index {i}: ({lats.flat[i]}, {lngs.flat[i]})")
    y = np.minimum(np.floor((lats + 90.0) / 180.0 * GRID_SIZE), GRID_SIZE - 1).astype(np.uint64)
    x = np.minimum(np.floor((lngs + 180.0) / 360.0 * GRID_SIZE), GRID_SIZE - 1).astype(np.uint64)
    pos = (_spread_u64(y) << np.uint64(1)) | _spread_u64(x)
    shift = np.uint64(POS_BITS - 2 * level)
    return ((pos >> shift) << (shift + np.uint64(1))) | (np.uint64(1) << shift)


def ancestors(c: int):
    """Yield the strict ancestors of ``c``, parent first, root last."""
    low = c & -c
    while low < ROOT:
        low <<= 2
        c = (c & (-low & MASK64)) | low
        yield c
