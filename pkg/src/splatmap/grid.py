"""Chunk coordinate arithmetic, 64-bit id encoding, and Gaussian assignment.

The world is divided into cubic chunks of side ``s`` centered on integer
multiples of ``s``: a position p lands in chunk floor((p + s/2) / s),
element-wise, floor toward minus infinity.  Coordinates are limited to
[-2^20, 2^20 - 1] per axis and packed into one unsigned 64-bit integer with
21 bits per axis after a +2^20 offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import Gaussian
from .errors import Malformed, OutOfRange

__all__ = [
    "COORD_MIN",
    "COORD_MAX",
    "DEFAULT_CHUNK_SIZE_M",
    "ChunkCoord",
    "ChunkAabb",
    "chunk_coord",
    "encode_id",
    "encode_positions",
    "decode_id",
    "chunk_aabb",
    "assign_gaussians",
]

_OFFSET = 1 << 20
COORD_MIN = -_OFFSET
COORD_MAX = _OFFSET - 1
DEFAULT_CHUNK_SIZE_M = 10.0


@dataclass(frozen=True)
class ChunkCoord:
    cx: int
    cy: int
    cz: int

    def __iter__(self):
        yield self.cx
        yield self.cy
        yield self.cz

    def offset(self, dx: int, dy: int, dz: int) -> "ChunkCoord":
        return ChunkCoord(self.cx + dx, self.cy + dy, self.cz + dz)


@dataclass(frozen=True)
class ChunkAabb:
    min: np.ndarray
    max: np.ndarray


def _check_range(c: ChunkCoord) -> None:
    for v in c:
        if not (COORD_MIN <= v <= COORD_MAX):
            raise OutOfRange(f"chunk coordinate {tuple(c)} exceeds +-2^20 per axis")


def chunk_coord(p, s: float) -> ChunkCoord:
    """Chunk holding position p for chunk size s (centered cells)."""
    if s <= 0:
        raise ValueError("chunk size must be positive")
    x, y, z = (float(v) for v in p)
    half = s / 2.0
    c = ChunkCoord(
        math.floor((x + half) / s),
        math.floor((y + half) / s),
        math.floor((z + half) / s),
    )
    _check_range(c)
    return c


def encode_id(c: ChunkCoord) -> int:
    """Pack a chunk coordinate into its unsigned 64-bit id."""
    _check_range(c)
    # Plain ints: numpy integer components would overflow int64 near the top.
    return ((int(c.cx) + _OFFSET) << 42) + ((int(c.cy) + _OFFSET) << 21) + (int(c.cz) + _OFFSET)


def decode_id(e: int) -> ChunkCoord:
    """Inverse of encode_id."""
    # e >= 2^63 would make the extracted x field >= 2^21.
    if e < 0 or (e >> 42) >= (1 << 21):
        raise Malformed(f"encoded id {e} has an out-of-range field")
    cz = (e & 0x1FFFFF) - _OFFSET
    cy = ((e >> 21) & 0x1FFFFF) - _OFFSET
    cx = (e >> 42) - _OFFSET
    return ChunkCoord(cx, cy, cz)


def chunk_aabb(c: ChunkCoord, s: float) -> ChunkAabb:
    """World-space box of a chunk; cells are centered on multiples of s."""
    if s <= 0:
        raise ValueError("chunk size must be positive")
    center = np.array([c.cx, c.cy, c.cz], dtype=np.float64) * s
    half = s / 2.0
    return ChunkAabb(min=center - half, max=center + half)


def encode_positions(positions: np.ndarray, s: float) -> np.ndarray:
    """Vectorized encode_id(chunk_coord(p, s)) over an (N, 3) position array."""
    if s <= 0:
        raise ValueError("chunk size must be positive")
    coords = np.floor((np.asarray(positions, dtype=np.float64) + s / 2.0) / s)
    bad = (coords < COORD_MIN) | (coords > COORD_MAX)
    if bad.any():
        first = int(np.flatnonzero(bad.any(axis=1))[0])
        raise OutOfRange(f"gaussian {first}: chunk coordinate "
                         f"{tuple(int(v) for v in coords[first])} exceeds +-2^20 per axis")
    shifted = (coords + float(_OFFSET)).astype(np.uint64)
    return (shifted[:, 0] << np.uint64(42)) + (shifted[:, 1] << np.uint64(21)) + shifted[:, 2]


def assign_gaussians(gs: Iterable[Gaussian], s: float) -> dict[int, list[Gaussian]]:
    """Partition Gaussians into chunks keyed by encoded id."""
    gs = list(gs)
    if not gs:
        return {}
    ids = encode_positions(np.array([g.position for g in gs]), s)
    out: dict[int, list[Gaussian]] = {}
    for g, cid in zip(gs, ids):
        out.setdefault(int(cid), []).append(g)
    return out
