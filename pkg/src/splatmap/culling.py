"""Frustum-plane extraction and hierarchical visible-chunk determination.

Visibility is decided per chunk: a chunk is visible when its AABB is not
fully outside any frustum plane and the nearest point of the AABB lies within
``max_distance_m`` of the camera center.  The hierarchical walk halves the
coordinate extent per axis (octree-style) and prunes regions that are fully
outside or too far; at single-chunk leaves it applies exactly the same test a
brute-force scan would, so the two agree as sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .core import CameraIntrinsics, Pose, quat_to_matrix
from .grid import ChunkAabb, ChunkCoord, chunk_aabb, encode_id

__all__ = [
    "FrustumTest",
    "Frustum",
    "CullConfig",
    "ChunkExtent",
    "extract_frustum",
    "aabb_in_frustum",
    "visible_chunks",
    "VisibilityCache",
]


class FrustumTest(Enum):
    OUTSIDE = 0
    INTERSECTS = 1
    INSIDE = 2


@dataclass(frozen=True)
class Frustum:
    """Six inward world-frame planes as rows [nx, ny, nz, d]: inside is n.x + d >= 0."""

    planes: np.ndarray

    def contains_point(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(self.planes[:, :3] @ p + self.planes[:, 3] >= 0.0))


@dataclass(frozen=True)
class CullConfig:
    max_distance_m: float = 200.0
    max_subdivision_depth: int = 8
    cache_capacity: int = 64
    pose_quantum_m: float = 0.01
    pose_quantum_rad: float = 0.001

    def __post_init__(self):
        if min(self.max_distance_m, self.max_subdivision_depth, self.cache_capacity,
               self.pose_quantum_m, self.pose_quantum_rad) <= 0:
            raise ValueError("all culling parameters must be positive")


@dataclass(frozen=True)
class ChunkExtent:
    """Coordinate box bounding all chunks ever created."""

    min_coord: ChunkCoord
    max_coord: ChunkCoord

    def __post_init__(self):
        if (self.min_coord.cx > self.max_coord.cx
                or self.min_coord.cy > self.max_coord.cy
                or self.min_coord.cz > self.max_coord.cz):
            raise ValueError("extent min must be <= max component-wise")


def extract_frustum(pose: Pose, intr: CameraIntrinsics) -> Frustum:
    """World-frame frustum of a pinhole camera looking along +z in camera frame."""
    fx, fy, cx, cy = intr.fx, intr.fy, intr.cx, intr.cy
    w, h = float(intr.width), float(intr.height)
    # Camera-frame inward planes (n, d): near/far bound z, the four side
    # planes bound the projected pixel coordinates to [0, w] x [0, h].
    cam_planes = [
        (np.array([0.0, 0.0, 1.0]), -intr.near),
        (np.array([0.0, 0.0, -1.0]), intr.far),
        (np.array([fx, 0.0, cx]), 0.0),
        (np.array([-fx, 0.0, w - cx]), 0.0),
        (np.array([0.0, fy, cy]), 0.0),
        (np.array([0.0, -fy, h - cy]), 0.0),
    ]
    r = quat_to_matrix(pose.rotation)
    t = pose.translation
    rows = []
    for n_cam, d in cam_planes:
        n_cam = n_cam / np.linalg.norm(n_cam)
        n_world = r @ n_cam
        rows.append([*n_world, d - float(n_world @ t)])
    return Frustum(planes=np.array(rows))


def aabb_in_frustum(box: ChunkAabb, f: Frustum) -> FrustumTest:
    """Conservative box classification via the p-vertex / n-vertex test."""
    fully_inside = True
    for nx, ny, nz, d in f.planes:
        px = box.max[0] if nx >= 0 else box.min[0]
        py = box.max[1] if ny >= 0 else box.min[1]
        pz = box.max[2] if nz >= 0 else box.min[2]
        if nx * px + ny * py + nz * pz + d < 0.0:
            return FrustumTest.OUTSIDE
        qx = box.min[0] if nx >= 0 else box.max[0]
        qy = box.min[1] if ny >= 0 else box.max[1]
        qz = box.min[2] if nz >= 0 else box.max[2]
        if nx * qx + ny * qy + nz * qz + d < 0.0:
            fully_inside = False
    return FrustumTest.INSIDE if fully_inside else FrustumTest.INTERSECTS


def _nearest_distance(box_min: np.ndarray, box_max: np.ndarray, p: np.ndarray) -> float:
    nearest = np.clip(p, box_min, box_max)
    return float(np.linalg.norm(p - nearest))


def _chunk_passes(coord: ChunkCoord, frustum: Frustum, cam: np.ndarray,
                  max_distance: float, s: float) -> bool:
    box = chunk_aabb(coord, s)
    if _nearest_distance(box.min, box.max, cam) > max_distance:
        return False
    return aabb_in_frustum(box, frustum) is not FrustumTest.OUTSIDE


def visible_chunks(
    pose: Pose,
    intr: CameraIntrinsics,
    extent: ChunkExtent,
    existing: Callable[[int], bool],
    cfg: CullConfig,
    s: float,
) -> set[int]:
    """Ids of existing chunks visible from the pose, equal to a brute-force scan."""
    frustum = extract_frustum(pose, intr)
    cam = pose.translation
    result: set[int] = set()
    half = s / 2.0

    def leaf(coord: ChunkCoord) -> None:
        cid = encode_id(coord)
        if existing(cid) and _chunk_passes(coord, frustum, cam, cfg.max_distance_m, s):
            result.add(cid)

    def recurse(lo: tuple[int, int, int], hi: tuple[int, int, int], depth: int) -> None:
        if lo == hi:
            leaf(ChunkCoord(*lo))
            return
        box_min = np.array(lo, dtype=np.float64) * s - half
        box_max = np.array(hi, dtype=np.float64) * s + half
        if _nearest_distance(box_min, box_max, cam) > cfg.max_distance_m:
            return
        if aabb_in_frustum(ChunkAabb(box_min, box_max), frustum) is FrustumTest.OUTSIDE:
            return
        if depth >= cfg.max_subdivision_depth:
            for x in range(lo[0], hi[0] + 1):
                for y in range(lo[1], hi[1] + 1):
                    for z in range(lo[2], hi[2] + 1):
                        leaf(ChunkCoord(x, y, z))
            return
        mids = [(l + h) // 2 for l, h in zip(lo, hi)]
        spans = []
        for axis in range(3):
            if lo[axis] == hi[axis]:
                spans.append([(lo[axis], hi[axis])])
            else:
                spans.append([(lo[axis], mids[axis]), (mids[axis] + 1, hi[axis])])
        for sx in spans[0]:
            for sy in spans[1]:
                for sz in spans[2]:
                    recurse((sx[0], sy[0], sz[0]), (sx[1], sy[1], sz[1]), depth + 1)

    recurse(tuple(extent.min_coord), tuple(extent.max_coord), 0)
    return result


def _rotation_angle(qa: np.ndarray, qb: np.ndarray) -> float:
    dot = abs(float(np.dot(qa, qb)))
    return 2.0 * math.acos(min(1.0, dot))


@dataclass
class _CacheEntry:
    translation: np.ndarray
    rotation: np.ndarray
    intr: CameraIntrinsics
    chunk_size: float
    generation: int
    result: frozenset[int]


@dataclass
class VisibilityCache:
    """Pose-aware LRU cache over visible_chunks results.

    A query hits when a stored entry's pose differs by less than the
    configured quanta in translation and rotation and the chunk-set
    generation counter is unchanged.  Single-writer, owned by the same
    agent that mutates the store.
    """

    cfg: CullConfig = field(default_factory=CullConfig)
    _entries: list[_CacheEntry] = field(default_factory=list)

    def query(
        self,
        pose: Pose,
        intr: CameraIntrinsics,
        extent: ChunkExtent,
        existing: Callable[[int], bool],
        generation: int,
        s: float,
    ) -> tuple[set[int], bool]:
        for i in range(len(self._entries) - 1, -1, -1):
            e = self._entries[i]
            if (
                e.generation == generation
                and e.chunk_size == s
                and e.intr == intr
                and float(np.linalg.norm(e.translation - pose.translation)) < self.cfg.pose_quantum_m
                and _rotation_angle(e.rotation, pose.rotation) < self.cfg.pose_quantum_rad
            ):
                self._entries.append(self._entries.pop(i))
                return set(e.result), True
        result = visible_chunks(pose, intr, extent, existing, self.cfg, s)
        self._entries.append(
            _CacheEntry(
                translation=pose.translation.copy(),
                rotation=pose.rotation.copy(),
                intr=intr,
                chunk_size=s,
                generation=generation,
                result=frozenset(result),
            )
        )
        if len(self._entries) > self.cfg.cache_capacity:
            del self._entries[0 : len(self._entries) - self.cfg.cache_capacity]
        return set(result), False
