"""Budgeted two-tier store for chunks and keyframes with LRU write-back to disk.

The active tier is counted in Gaussians (chunks) and frames (keyframes), not
bytes.  Eviction is greedy: evictable chunks sorted by last access (oldest
first, chunk id as tie-break), shortest prefix that frees the required count.
A requested or just-touched chunk set is never self-evicted, even when it
alone exceeds the budget; the overshoot is recorded in the stats instead.

Access ticks come from a store-owned counter incremented once per public
operation, so eviction order is deterministic and testable.  All mutating
operations must be serialized to a single logical writer.

Everything the store holds is float32-canonical (see diskformat), so a chunk
or keyframe that is evicted and reloaded is bit-identical to what was held.
Durability point is flush(); there is no crash-consistency journal.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import diskformat
from .core import Gaussian, Keyframe, Pose
from .errors import (
    DuplicateKeyframe,
    InsufficientEvictable,
    IoFailure,
    NotResident,
    UnknownKeyframe,
)
from .grid import ChunkCoord, assign_gaussians, decode_id, encode_positions

__all__ = ["Chunk", "StoreConfig", "StoreStats", "LoadReport", "GaussianRef", "ChunkStore"]


@dataclass
class Chunk:
    id: int
    gaussians: list[Gaussian] = field(default_factory=list)
    last_access: int = 0
    dirty: bool = False
    version: int = 0  # globally monotonic content stamp, for caching layers

    def __len__(self) -> int:
        return len(self.gaussians)


@dataclass
class StoreConfig:
    disk_root: Path | str
    chunk_size_m: float = 10.0
    gaussian_budget: int = 50_000   # paper-scale runs use 1_500_000
    keyframe_budget: int = 16       # paper-scale runs use 400
    io_ns_per_byte: float | None = None  # None: measure wall time; else modeled

    def __post_init__(self):
        self.disk_root = Path(self.disk_root)
        if self.chunk_size_m <= 0:
            raise ValueError("chunk_size_m must be positive")
        if self.gaussian_budget < 1 or self.keyframe_budget < 1:
            raise ValueError("budgets must be >= 1")


@dataclass
class StoreStats:
    active_gaussians: int = 0
    active_chunks: int = 0
    active_keyframes: int = 0
    total_gaussians_ever: int = 0
    chunk_loads: int = 0
    chunk_evictions: int = 0
    keyframe_loads: int = 0
    keyframe_evictions: int = 0
    chunk_writes: int = 0
    keyframe_writes: int = 0
    io_nanos: int = 0
    bytes_read: int = 0
    bytes_written: int = 0
    budget_overshoot: int = 0  # current active overage caused by a protected set


class LoadReport(NamedTuple):
    loaded: int
    already_resident: int
    evicted: list[int]


class GaussianRef(NamedTuple):
    chunk_id: int
    index: int
    gaussian: Gaussian


class ChunkStore:
    """Out-of-core chunk and keyframe tiers over one disk directory."""

    def __init__(self, config: StoreConfig):
        self.config = config
        self.stats = StoreStats()
        self._chunks: dict[int, Chunk] = {}
        self._disk_chunks: dict[int, int] = {}  # id -> gaussian count in the file
        self._doomed_chunks: set[int] = set()   # files to unlink at flush
        self._keyframes: dict[int, Keyframe] = {}  # insertion order = LRU order
        self._dirty_keyframes: set[int] = set()
        self._disk_keyframes: set[int] = set()
        self._tick_counter = 0
        self._generation = 0
        self._mutation_counter = 0
        self._coord_min: ChunkCoord | None = None
        self._coord_max: ChunkCoord | None = None
        self._chunk_dir.mkdir(parents=True, exist_ok=True)
        self._keyframe_dir.mkdir(parents=True, exist_ok=True)
        self._scan_disk()

    # ------------------------------------------------------------------ paths

    @property
    def _chunk_dir(self) -> Path:
        return self.config.disk_root / "chunks"

    @property
    def _keyframe_dir(self) -> Path:
        return self.config.disk_root / "keyframes"

    def _chunk_path(self, cid: int) -> Path:
        return self._chunk_dir / f"{cid:016x}.dcg"

    def _keyframe_path(self, kid: int) -> Path:
        return self._keyframe_dir / f"{kid}.dkf"

    def _scan_disk(self) -> None:
        for path in sorted(self._chunk_dir.glob("*.dcg")):
            data = self._read_bytes(path, length=32)
            cid, count = diskformat.read_chunk_header(data)
            self._disk_chunks[cid] = count
            self._grow_extent(decode_id(cid))
            self.stats.total_gaussians_ever += count
        for path in sorted(self._keyframe_dir.glob("*.dkf")):
            try:
                self._disk_keyframes.add(int(path.stem))
            except ValueError:
                continue
        self._sync_active()

    # ------------------------------------------------------------------- io

    def _read_bytes(self, path: Path, length: int | None = None) -> bytes:
        rate = self.config.io_ns_per_byte
        try:
            start = time.perf_counter_ns() if rate is None else 0
            with open(path, "rb") as f:
                data = f.read(length) if length is not None else f.read()
            elapsed = (time.perf_counter_ns() - start) if rate is None else int(len(data) * rate)
        except OSError as exc:
            raise IoFailure(f"read failed for {path}: {exc}") from exc
        self.stats.io_nanos += elapsed
        self.stats.bytes_read += len(data)
        return data

    def _write_bytes(self, path: Path, data: bytes) -> None:
        rate = self.config.io_ns_per_byte
        try:
            start = time.perf_counter_ns() if rate is None else 0
            path.write_bytes(data)
            elapsed = (time.perf_counter_ns() - start) if rate is None else int(len(data) * rate)
        except OSError as exc:
            raise IoFailure(f"write failed for {path}: {exc}") from exc
        self.stats.io_nanos += elapsed
        self.stats.bytes_written += len(data)

    # ---------------------------------------------------------------- helpers

    def _tick(self) -> int:
        self._tick_counter += 1
        return self._tick_counter

    def _stamp(self, chunk: Chunk) -> None:
        self._mutation_counter += 1
        chunk.version = self._mutation_counter

    def _sync_active(self) -> None:
        self.stats.active_chunks = len(self._chunks)
        self.stats.active_gaussians = sum(len(c) for c in self._chunks.values())
        self.stats.active_keyframes = len(self._keyframes)
        self.stats.budget_overshoot = max(
            0, self.stats.active_gaussians - self.config.gaussian_budget
        )

    def _grow_extent(self, c: ChunkCoord) -> None:
        if self._coord_min is None:
            self._coord_min = c
            self._coord_max = c
            return
        lo, hi = self._coord_min, self._coord_max
        self._coord_min = ChunkCoord(min(lo.cx, c.cx), min(lo.cy, c.cy), min(lo.cz, c.cz))
        self._coord_max = ChunkCoord(max(hi.cx, c.cx), max(hi.cy, c.cy), max(hi.cz, c.cz))

    @property
    def generation(self) -> int:
        """Bumped whenever the set of existing chunk ids changes."""
        return self._generation

    @property
    def chunk_size(self) -> float:
        return self.config.chunk_size_m

    def coord_extent(self) -> tuple[ChunkCoord, ChunkCoord] | None:
        """Bounding coordinates of every chunk ever created, or None if empty."""
        if self._coord_min is None:
            return None
        return self._coord_min, self._coord_max

    def has_chunk(self, cid: int) -> bool:
        return cid in self._chunks or cid in self._disk_chunks

    def known_chunk_ids(self) -> set[int]:
        return set(self._chunks) | set(self._disk_chunks)

    def resident_chunk_ids(self) -> set[int]:
        return set(self._chunks)

    def chunk(self, cid: int) -> Chunk:
        try:
            return self._chunks[cid]
        except KeyError:
            raise NotResident(f"chunk {cid:#x} is not in the active tier") from None

    def chunk_gaussian_count(self, cid: int) -> int:
        """Resident size, or the on-disk header count without a full read."""
        if cid in self._chunks:
            return len(self._chunks[cid])
        if cid in self._disk_chunks:
            return self._disk_chunks[cid]
        raise KeyError(f"unknown chunk {cid:#x}")

    def _make_resident(self, cid: int, tick: int) -> tuple[Chunk, bool]:
        """Return (chunk, was_loaded_or_created); loads from disk or creates empty."""
        chunk = self._chunks.get(cid)
        if chunk is not None:
            chunk.last_access = tick
            return chunk, False
        if cid in self._disk_chunks:
            data = self._read_bytes(self._chunk_path(cid))
            file_id, gaussians = diskformat.unpack_chunk(data)
            if file_id != cid:
                raise IoFailure(f"chunk file {self._chunk_path(cid)} holds id {file_id:#x}")
            chunk = Chunk(id=cid, gaussians=gaussians, last_access=tick, dirty=False)
            self.stats.chunk_loads += 1
        else:
            chunk = Chunk(id=cid, last_access=tick, dirty=False)
            self._grow_extent(decode_id(cid))
            self._generation += 1
        self._stamp(chunk)
        self._chunks[cid] = chunk
        return chunk, True

    def _evict_chunk(self, chunk: Chunk) -> None:
        if chunk.dirty:
            self._write_bytes(self._chunk_path(chunk.id), diskformat.pack_chunk(chunk.id, chunk.gaussians))
            self.stats.chunk_writes += 1
            self._disk_chunks[chunk.id] = len(chunk)
            self._doomed_chunks.discard(chunk.id)
        elif chunk.id not in self._disk_chunks:
            # Clean with no disk copy can only be an empty created chunk: forget it.
            self._generation += 1
        del self._chunks[chunk.id]
        self.stats.chunk_evictions += 1

    def _eviction_order(self, protected: set[int]) -> list[Chunk]:
        return sorted(
            (c for cid, c in self._chunks.items() if cid not in protected),
            key=lambda c: (c.last_access, c.id),
        )

    def _enforce_budget(self, protected: set[int]) -> list[int]:
        """Evict oldest-first until within budget; tolerate protected overshoot."""
        active = sum(len(c) for c in self._chunks.values())
        required = active - self.config.gaussian_budget
        evicted: list[int] = []
        if required <= 0:
            self._sync_active()
            return evicted
        freed = 0
        for chunk in self._eviction_order(protected):
            if freed >= required:
                break
            freed += len(chunk)
            self._evict_chunk(chunk)
            evicted.append(chunk.id)
        self._sync_active()
        return evicted

    # ------------------------------------------------------------ chunk tier

    def insert_gaussians(self, gs: list[Gaussian]) -> int:
        """Append Gaussians to their chunks (created or loaded as needed).

        Inputs are quantized to storage precision on the way in.  Budget
        enforcement runs afterward and never evicts the chunks touched by
        this call.
        """
        tick = self._tick()
        if not gs:
            return 0
        canonical = diskformat.storage_canonical_batch(gs)
        groups = assign_gaussians(canonical, self.config.chunk_size_m)
        for cid in sorted(groups):
            chunk, _ = self._make_resident(cid, tick)
            chunk.gaussians.extend(groups[cid])
            chunk.dirty = True
            self._stamp(chunk)
            self._doomed_chunks.discard(cid)
        self.stats.total_gaussians_ever += len(canonical)
        self._enforce_budget(protected=set(groups))
        return len(canonical)

    def ensure_resident(self, ids: Iterable[int]) -> LoadReport:
        """Make every id resident and freshly ticked; evict others to fit."""
        tick = self._tick()
        idset = sorted(set(ids))
        loaded = 0
        already = 0
        for cid in idset:
            _, brought_in = self._make_resident(cid, tick)
            if brought_in:
                loaded += 1
            else:
                already += 1
        evicted = self._enforce_budget(protected=set(idset))
        return LoadReport(loaded=loaded, already_resident=already, evicted=evicted)

    def evict_lru(self, required_free: int, protected: set[int] | None = None) -> list[int]:
        """Evict the shortest oldest-first prefix freeing >= required_free Gaussians."""
        self._tick()
        if required_free < 0:
            raise ValueError("required_free must be >= 0")
        if required_free == 0:
            return []
        protected = set(protected or ())
        order = self._eviction_order(protected)
        if sum(len(c) for c in order) < required_free:
            raise InsufficientEvictable(
                f"only {sum(len(c) for c in order)} gaussians evictable, need {required_free}"
            )
        evicted: list[int] = []
        freed = 0
        for chunk in order:
            if freed >= required_free:
                break
            freed += len(chunk)
            self._evict_chunk(chunk)
            evicted.append(chunk.id)
        self._sync_active()
        return evicted

    def gather_visible(self, ids: Iterable[int]) -> list[GaussianRef]:
        """Flat view over the Gaussians of exactly these resident chunks.

        Entries address (chunk id, index) stably, so writes through the
        returned Gaussian objects land in the owning chunk.  Gathered chunks
        are marked dirty because the store cannot observe in-place mutation
        through the views.  Refs are invalidated by any later eviction.
        """
        tick = self._tick()
        refs: list[GaussianRef] = []
        for cid in sorted(set(ids)):
            chunk = self._chunks.get(cid)
            if chunk is None:
                raise NotResident(f"chunk {cid:#x} must be resident before gathering")
            chunk.last_access = tick
            chunk.dirty = True
            self._stamp(chunk)
            refs.extend(GaussianRef(cid, i, g) for i, g in enumerate(chunk.gaussians))
        return refs

    # ----------------------------------------------- redistribution surface

    def set_chunk_gaussians(self, cid: int, gaussians: list[Gaussian]) -> None:
        """Replace a resident chunk's content (redistribution bookkeeping)."""
        chunk = self.chunk(cid)
        chunk.gaussians = gaussians
        chunk.dirty = True
        self._stamp(chunk)
        self._sync_active()

    def mark_chunk_mutated(self, cid: int) -> None:
        """Record an in-place mutation made through views of a resident chunk."""
        chunk = self.chunk(cid)
        chunk.dirty = True
        self._stamp(chunk)

    def adopt_gaussians(self, cid: int, gaussians: list[Gaussian], protected: set[int] | None = None) -> bool:
        """Move already-stored Gaussians into a chunk without counting them as new.

        Returns True if the target chunk did not exist before.
        """
        tick = self._tick()
        known_before = self.has_chunk(cid)
        chunk, _ = self._make_resident(cid, tick)
        chunk.gaussians.extend(gaussians)
        chunk.dirty = True
        self._stamp(chunk)
        self._doomed_chunks.discard(cid)
        self._enforce_budget(protected=(protected or set()) | {cid})
        return not known_before

    def remove_chunk_if_empty(self, cid: int) -> bool:
        """Forget an emptied chunk; its disk file is unlinked at flush."""
        chunk = self._chunks.get(cid)
        if chunk is None or len(chunk) > 0:
            return False
        del self._chunks[cid]
        if cid in self._disk_chunks:
            del self._disk_chunks[cid]
            self._doomed_chunks.add(cid)
        self._generation += 1
        self._sync_active()
        return True

    # --------------------------------------------------------- keyframe tier

    def keyframe_add(self, kf: Keyframe) -> None:
        tick = self._tick()
        if kf.id in self._keyframes or kf.id in self._disk_keyframes:
            raise DuplicateKeyframe(f"keyframe {kf.id} already present")
        h, w = kf.intrinsics.height, kf.intrinsics.width
        if kf.rgb.shape != (h, w, 3) or kf.depth.shape != (h, w):
            raise ValueError("keyframe image dimensions do not match intrinsics")
        kf.last_access = tick
        self._keyframes[kf.id] = kf
        self._dirty_keyframes.add(kf.id)
        self._enforce_keyframe_budget(exclude={kf.id})
        self._sync_active()

    def keyframe_get(self, kid: int) -> Keyframe:
        tick = self._tick()
        kf = self._keyframes.get(kid)
        if kf is not None:
            kf.last_access = tick
            self._keyframes.pop(kid)
            self._keyframes[kid] = kf  # re-append: most recently used
            return kf
        if kid not in self._disk_keyframes:
            raise UnknownKeyframe(f"keyframe {kid} was never added")
        data = self._read_bytes(self._keyframe_path(kid))
        kf = diskformat.unpack_keyframe(data)
        if kf.id != kid:
            raise IoFailure(f"keyframe file {self._keyframe_path(kid)} holds id {kf.id}")
        kf.last_access = tick
        self.stats.keyframe_loads += 1
        self._keyframes[kid] = kf
        self._enforce_keyframe_budget(exclude={kid})
        self._sync_active()
        return kf

    def _enforce_keyframe_budget(self, exclude: set[int]) -> None:
        while len(self._keyframes) > self.config.keyframe_budget:
            victim_id = next((k for k in self._keyframes if k not in exclude), None)
            if victim_id is None:
                break
            victim = self._keyframes.pop(victim_id)
            if victim_id in self._dirty_keyframes:
                self._write_bytes(self._keyframe_path(victim_id), diskformat.pack_keyframe(victim))
                self.stats.keyframe_writes += 1
                self._dirty_keyframes.discard(victim_id)
                self._disk_keyframes.add(victim_id)
            self.stats.keyframe_evictions += 1
        self._sync_active()

    def mark_keyframe_dirty(self, kid: int) -> None:
        if kid not in self._keyframes:
            raise NotResident(f"keyframe {kid} is not resident")
        self._dirty_keyframes.add(kid)

    def update_keyframe_pose(self, kid: int, pose: Pose) -> None:
        kf = self.keyframe_get(kid)
        kf.pose = pose
        self._dirty_keyframes.add(kid)

    def known_keyframe_ids(self) -> set[int]:
        return set(self._keyframes) | self._disk_keyframes

    def resident_keyframe_ids(self) -> set[int]:
        return set(self._keyframes)

    # ---------------------------------------------------------------- flush

    def flush(self) -> None:
        """Write every dirty resident chunk and keyframe; unlink doomed files."""
        self._tick()
        for cid in sorted(self._chunks):
            chunk = self._chunks[cid]
            if not chunk.dirty:
                continue
            self._write_bytes(self._chunk_path(cid), diskformat.pack_chunk(cid, chunk.gaussians))
            self.stats.chunk_writes += 1
            self._disk_chunks[cid] = len(chunk)
            chunk.dirty = False
        for kid in sorted(self._dirty_keyframes & set(self._keyframes)):
            self._write_bytes(self._keyframe_path(kid), diskformat.pack_keyframe(self._keyframes[kid]))
            self.stats.keyframe_writes += 1
            self._disk_keyframes.add(kid)
        self._dirty_keyframes.clear()
        for cid in sorted(self._doomed_chunks):
            try:
                self._chunk_path(cid).unlink(missing_ok=True)
            except OSError as exc:
                raise IoFailure(f"could not remove {self._chunk_path(cid)}: {exc}") from exc
        self._doomed_chunks.clear()
        self._sync_active()

    # ---------------------------------------------------------------- audits

    def iter_map(self):
        """Yield (chunk id, gaussians) across the whole map, resident or not.

        Disk-only chunks are parsed without being brought into the tier, so
        audits do not disturb residency or ticks.
        """
        for cid in sorted(self.known_chunk_ids()):
            if cid in self._chunks:
                yield cid, self._chunks[cid].gaussians
            else:
                _, gaussians = diskformat.unpack_chunk(self._read_bytes(self._chunk_path(cid)))
                yield cid, gaussians

    def total_mapped_gaussians(self) -> int:
        return sum(len(gs) for _, gs in self.iter_map())

    def audit_placement(self) -> list[tuple[int, int]]:
        """(chunk id, index) of every Gaussian whose position maps elsewhere."""
        bad = []
        s = self.config.chunk_size_m
        for cid, gaussians in self.iter_map():
            if not gaussians:
                continue
            ids = encode_positions(np.array([g.position for g in gaussians]), s)
            for i in np.flatnonzero(ids != np.uint64(cid)):
                bad.append((cid, int(i)))
        return bad
