"""Loop-closure map correction across chunk boundaries.

A correction set carries one rigid transform per affected keyframe.  Chunks
visible to an affected keyframe (at its pre-correction pose, where its
Gaussians were placed) are transformed exactly once; when several keyframes
see the same chunk, the first keyframe in entry order wins and later ones
count the chunk's Gaussians as skipped duplicates.  Afterward Gaussians that
crossed cell boundaries are redistributed, and junction regions have their
opacity and optimizer state reset for fresh refinement.

Batch mode loads every affected chunk up front when the estimate fits the
budget; sequential mode pages chunks per keyframe.  Both produce identical
final maps: the mode is a memory strategy, not a semantic choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import Pose, RigidTransform, quat_multiply, quat_normalize, transform_gaussian
from .culling import ChunkExtent, CullConfig, visible_chunks
from .diskformat import storage_canonical_batch
from .errors import Malformed
from .grid import encode_positions
from .store import ChunkStore

__all__ = [
    "CorrectionMode",
    "CorrectionSet",
    "CorrectionPlan",
    "CorrectionReport",
    "MoveReport",
    "parse_correction_file",
    "plan_correction",
    "apply_correction",
    "redistribute",
    "refine_reset",
    "run_correction",
]


class CorrectionMode(Enum):
    BATCH = "batch"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class CorrectionSet:
    entries: tuple[tuple[int, RigidTransform], ...]
    junction_ids: frozenset[int] = frozenset()

    def __post_init__(self):
        ids = [kf_id for kf_id, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("correction set has duplicate keyframe ids")
        unknown_junctions = set(self.junction_ids) - set(ids)
        if unknown_junctions:
            raise ValueError(f"junction ids {unknown_junctions} not in entries")


@dataclass(frozen=True)
class CorrectionPlan:
    mode: CorrectionMode
    unique_chunks: frozenset[int]
    estimated_gaussians: int


@dataclass(frozen=True)
class CorrectionReport:
    transformed: int
    skipped_duplicates: int
    touched_chunks: frozenset[int]


@dataclass(frozen=True)
class MoveReport:
    moved: int
    created_chunks: frozenset[int]
    emptied_chunks: frozenset[int]


@dataclass(frozen=True)
class CorrectionOutcome:
    plan: CorrectionPlan
    report: CorrectionReport
    moves: MoveReport
    reset_gaussians: int


def parse_correction_file(path: Path | str) -> CorrectionSet:
    """Read `kf_id tx ty tz qw qx qy qz [junction]` lines."""
    entries: list[tuple[int, RigidTransform]] = []
    junctions: set[int] = set()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (8, 9):
            raise Malformed(f"{path}:{lineno}: expected 8 or 9 fields, got {len(parts)}")
        try:
            kf_id = int(parts[0])
            tx, ty, tz, qw, qx, qy, qz = (float(v) for v in parts[1:8])
        except ValueError as exc:
            raise Malformed(f"{path}:{lineno}: {exc}") from exc
        if len(parts) == 9:
            if parts[8] != "junction":
                raise Malformed(f"{path}:{lineno}: trailing token must be 'junction'")
            junctions.add(kf_id)
        entries.append(
            (
                kf_id,
                RigidTransform(
                    rotation=quat_normalize(np.array([qw, qx, qy, qz])),
                    translation=np.array([tx, ty, tz]),
                ),
            )
        )
    return CorrectionSet(entries=tuple(entries), junction_ids=frozenset(junctions))


def _keyframe_visible(store: ChunkStore, kf_id: int, cull_cfg: CullConfig) -> set[int]:
    kf = store.keyframe_get(kf_id)  # raises UnknownKeyframe for bad ids
    ext = store.coord_extent()
    if ext is None:
        return set()
    return visible_chunks(
        kf.pose, kf.intrinsics, ChunkExtent(*ext), store.has_chunk, cull_cfg, store.chunk_size
    )


def plan_correction(cs: CorrectionSet, store: ChunkStore, cull_cfg: CullConfig) -> CorrectionPlan:
    """Collect unique affected chunks and pick batch vs sequential loading."""
    unique: set[int] = set()
    for kf_id, _ in cs.entries:
        unique |= _keyframe_visible(store, kf_id, cull_cfg)
    estimated = sum(store.chunk_gaussian_count(cid) for cid in unique)
    mode = CorrectionMode.BATCH if estimated <= store.config.gaussian_budget else CorrectionMode.SEQUENTIAL
    return CorrectionPlan(mode=mode, unique_chunks=frozenset(unique), estimated_gaussians=estimated)


def _transform_chunk(store: ChunkStore, cid: int, t: RigidTransform) -> int:
    chunk = store.chunk(cid)
    moved = storage_canonical_batch([transform_gaussian(g, t) for g in chunk.gaussians])
    store.set_chunk_gaussians(cid, moved)
    return len(moved)


def apply_correction(
    cs: CorrectionSet, plan: CorrectionPlan, store: ChunkStore, cull_cfg: CullConfig
) -> CorrectionReport:
    """Transform affected Gaussians once each; update keyframe poses last.

    Visibility is evaluated at pre-correction poses, which is what makes a
    co-transformed scene render identically afterward.
    """
    processed: set[int] = set()
    transformed = 0
    skipped = 0
    if plan.mode is CorrectionMode.BATCH:
        store.ensure_resident(sorted(plan.unique_chunks))
    for kf_id, t in cs.entries:
        vis = _keyframe_visible(store, kf_id, cull_cfg)
        pending = sorted(vis - processed)
        if plan.mode is CorrectionMode.SEQUENTIAL:
            store.ensure_resident(pending)
        for cid in sorted(vis):
            if cid in processed:
                skipped += store.chunk_gaussian_count(cid)
                continue
            transformed += _transform_chunk(store, cid, t)
            processed.add(cid)
    for kf_id, t in cs.entries:
        kf = store.keyframe_get(kf_id)
        corrected = Pose(
            rotation=quat_normalize(quat_multiply(t.rotation, kf.pose.rotation)),
            translation=t.apply_point(kf.pose.translation),
        )
        store.update_keyframe_pose(kf_id, corrected)
    return CorrectionReport(
        transformed=transformed, skipped_duplicates=skipped, touched_chunks=frozenset(processed)
    )


def redistribute(touched: set[int], store: ChunkStore) -> MoveReport:
    """Re-home Gaussians whose position left their chunk; drop emptied chunks.

    Chunks are paged in one at a time, so the operation stays within budget
    regardless of how large the touched set is.
    """
    s = store.chunk_size
    moved = 0
    created: set[int] = set()
    emptied: set[int] = set()
    for cid in sorted(touched):
        if not store.has_chunk(cid):
            continue
        store.ensure_resident([cid])
        chunk = store.chunk(cid)
        if not chunk.gaussians:
            continue
        targets = encode_positions(np.array([g.position for g in chunk.gaussians]), s)
        if not np.any(targets != np.uint64(cid)):
            continue
        stay: list = []
        outgoing: dict[int, list] = {}
        for g, target in zip(chunk.gaussians, targets):
            if int(target) == cid:
                stay.append(g)
            else:
                outgoing.setdefault(int(target), []).append(g)
        store.set_chunk_gaussians(cid, stay)
        for target in sorted(outgoing):
            was_new = store.adopt_gaussians(target, outgoing[target], protected={cid})
            if was_new:
                created.add(target)
            moved += len(outgoing[target])
        if store.remove_chunk_if_empty(cid):
            emptied.add(cid)
    return MoveReport(moved=moved, created_chunks=frozenset(created), emptied_chunks=frozenset(emptied))


def refine_reset(
    junction_ids, store: ChunkStore, cull_cfg: CullConfig, init_opacity: float = 0.1
) -> int:
    """Reset opacity and optimizer state of Gaussians visible to junctions."""
    opacity = float(np.float32(init_opacity))
    seen: set[int] = set()
    count = 0
    for kf_id in sorted(junction_ids):
        vis = _keyframe_visible(store, kf_id, cull_cfg) - seen
        store.ensure_resident(sorted(vis))
        for cid in sorted(vis):
            chunk = store.chunk(cid)
            for g in chunk.gaussians:
                g.opacity = opacity
                g.opt_state = b""
            store.mark_chunk_mutated(cid)
            count += len(chunk)
        seen |= vis
    return count


def run_correction(
    cs: CorrectionSet,
    store: ChunkStore,
    cull_cfg: CullConfig,
    init_opacity: float = 0.1,
    force_mode: CorrectionMode | None = None,
) -> CorrectionOutcome:
    """Plan, transform, redistribute, and reset junctions in one pass."""
    plan = plan_correction(cs, store, cull_cfg)
    if force_mode is not None:
        if force_mode is CorrectionMode.BATCH and plan.estimated_gaussians > store.config.gaussian_budget:
            raise ValueError("cannot force batch mode: estimate exceeds the gaussian budget")
        plan = CorrectionPlan(
            mode=force_mode,
            unique_chunks=plan.unique_chunks,
            estimated_gaussians=plan.estimated_gaussians,
        )
    report = apply_correction(cs, plan, store, cull_cfg)
    moves = redistribute(set(report.touched_chunks), store)
    resets = refine_reset(cs.junction_ids, store, cull_cfg, init_opacity)
    return CorrectionOutcome(plan=plan, report=report, moves=moves, reset_gaussians=resets)
