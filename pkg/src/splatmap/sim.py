"""Trajectory-replay harness: ingest, cull, load/evict, select, sample, optimize.

Per keyframe event the harness adds the keyframe, samples new Gaussians where
the current render lacks detail, and runs a fixed number of optimization
steps: pick a keyframe from the spatial candidate set, cull its visible
chunks, make them resident, render, score the losses, and nudge the visible
splats toward the view.  Loop-closure corrections are applied after the last
frame, followed by a refinement phase with ingestion paused.

Metrics are one CSV row per optimization step.  The io_ns and step_ns columns
come from a deterministic cost model (1 ns per byte moved plus fixed per-item
compute costs), not wall time: identical configs and seeds must produce
byte-identical metrics files.  The loads/evictions columns count chunk tier
events; keyframe traffic shows up in io_ns only.
"""

from __future__ import annotations

import json
import math
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import SH_C0, CameraIntrinsics, Gaussian, Keyframe, Pose, quat_normalize, quat_to_matrix
from .culling import ChunkExtent, CullConfig, VisibilityCache
from .errors import EmptyCandidates, Malformed
from .loopclose import CorrectionMode, parse_correction_file, redistribute, run_correction
from .renderloss import LossWeights, SceneArrays, render_arrays, scene_arrays, total_loss
from .sample import SampleConfig, lift_to_gaussians, log_norm, sample_pixels, sampling_probability
from .select import KeyframeIndex, SelectConfig, candidate_set, overlap, record_loss, select_keyframe
from .store import ChunkStore, StoreConfig

__all__ = [
    "METRICS_HEADER",
    "FrameMetrics",
    "SyntheticScene",
    "ReplayConfig",
    "ReplaySummary",
    "run_replay",
    "generate_synthetic",
    "report",
]

METRICS_HEADER = (
    "frame,step,active_gaussians,active_chunks,active_keyframes,"
    "loads,evictions,io_ns,step_ns,selected_kf,overlap,loss"
)

# Deterministic step-cost model (ns): disk modeled at 1 byte/ns by the store.
_NS_PER_RENDERED_GAUSSIAN = 150
_NS_PER_PIXEL = 40
_NS_PER_INSERTED_GAUSSIAN = 300
_NS_STEP_BASE = 20_000

# Desk-scale optimization: per step, at most this many visible splats get a
# projected-residual color/opacity nudge.
_NUDGE_CAP = 512
_NUDGE_COLOR_RATE = 0.3
_NUDGE_OPACITY_STEP = 0.02


@dataclass
class FrameMetrics:
    frame: int
    step: int
    active_gaussians: int
    active_chunks: int
    active_keyframes: int
    loads: int
    evictions: int
    io_ns: int
    step_ns: int
    selected_kf: int
    overlap: float | None
    loss: float

    def csv_row(self) -> str:
        ov = "" if self.overlap is None else f"{self.overlap:.9g}"
        return (
            f"{self.frame},{self.step},{self.active_gaussians},{self.active_chunks},"
            f"{self.active_keyframes},{self.loads},{self.evictions},{self.io_ns},"
            f"{self.step_ns},{self.selected_kf},{ov},{self.loss:.9g}"
        )


@dataclass(frozen=True)
class SyntheticScene:
    corridor_length_m: float
    density_per_m3: float = 10.0
    keyframe_spacing_m: float = 2.0
    seed: int = 7
    topology: str = "straight"  # or "loop"
    cross_section_m: float = 10.0

    def __post_init__(self):
        if self.corridor_length_m < 0:
            raise ValueError("corridor length must be >= 0")
        if min(self.density_per_m3, self.keyframe_spacing_m, self.cross_section_m) <= 0:
            raise ValueError("scene parameters must be positive")
        if self.topology not in ("straight", "loop"):
            raise ValueError(f"unknown topology {self.topology!r}")


@dataclass
class ReplayConfig:
    trajectory: Path
    images_dir: Path
    depth_dir: Path
    out: Path
    chunk_size: float = 10.0
    gaussian_budget: int = 50_000
    keyframe_budget: int = 16
    grid_resolution: float = 200.0
    steps_per_frame: int = 5
    seed: int = 7
    loop_closures: Path | None = None
    store_dir: Path | None = None
    intrinsics_path: Path | None = None
    max_distance: float = 200.0
    samples_per_keyframe: int = 2000
    refine_iters: int = 1000
    loop_mode: str = "auto"  # auto | batch | sequential
    lambda_s: float = 0.2
    lambda_depth: float = 0.5

    def __post_init__(self):
        for name in ("trajectory", "images_dir", "depth_dir", "out"):
            setattr(self, name, Path(getattr(self, name)))
        if self.store_dir is None:
            self.store_dir = Path(str(self.out) + ".store")
        else:
            self.store_dir = Path(self.store_dir)
        if self.intrinsics_path is not None:
            self.intrinsics_path = Path(self.intrinsics_path)
        if self.loop_closures is not None:
            self.loop_closures = Path(self.loop_closures)
        if self.loop_mode not in ("auto", "batch", "sequential"):
            raise ValueError(f"unknown loop mode {self.loop_mode!r}")


@dataclass
class ReplaySummary:
    exit_code: int
    metrics_path: Path
    frames: int
    steps: int
    total_gaussians: int
    misplaced: int
    post_run_moves: int | None = None
    correction: object = None
    inserted_per_frame: list[int] | None = None


def _derive_seed(master: int, purpose: int, counter: int) -> int:
    return int(np.random.SeedSequence([master, purpose, counter]).generate_state(1)[0])


def _load_trajectory(path: Path) -> list[Pose]:
    """TUM lines: timestamp tx ty tz qx qy qz qw."""
    poses = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise Malformed(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            _, tx, ty, tz, qx, qy, qz, qw = (float(v) for v in parts)
        except ValueError as exc:
            raise Malformed(f"{path}:{lineno}: {exc}") from exc
        poses.append(
            Pose(rotation=quat_normalize(np.array([qw, qx, qy, qz])),
                 translation=np.array([tx, ty, tz]))
        )
    return poses


def _load_intrinsics(path: Path) -> CameraIntrinsics:
    data = json.loads(path.read_text())
    try:
        return CameraIntrinsics(
            fx=data["fx"], fy=data["fy"], cx=data["cx"], cy=data["cy"],
            width=data["width"], height=data["height"],
            near=data.get("near", 0.05), far=data.get("far", 1000.0),
        )
    except KeyError as exc:
        raise Malformed(f"{path}: missing intrinsics field {exc}") from exc


def _frame_paths(cfg: ReplayConfig, index: int) -> tuple[Path, Path]:
    return cfg.images_dir / f"{index:06d}.png", cfg.depth_dir / f"{index:06d}.npy"


class _Replay:
    def __init__(self, cfg: ReplayConfig, intr: CameraIntrinsics):
        if cfg.store_dir.exists():
            shutil.rmtree(cfg.store_dir)
        self.cfg = cfg
        self.intr = intr
        self.store = ChunkStore(
            StoreConfig(
                disk_root=cfg.store_dir,
                chunk_size_m=cfg.chunk_size,
                gaussian_budget=cfg.gaussian_budget,
                keyframe_budget=cfg.keyframe_budget,
                io_ns_per_byte=1.0,
            )
        )
        self.cull_cfg = CullConfig(max_distance_m=cfg.max_distance)
        self.cache = VisibilityCache(cfg=self.cull_cfg)
        self.select_cfg = SelectConfig(grid_resolution_m=cfg.grid_resolution)
        self.sample_cfg = SampleConfig(samples_per_keyframe=cfg.samples_per_keyframe)
        self.weights = LossWeights(lambda_s=cfg.lambda_s, lambda_depth=cfg.lambda_depth)
        self.index = KeyframeIndex(config=self.select_cfg)
        self.latest_kf: int | None = None
        self.rows: list[FrameMetrics] = []
        self.step_counter = 0
        self._soa_cache: dict[int, tuple[int, SceneArrays]] = {}

    # ------------------------------------------------------------- pipeline

    def _visible_for_pose(self, pose: Pose) -> tuple[set[int], bool]:
        ext = self.store.coord_extent()
        if ext is None:
            return set(), False
        return self.cache.query(
            pose, self.intr, ChunkExtent(*ext), self.store.has_chunk,
            self.store.generation, self.store.chunk_size,
        )

    def _arrays_for(self, ids: list[int]) -> tuple[SceneArrays, list[tuple[int, int]]]:
        """Concatenated splat columns for resident chunks, cached per version."""
        blocks = []
        layout = []
        for cid in ids:
            chunk = self.store.chunk(cid)
            cached = self._soa_cache.get(cid)
            if cached is None or cached[0] != chunk.version:
                arrays = scene_arrays(chunk.gaussians)
                self._soa_cache[cid] = (chunk.version, arrays)
            else:
                arrays = cached[1]
            blocks.append(arrays)
            layout.append((cid, len(arrays)))
        if len(self._soa_cache) > 4 * max(1, len(ids)) + 64:
            resident = self.store.resident_chunk_ids()
            self._soa_cache = {c: v for c, v in self._soa_cache.items() if c in resident}
        return SceneArrays.concatenate(blocks), layout

    def _render_current(self, pose: Pose):
        visible, _ = self._visible_for_pose(pose)
        if visible:
            self.store.ensure_resident(sorted(visible))
            arrays, _ = self._arrays_for(sorted(visible))
        else:
            arrays, _ = self._arrays_for([])
        return render_arrays(arrays, pose, self.intr)

    def ingest_keyframe(self, index: int, pose: Pose, rgb: np.ndarray, depth: np.ndarray) -> int:
        kf = Keyframe(
            id=index, pose=pose, intrinsics=self.intr, rgb=rgb, depth=depth,
            usage_remaining=self.select_cfg.initial_usage,
        )
        self.store.keyframe_add(kf)
        self.index.add(index, kf.position, usage_remaining=self.select_cfg.initial_usage)
        self.latest_kf = index
        rendered = self._render_current(pose)
        p_input = log_norm(kf.rgb, self.sample_cfg.log_sigma, self.sample_cfg.kernel_radius)
        p_rendered = log_norm(rendered.rgb, self.sample_cfg.log_sigma, self.sample_cfg.kernel_radius)
        ps = sampling_probability(p_input, p_rendered)
        pixels = sample_pixels(ps, self.sample_cfg.samples_per_keyframe,
                               _derive_seed(self.cfg.seed, 1, index))
        return self.store.insert_gaussians(lift_to_gaussians(pixels, kf, self.sample_cfg))

    def _nudge_visible(self, arrays: SceneArrays, layout, frame, kf: Keyframe) -> None:
        """Projected-residual color/opacity adjustment on a capped subset.

        Gaussian centers are projected into the selected view; the first
        in-bounds splats (in chunk-id order) pull their degree-0 color toward
        the pixel residual, and under-covered pixels raise opacity slightly.
        """
        if not len(arrays):
            return
        intr = kf.intrinsics
        r = quat_to_matrix(kf.pose.rotation)
        cam = (arrays.positions - kf.pose.translation) @ r
        z_safe = np.where(cam[:, 2] >= intr.near, cam[:, 2], 1.0)
        px = np.rint(intr.fx * cam[:, 0] / z_safe + intr.cx).astype(np.int64)
        py = np.rint(intr.fy * cam[:, 1] / z_safe + intr.cy).astype(np.int64)
        ok = (
            (cam[:, 2] >= intr.near)
            & (px >= 0) & (px < intr.width)
            & (py >= 0) & (py < intr.height)
        )
        picked = np.flatnonzero(ok)[:_NUDGE_CAP]
        if picked.size == 0:
            return
        bounds = np.cumsum([size for _, size in layout])
        touched = set()
        for i in picked:
            block = int(np.searchsorted(bounds, i, side="right"))
            cid = layout[block][0]
            local = int(i - (bounds[block - 1] if block else 0))
            g = self.store.chunk(cid).gaussians[local]
            residual = kf.rgb[py[i], px[i]].astype(np.float64) - frame.rgb[py[i], px[i]]
            sh0 = g.sh[[0, 16, 32]] + _NUDGE_COLOR_RATE * residual / SH_C0
            g.sh[[0, 16, 32]] = np.float32(sh0).astype(np.float64)
            if frame.alpha[py[i], px[i]] < 0.5:
                g.opacity = float(np.float32(min(1.0, g.opacity + _NUDGE_OPACITY_STEP)))
            touched.add(cid)
        for cid in sorted(touched):
            self.store.mark_chunk_mutated(cid)

    def optimization_step(self, frame_idx: int, step_idx: int, inserted: int = 0) -> FrameMetrics:
        stats = self.store.stats
        io_before = stats.io_nanos
        loads_before = stats.chunk_loads
        evict_before = stats.chunk_evictions
        assert self.latest_kf is not None
        try:
            candidates = candidate_set(self.index.position_of(self.latest_kf), self.index)
        except EmptyCandidates:
            candidates = [self.latest_kf]
        selected = select_keyframe(candidates, self.index,
                                   _derive_seed(self.cfg.seed, 2, self.step_counter))
        kf = self.store.keyframe_get(selected)
        visible, _ = self._visible_for_pose(kf.pose)
        overlap_val = overlap(visible, self.store.resident_chunk_ids()) if visible else None
        if visible:
            self.store.ensure_resident(sorted(visible))
            arrays, layout = self._arrays_for(sorted(visible))
        else:
            arrays, layout = self._arrays_for([])
        frame = render_arrays(arrays, kf.pose, kf.intrinsics)
        loss = total_loss(frame, kf, self.weights)
        record_loss(selected, loss, self.index)
        kf.last_loss = loss
        kf.usage_remaining = self.index.usage_of(selected)
        self.store.mark_keyframe_dirty(selected)
        self._nudge_visible(arrays, layout, frame, kf)
        self.step_counter += 1
        io_delta = stats.io_nanos - io_before
        step_ns = (
            io_delta
            + _NS_PER_RENDERED_GAUSSIAN * len(arrays)
            + _NS_PER_PIXEL * self.intr.width * self.intr.height
            + _NS_PER_INSERTED_GAUSSIAN * inserted
            + _NS_STEP_BASE
        )
        row = FrameMetrics(
            frame=frame_idx,
            step=step_idx,
            active_gaussians=stats.active_gaussians,
            active_chunks=stats.active_chunks,
            active_keyframes=stats.active_keyframes,
            loads=stats.chunk_loads - loads_before,
            evictions=stats.chunk_evictions - evict_before,
            io_ns=io_delta,
            step_ns=step_ns,
            selected_kf=selected,
            overlap=overlap_val,
            loss=loss,
        )
        self.rows.append(row)
        return row


def run_replay(cfg: ReplayConfig) -> ReplaySummary:
    """Drive the full replay loop; returns a summary with the exit status."""
    poses = _load_trajectory(cfg.trajectory)
    intr_path = cfg.intrinsics_path or (cfg.trajectory.parent / "intrinsics.json")
    correction_set = None
    if cfg.loop_closures is not None:
        correction_set = parse_correction_file(cfg.loop_closures)
    rows: list[FrameMetrics] = []
    misplaced = 0
    post_run_moves = None
    outcome = None
    frames = 0
    inserted_per_frame: list[int] = []
    if poses:
        intr = _load_intrinsics(intr_path)
        replay = _Replay(cfg, intr)
        for i, pose in enumerate(poses):
            img_path, depth_path = _frame_paths(cfg, i)
            rgb = np.asarray(Image.open(img_path).convert("RGB"), dtype=np.float32) / np.float32(255.0)
            depth = np.load(depth_path).astype(np.float32)
            inserted = replay.ingest_keyframe(i, pose, rgb, depth)
            inserted_per_frame.append(inserted)
            for step in range(cfg.steps_per_frame):
                replay.optimization_step(i, step, inserted=inserted if step == 0 else 0)
        if correction_set is not None and correction_set.entries:
            force = {
                "auto": None,
                "batch": CorrectionMode.BATCH,
                "sequential": CorrectionMode.SEQUENTIAL,
            }[cfg.loop_mode]
            outcome = run_correction(
                correction_set, replay.store, replay.cull_cfg,
                init_opacity=replay.sample_cfg.init_opacity, force_mode=force,
            )
            for kf_id, _ in correction_set.entries:
                replay.index.update_position(kf_id, replay.store.keyframe_get(kf_id).position)
            for step in range(cfg.refine_iters):
                replay.optimization_step(len(poses), step)
            post_run_moves = redistribute(replay.store.known_chunk_ids(), replay.store).moved
        replay.store.flush()
        misplaced = len(replay.store.audit_placement())
        rows = replay.rows
        frames = len(poses)
        total = replay.store.stats.total_gaussians_ever
    else:
        total = 0
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.out, "w") as f:
        f.write(METRICS_HEADER + "\n")
        for row in rows:
            f.write(row.csv_row() + "\n")
    exit_code = 0
    if misplaced or (post_run_moves or 0) > 0:
        exit_code = 1
    return ReplaySummary(
        exit_code=exit_code,
        metrics_path=cfg.out,
        frames=frames,
        steps=len(rows),
        total_gaussians=total,
        misplaced=misplaced,
        post_run_moves=post_run_moves,
        correction=outcome,
        inserted_per_frame=inserted_per_frame,
    )


# ------------------------------------------------------------------ synthetic


def _corridor_poses(scene: SyntheticScene) -> list[Pose]:
    n = int(math.floor(scene.corridor_length_m / scene.keyframe_spacing_m)) + 1
    poses = []
    if scene.topology == "straight":
        # Camera at (x, 0, 0) looking along +x: cam x->-y, cam y->-z, cam z->+x.
        rot = quat_normalize(np.array([0.5, -0.5, 0.5, -0.5]))
        for i in range(n):
            poses.append(Pose(rotation=rot.copy(),
                              translation=np.array([i * scene.keyframe_spacing_m, 0.0, 0.0])))
        return poses
    radius = scene.corridor_length_m / (2.0 * math.pi) if scene.corridor_length_m > 0 else 0.0
    for i in range(n):
        theta = (i * scene.keyframe_spacing_m) / radius if radius > 0 else 0.0
        pos = np.array([radius * math.cos(theta), radius * math.sin(theta), 0.0])
        forward = np.array([-math.sin(theta), math.cos(theta), 0.0])
        right = np.array([math.cos(theta), math.sin(theta), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        m = np.stack([right, down, forward], axis=1)
        poses.append(Pose(rotation=_quat_from_matrix(m), translation=pos))
    return poses


def _quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion (w,x,y,z) of a rotation matrix (Shepperd's method)."""
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    return quat_normalize(q)


def _scene_population(scene: SyntheticScene, rng: np.random.Generator) -> list[Gaussian]:
    w = scene.cross_section_m
    if scene.topology == "straight":
        volume = scene.corridor_length_m * w * w
    else:
        volume = scene.corridor_length_m * w * w  # tube around the circle
    count = int(round(scene.density_per_m3 * volume))
    gaussians = []
    for _ in range(count):
        if scene.topology == "straight":
            pos = np.array([
                rng.uniform(0.0, max(scene.corridor_length_m, 1e-9)),
                rng.uniform(-w / 2, w / 2),
                rng.uniform(-w / 2, w / 2),
            ])
        else:
            radius = scene.corridor_length_m / (2.0 * math.pi)
            theta = rng.uniform(0.0, 2.0 * math.pi)
            r = radius + rng.uniform(-w / 2, w / 2)
            pos = np.array([r * math.cos(theta), r * math.sin(theta), rng.uniform(-w / 2, w / 2)])
        color = rng.uniform(0.05, 0.95, size=3)
        sh = np.zeros(48)
        sh[[0, 16, 32]] = (color - 0.5) / SH_C0
        gaussians.append(
            Gaussian(
                position=pos,
                scale=np.full(3, rng.uniform(0.15, 0.45)),
                opacity=float(rng.uniform(0.5, 0.95)),
                sh=sh,
            )
        )
    return gaussians


def generate_synthetic(scene: SyntheticScene, out_dir: Path | str,
                       intr: CameraIntrinsics | None = None) -> tuple[Path, int]:
    """Write a self-consistent synthetic dataset; returns (trajectory path, frames).

    Ground-truth RGB and depth are renders of a generated Gaussian population,
    so the replay pipeline optimizes against images its own renderer can
    reproduce.  Deterministic per seed.
    """
    out_dir = Path(out_dir)
    images = out_dir / "images"
    depths = out_dir / "depth"
    images.mkdir(parents=True, exist_ok=True)
    depths.mkdir(parents=True, exist_ok=True)
    if intr is None:
        intr = CameraIntrinsics(fx=48.0, fy=48.0, cx=32.0, cy=32.0,
                                width=64, height=64, near=0.1, far=500.0)
    rng = np.random.default_rng(scene.seed)
    population = scene_arrays(_scene_population(scene, rng))
    poses = _corridor_poses(scene)
    lines = []
    for i, pose in enumerate(poses):
        frame = render_arrays(population, pose, intr)
        rgb_u8 = np.clip(np.round(frame.rgb * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(rgb_u8, mode="RGB").save(images / f"{i:06d}.png")
        np.save(depths / f"{i:06d}.npy", frame.depth.astype(np.float32))
        t = pose.translation
        q = pose.rotation
        lines.append(
            f"{float(i):.6f} {t[0]:.9g} {t[1]:.9g} {t[2]:.9g} "
            f"{q[1]:.17g} {q[2]:.17g} {q[3]:.17g} {q[0]:.17g}"
        )
    trajectory = out_dir / "trajectory.txt"
    trajectory.write_text("\n".join(lines) + ("\n" if lines else ""))
    (out_dir / "intrinsics.json").write_text(
        json.dumps(
            {
                "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                "width": intr.width, "height": intr.height,
                "near": intr.near, "far": intr.far,
            },
            indent=2,
        )
        + "\n"
    )
    return trajectory, len(poses)


# --------------------------------------------------------------------- report


def report(metrics_path: Path | str) -> str:
    """Summarize a metrics CSV: plateau, io fraction, overlap, loss stats."""
    path = Path(metrics_path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        raise Malformed(f"{path}: missing or wrong metrics header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 12:
            raise Malformed(f"{path}:{lineno}: expected 12 columns, got {len(parts)}")
        try:
            rows.append(
                {
                    "active_gaussians": int(parts[2]),
                    "io_ns": int(parts[7]),
                    "step_ns": int(parts[8]),
                    "overlap": float(parts[10]) if parts[10] != "" else None,
                    "loss": float(parts[11]),
                }
            )
        except ValueError as exc:
            raise Malformed(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        return "empty run: no optimization steps recorded\n"
    io_total = sum(r["io_ns"] for r in rows)
    step_total = sum(r["step_ns"] for r in rows)
    io_fraction = io_total / step_total if step_total else 0.0
    steady = rows[len(rows) // 2 :]
    plateau = max(r["active_gaussians"] for r in steady)
    overlaps = [r["overlap"] for r in rows if r["overlap"] is not None]
    mean_overlap = sum(overlaps) / len(overlaps) if overlaps else float("nan")
    losses = [r["loss"] for r in rows]
    return (
        f"steps: {len(rows)}\n"
        f"plateau active_gaussians (steady-state window): {plateau}\n"
        f"io_fraction: {io_fraction:.4f}\n"
        f"mean_overlap: {mean_overlap:.4f}\n"
        f"loss first/last: {losses[0]:.6g} / {losses[-1]:.6g}\n"
        f"loss min/mean/max: {min(losses):.6g} / {sum(losses)/len(losses):.6g} / {max(losses):.6g}\n"
    )
