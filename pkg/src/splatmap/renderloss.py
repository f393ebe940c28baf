"""Minimal CPU forward splat renderer and the image/depth loss stack.

Gaussians are projected to anisotropic 2D footprints (first-order EWA: the
projection Jacobian maps the camera-frame covariance to screen space, plus a
0.3 px low-pass), truncated at 3 sigma, and alpha-composited front to back in
ascending camera depth.  Color uses the degree-0 SH term only; depth is the
alpha-weighted mean of splat depths.  Forward only: the desk-scale simulator
drives parameters with projected-residual nudges, not analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from skimage.metrics import structural_similarity

from .core import SH_C0, CameraIntrinsics, Gaussian, Keyframe, Pose, quat_to_matrix
from .errors import DimensionMismatch

__all__ = ["RenderedFrame", "SceneArrays", "LossWeights", "render", "render_arrays",
           "scene_arrays", "ssim", "image_loss", "depth_loss", "total_loss"]

# Gaussians with transmittance below this contribute < 1e-10 to any pixel.
_MIN_TRANSMITTANCE = 1e-10


@dataclass
class RenderedFrame:
    rgb: np.ndarray    # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W) meters; 0 where nothing rendered
    alpha: np.ndarray  # (H, W) in [0, 1]


@dataclass
class SceneArrays:
    """Column layout of a splat list, the renderer's native input."""

    positions: np.ndarray  # (N, 3)
    rotations: np.ndarray  # (N, 4) (w, x, y, z)
    scales: np.ndarray     # (N, 3)
    opacities: np.ndarray  # (N,)
    sh0: np.ndarray        # (N, 3) degree-0 SH per channel

    def __len__(self) -> int:
        return self.positions.shape[0]

    @staticmethod
    def concatenate(blocks: list["SceneArrays"]) -> "SceneArrays":
        if not blocks:
            return _empty_arrays()
        return SceneArrays(
            positions=np.concatenate([b.positions for b in blocks]),
            rotations=np.concatenate([b.rotations for b in blocks]),
            scales=np.concatenate([b.scales for b in blocks]),
            opacities=np.concatenate([b.opacities for b in blocks]),
            sh0=np.concatenate([b.sh0 for b in blocks]),
        )


def _empty_arrays() -> SceneArrays:
    return SceneArrays(
        positions=np.empty((0, 3)),
        rotations=np.empty((0, 4)),
        scales=np.empty((0, 3)),
        opacities=np.empty(0),
        sh0=np.empty((0, 3)),
    )


def scene_arrays(gaussians: list[Gaussian]) -> SceneArrays:
    """Stack a splat list into SceneArrays."""
    n = len(gaussians)
    if n == 0:
        return _empty_arrays()
    arr = _empty_arrays()
    arr.positions = np.empty((n, 3))
    arr.rotations = np.empty((n, 4))
    arr.scales = np.empty((n, 3))
    arr.opacities = np.empty(n)
    arr.sh0 = np.empty((n, 3))
    for i, g in enumerate(gaussians):
        arr.positions[i] = g.position
        arr.rotations[i] = g.rotation
        arr.scales[i] = g.scale
        arr.opacities[i] = g.opacity
        arr.sh0[i, 0] = g.sh[0]
        arr.sh0[i, 1] = g.sh[16]
        arr.sh0[i, 2] = g.sh[32]
    return arr


@dataclass(frozen=True)
class LossWeights:
    lambda_s: float = 0.2
    lambda_depth: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.lambda_s <= 1.0):
            raise ValueError("lambda_s must be in [0,1]")
        if self.lambda_depth < 0.0:
            raise ValueError("lambda_depth must be >= 0")


@njit(cache=True)
def _composite(order, means, cov_abc, zs, colors, opacities, height, width,
               rgb, depth_acc, trans):
    for oi in range(order.size):
        i = order[oi]
        a = cov_abc[i, 0]
        b = cov_abc[i, 1]
        c = cov_abc[i, 2]
        det = a * c - b * b
        if det <= 0.0 or a <= 0.0 or c <= 0.0:
            continue
        ia = c / det
        ib = -b / det
        ic = a / det
        u = means[i, 0]
        v = means[i, 1]
        rx = 3.0 * np.sqrt(a)
        ry = 3.0 * np.sqrt(c)
        x0 = int(np.ceil(u - rx))
        x1 = int(np.floor(u + rx))
        y0 = int(np.ceil(v - ry))
        y1 = int(np.floor(v + ry))
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if x1 > width - 1:
            x1 = width - 1
        if y1 > height - 1:
            y1 = height - 1
        for py in range(y0, y1 + 1):
            dy = py - v
            for px in range(x0, x1 + 1):
                dx = px - u
                q = ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy
                if q > 9.0:
                    continue
                t = trans[py, px]
                if t < _MIN_TRANSMITTANCE:
                    continue
                alpha = opacities[i] * np.exp(-0.5 * q)
                contrib = t * alpha
                rgb[py, px, 0] += contrib * colors[i, 0]
                rgb[py, px, 1] += contrib * colors[i, 1]
                rgb[py, px, 2] += contrib * colors[i, 2]
                depth_acc[py, px] += contrib * zs[i]
                trans[py, px] = t * (1.0 - alpha)


def _rotation_matrices(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def render_arrays(scene: SceneArrays, pose: Pose, intr: CameraIntrinsics) -> RenderedFrame:
    """Render RGB, alpha-weighted mean depth, and alpha from a camera pose."""
    h, w = intr.height, intr.width
    rgb = np.zeros((h, w, 3))
    depth_acc = np.zeros((h, w))
    trans = np.ones((h, w))
    if len(scene):
        r_wc = quat_to_matrix(pose.rotation)
        cam = (scene.positions - pose.translation) @ r_wc  # world -> camera frame
        keep = cam[:, 2] >= intr.near
        if np.any(keep):
            cam = cam[keep]
            x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
            means = np.stack([intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy], axis=1)

            rot = _rotation_matrices(scene.rotations[keep])
            s2 = scene.scales[keep] ** 2
            sigma_world = (rot * s2[:, None, :]) @ rot.transpose(0, 2, 1)
            w_mat = r_wc.T
            sigma_cam = (w_mat @ sigma_world) @ w_mat.T

            jac = np.zeros((cam.shape[0], 2, 3))
            jac[:, 0, 0] = intr.fx / z
            jac[:, 0, 2] = -intr.fx * x / z**2
            jac[:, 1, 1] = intr.fy / z
            jac[:, 1, 2] = -intr.fy * y / z**2
            cov2 = (jac @ sigma_cam) @ jac.transpose(0, 2, 1)
            cov_abc = np.stack(
                [cov2[:, 0, 0] + 0.3, cov2[:, 0, 1], cov2[:, 1, 1] + 0.3], axis=1
            )

            colors = np.clip(SH_C0 * scene.sh0[keep] + 0.5, 0.0, 1.0)
            order = np.argsort(z, kind="stable")
            _composite(
                np.ascontiguousarray(order, dtype=np.int64),
                np.ascontiguousarray(means),
                np.ascontiguousarray(cov_abc),
                np.ascontiguousarray(z),
                np.ascontiguousarray(colors),
                np.ascontiguousarray(scene.opacities[keep]),
                h,
                w,
                rgb,
                depth_acc,
                trans,
            )
    alpha = 1.0 - trans
    depth = np.where(alpha > 0.0, depth_acc / np.maximum(alpha, 1e-300), 0.0)
    return RenderedFrame(rgb=np.clip(rgb, 0.0, 1.0), depth=depth, alpha=np.clip(alpha, 0.0, 1.0))


def render(gaussians: list[Gaussian], pose: Pose, intr: CameraIntrinsics) -> RenderedFrame:
    """Render a splat list (convenience wrapper over render_arrays)."""
    return render_arrays(scene_arrays(gaussians), pose, intr)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM, 11x11 Gaussian window sigma=1.5, C1=0.01^2, C2=0.03^2 on [0,1].

    Color images are scored per channel and averaged.  Images must be at
    least 11 pixels on each side.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"ssim inputs {a.shape} vs {b.shape}")
    channel_axis = 2 if a.ndim == 3 else None
    return float(
        structural_similarity(
            a,
            b,
            data_range=1.0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            channel_axis=channel_axis,
        )
    )


def image_loss(rendered: np.ndarray, gt: np.ndarray, w: LossWeights) -> float:
    """(1 - lambda_s) * L1 + lambda_s * (1 - SSIM)."""
    a = np.asarray(rendered, dtype=np.float64)
    b = np.asarray(gt, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image_loss inputs {a.shape} vs {b.shape}")
    l1 = float(np.mean(np.abs(a - b)))
    return (1.0 - w.lambda_s) * l1 + w.lambda_s * (1.0 - ssim(a, b))


def depth_loss(d_rendered: np.ndarray, d_gt: np.ndarray) -> float:
    """Mean absolute depth difference over pixels with valid ground truth."""
    a = np.asarray(d_rendered, dtype=np.float64)
    b = np.asarray(d_gt, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"depth_loss inputs {a.shape} vs {b.shape}")
    valid = b > 0.0
    if not np.any(valid):
        return 0.0
    return float(np.mean(np.abs(a[valid] - b[valid])))


def total_loss(frame: RenderedFrame, kf: Keyframe, w: LossWeights) -> float:
    """image_loss + lambda_depth * depth_loss against the keyframe's images."""
    return image_loss(frame.rgb, kf.rgb, w) + w.lambda_depth * depth_loss(frame.depth, kf.depth)
