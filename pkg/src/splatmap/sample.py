"""Edge-driven direct primitive sampling and depth lifting.

New splats are placed where the input image has high-frequency content the
current render does not yet reproduce: both images are scored with the norm
of a Laplacian-of-Gaussian filter, and the per-pixel sampling probability is
max(input_score - rendered_score, 0).  Sampled pixels with valid depth are
unprojected into world-space Gaussians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import (
    SH_C0,
    Gaussian,
    Keyframe,
    quat_to_matrix,
    unchecked_gaussian,
    validate_gaussian_arrays,
)
from .errors import DimensionMismatch

__all__ = ["SampleConfig", "log_norm", "sampling_probability", "sample_pixels",
           "lift_to_gaussians"]

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SampleConfig:
    log_sigma: float = 1.0
    kernel_radius: int = 2
    samples_per_keyframe: int = 2000
    init_scale_factor: float = 1.0
    init_opacity: float = 0.1

    def __post_init__(self):
        if min(self.log_sigma, self.kernel_radius, self.samples_per_keyframe,
               self.init_scale_factor) <= 0:
            raise ValueError("sampling parameters must be positive")
        if not (0.0 < self.init_opacity <= 1.0):
            raise ValueError("init_opacity must be in (0,1]")


def log_kernel(sigma: float, radius: int) -> np.ndarray:
    """Discrete Laplacian-of-Gaussian tap grid, adjusted to zero sum.

    Zero sum makes the response vanish on constant regions; with zero-padded
    borders a nonzero constant still responds in the outermost ``radius``
    ring, where padding fabricates an edge.
    """
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    r2 = xx * xx + yy * yy
    s2 = sigma * sigma
    k = (r2 - 2.0 * s2) * np.exp(-r2 / (2.0 * s2))
    return k - k.mean()


def log_norm(rgb: np.ndarray, sigma: float = 1.0, radius: int = 2) -> np.ndarray:
    """|LoG| of the luma image, max-normalized to [0,1] unless all-zero."""
    img = np.asarray(rgb, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"expected HxWx3 image, got {img.shape}")
    gray = img @ _LUMA
    response = ndimage.convolve(gray, log_kernel(sigma, radius), mode="constant", cval=0.0)
    out = np.abs(response)
    peak = out.max()
    if peak > 0.0:
        out /= peak
    return out


def sampling_probability(p_input: np.ndarray, p_rendered: np.ndarray) -> np.ndarray:
    """Per-pixel max(p_input - p_rendered, 0)."""
    a = np.asarray(p_input, dtype=np.float64)
    b = np.asarray(p_rendered, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"score maps {a.shape} vs {b.shape}")
    return np.maximum(a - b, 0.0)


def sample_pixels(ps: np.ndarray, n: int, rng_seed: int) -> list[tuple[int, int]]:
    """Draw up to n distinct pixels with probability proportional to ps."""
    if n < 0:
        raise ValueError("n must be >= 0")
    ps = np.asarray(ps, dtype=np.float64)
    flat = ps.reshape(-1)
    total = flat.sum()
    positive = int(np.count_nonzero(flat > 0))
    k = min(n, positive)
    if k == 0 or total <= 0.0:
        return []
    rng = np.random.default_rng(rng_seed)
    chosen = rng.choice(flat.size, size=k, replace=False, p=flat / total)
    w = ps.shape[1]
    return [(int(i) // w, int(i) % w) for i in chosen]


def lift_to_gaussians(
    pixels: list[tuple[int, int]], kf: Keyframe, cfg: SampleConfig
) -> list[Gaussian]:
    """Unproject sampled pixels with valid depth into world-space Gaussians.

    Scale is isotropic and proportional to depth over focal length (roughly
    one pixel of footprint); color goes into the degree-0 SH terms.  Pixels
    with invalid depth are skipped.
    """
    intr = kf.intrinsics
    if not pixels:
        return []
    px = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    rows, cols = px[:, 0], px[:, 1]
    in_bounds = (rows >= 0) & (rows < intr.height) & (cols >= 0) & (cols < intr.width)
    if not in_bounds.all():
        bad = int(np.flatnonzero(~in_bounds)[0])
        raise ValueError(f"pixel ({rows[bad]},{cols[bad]}) out of bounds")
    d = kf.depth[rows, cols].astype(np.float64)
    valid = d > 0.0
    rows, cols, d = rows[valid], cols[valid], d[valid]
    n = int(d.size)
    if n == 0:
        return []
    cam = np.stack(
        [(cols - intr.cx) / intr.fx * d, (rows - intr.cy) / intr.fy * d, d], axis=1
    )
    r = quat_to_matrix(kf.pose.rotation)
    world = cam @ r.T + kf.pose.translation
    colors = kf.rgb[rows, cols].astype(np.float64)
    sh = np.zeros((n, 48))
    sh[:, 0] = (colors[:, 0] - 0.5) / SH_C0
    sh[:, 16] = (colors[:, 1] - 0.5) / SH_C0
    sh[:, 32] = (colors[:, 2] - 0.5) / SH_C0
    scales = np.repeat((cfg.init_scale_factor * d / intr.fx)[:, None], 3, axis=1)
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    opacity = float(cfg.init_opacity)
    validate_gaussian_arrays(world, rotations, scales, np.full(n, opacity), sh)
    return [
        unchecked_gaussian(world[i], rotations[i], scales[i], opacity, sh[i])
        for i in range(n)
    ]
