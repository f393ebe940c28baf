"""Domain records and rigid-geometry primitives shared by every other module.

Conventions, fixed once for the whole package:
  * quaternions are (w, x, y, z), Hamilton product, unit norm;
  * a Pose maps camera coordinates to world coordinates (rotation world<-camera,
    translation = camera center in world);
  * depth value 0 marks an invalid pixel.

Vectors and quaternions are plain float64 numpy arrays; the record types below
are thin dataclasses around them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "quat_identity",
    "quat_normalize",
    "quat_multiply",
    "quat_conjugate",
    "quat_to_matrix",
    "quat_rotate",
    "Pose",
    "RigidTransform",
    "CameraIntrinsics",
    "Gaussian",
    "Keyframe",
    "pose_compose",
    "pose_inverse",
    "pose_apply",
    "pose_apply_inverse",
    "transform_gaussian",
    "SH_C0",
]

# Degree-0 spherical-harmonics basis constant used for color encode/decode.
SH_C0 = 0.28209479177


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3).copy()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector {a}")
    return a


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    return q / n


def _unit_quat(q, tol: float = 1e-6) -> np.ndarray:
    """Validate a near-unit quaternion without renormalizing it.

    Renormalization at construction would perturb float32-quantized values
    loaded from disk and break bit-exact persistence; callers that build
    rotations from products normalize explicitly.
    """
    q = np.asarray(q, dtype=np.float64).reshape(4).copy()
    n = float(np.linalg.norm(q))
    if not np.isfinite(n) or abs(n - 1.0) > tol:
        raise ValueError(f"quaternion norm {n} deviates from 1 by more than {tol}")
    return q


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a*b, both (w, x, y, z)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


@dataclass(frozen=True)
class Pose:
    """World<-camera rigid pose: rotation quaternion plus camera center."""

    rotation: np.ndarray = field(default_factory=quat_identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _unit_quat(self.rotation))
        object.__setattr__(self, "translation", _vec3(self.translation))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous world<-camera matrix."""
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class RigidTransform:
    """A rigid correction applied in world space (loop closure)."""

    rotation: np.ndarray = field(default_factory=quat_identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _unit_quat(self.rotation))
        object.__setattr__(self, "translation", _vec3(self.translation))

    def apply_point(self, p) -> np.ndarray:
        return quat_rotate(self.rotation, p) + self.translation


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.05
    far: float = 1000.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")


@dataclass
class Gaussian:
    """One splat primitive.

    ``sh`` holds 48 spherical-harmonics coefficients, channel-major: 16
    degree-3 coefficients for R, then G, then B; index 0/16/32 are the
    degree-0 terms.  ``opt_state`` is an opaque optimizer payload the store
    round-trips verbatim.
    """

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=quat_identity)
    scale: np.ndarray = field(default_factory=lambda: np.full(3, 0.1))
    opacity: float = 0.5
    sh: np.ndarray = field(default_factory=lambda: np.zeros(48))
    opt_state: bytes = b""

    def __post_init__(self):
        self.position = _vec3(self.position)
        self.rotation = _unit_quat(self.rotation)
        self.scale = _vec3(self.scale)
        if np.any(self.scale <= 0):
            raise ValueError(f"scale components must be positive, got {self.scale}")
        self.opacity = float(self.opacity)
        if not (0.0 <= self.opacity <= 1.0):
            raise ValueError(f"opacity must be in [0,1], got {self.opacity}")
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(-1).copy()
        if self.sh.shape != (48,):
            raise ValueError(f"sh must have 48 coefficients, got {self.sh.shape}")
        if not isinstance(self.opt_state, bytes):
            self.opt_state = bytes(self.opt_state)

    def copy(self) -> "Gaussian":
        return Gaussian(
            position=self.position.copy(),
            rotation=self.rotation.copy(),
            scale=self.scale.copy(),
            opacity=self.opacity,
            sh=self.sh.copy(),
            opt_state=self.opt_state,
        )


def validate_gaussian_arrays(positions, rotations, scales, opacities, sh) -> None:
    """Whole-array form of the Gaussian field invariants (for bulk builders)."""
    if not (np.isfinite(positions).all() and np.isfinite(rotations).all()
            and np.isfinite(scales).all() and np.isfinite(opacities).all()
            and np.isfinite(sh).all()):
        raise ValueError("non-finite field")
    if scales.size and scales.min() <= 0.0:
        raise ValueError("non-positive scale")
    if opacities.size and (opacities.min() < 0.0 or opacities.max() > 1.0):
        raise ValueError("opacity outside [0,1]")
    if rotations.size:
        norms = np.linalg.norm(rotations, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("rotation not unit norm")


def unchecked_gaussian(position, rotation, scale, opacity, sh, opt_state=b"") -> Gaussian:
    """Construct a Gaussian without per-field validation.

    Bulk paths (deserialization, lifting, canonicalization) validate whole
    arrays at once and then build records through here; going through the
    regular constructor costs ~20x more per splat.  Callers own the
    invariants.
    """
    g = object.__new__(Gaussian)
    g.position = position
    g.rotation = rotation
    g.scale = scale
    g.opacity = opacity
    g.sh = sh
    g.opt_state = opt_state
    return g


@dataclass
class Keyframe:
    """A posed camera frame with its RGB and depth images.

    ``rgb`` is quantized to the 8-bit storage grid (k/255) at construction and
    kept as float32 in [0,1]; ``depth`` is float32 meters with 0 marking
    invalid pixels.  This makes in-memory content identical to what the disk
    format can represent, so persistence round-trips are bit-exact.
    """

    id: int
    pose: Pose
    intrinsics: CameraIntrinsics
    rgb: np.ndarray
    depth: np.ndarray
    last_loss: float = 0.0
    usage_remaining: int = 0
    last_access: int = 0

    def __post_init__(self):
        h, w = self.intrinsics.height, self.intrinsics.width
        rgb = np.asarray(self.rgb, dtype=np.float64)
        if rgb.shape != (h, w, 3):
            raise ValueError(f"rgb shape {rgb.shape} does not match intrinsics {h}x{w}x3")
        q = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
        self.rgb = (q.astype(np.float32)) / np.float32(255.0)
        depth = np.asarray(self.depth, dtype=np.float32)
        if depth.shape != (h, w):
            raise ValueError(f"depth shape {depth.shape} does not match intrinsics {h}x{w}")
        self.depth = depth.copy()
        self.last_loss = float(self.last_loss)
        if not np.isfinite(self.last_loss) or self.last_loss < 0:
            raise ValueError(f"last_loss must be finite and >= 0, got {self.last_loss}")
        self.usage_remaining = int(self.usage_remaining)
        if self.usage_remaining < 0:
            raise ValueError("usage_remaining must be >= 0")

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Composition a∘b: apply b first, then a."""
    return Pose(
        rotation=quat_multiply(a.rotation, b.rotation),
        translation=quat_rotate(a.rotation, b.translation) + a.translation,
    )


def pose_inverse(p: Pose) -> Pose:
    """Pose q with pose_compose(p, q) = identity."""
    rinv = quat_conjugate(p.rotation)
    return Pose(rotation=rinv, translation=-quat_rotate(rinv, p.translation))


def pose_apply(p: Pose, point) -> np.ndarray:
    """Map a camera-frame point to the world frame."""
    return quat_rotate(p.rotation, point) + p.translation


def pose_apply_inverse(p: Pose, point) -> np.ndarray:
    """Map a world-frame point to the camera frame."""
    r = quat_to_matrix(p.rotation)
    return r.T @ (np.asarray(point, dtype=np.float64) - p.translation)


def transform_gaussian(g: Gaussian, t: RigidTransform) -> Gaussian:
    """Rigidly move one Gaussian: position and rotation change, rest is kept."""
    moved = g.copy()
    moved.position = t.apply_point(g.position)
    moved.rotation = quat_normalize(quat_multiply(t.rotation, g.rotation))
    return moved
