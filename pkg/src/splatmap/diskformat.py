"""Little-endian binary formats for chunk (.dcg) and keyframe (.dkf) files.

Chunk file layout:
    magic "DCG1" | version u32 | encoded id u64 | gaussian count u64 |
    reserved u64 (zero) | records
    record: position 3xf32 | rotation 4xf32 (w,x,y,z) | scale 3xf32 |
            opacity f32 | sh 48xf32 | opt_state length u32 | opt_state bytes

Keyframe file layout:
    magic "DKF1" | version u32 | id u64 | pose 7xf64 (tx ty tz qw qx qy qz) |
    intrinsics 6xf64 (fx fy cx cy near far) | width u32 | height u32 |
    last_loss f64 | usage_remaining u32 | rgb H*W*3 u8 (row-major RGB) |
    depth H*W f32

Readers reject wrong magic or version and truncated payloads with
CorruptChunk.  All multi-byte values are little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import (
    CameraIntrinsics,
    Gaussian,
    Keyframe,
    Pose,
    unchecked_gaussian,
    validate_gaussian_arrays,
)
from .errors import CorruptChunk

__all__ = [
    "CHUNK_MAGIC",
    "KEYFRAME_MAGIC",
    "FORMAT_VERSION",
    "storage_canonical",
    "pack_chunk",
    "unpack_chunk",
    "read_chunk_header",
    "pack_keyframe",
    "unpack_keyframe",
]

CHUNK_MAGIC = b"DCG1"
KEYFRAME_MAGIC = b"DKF1"
FORMAT_VERSION = 1

_CHUNK_HEADER = struct.Struct("<4sIQQQ")
_RECORD_FIXED = struct.Struct("<3f4f3ff48fI")  # 236 bytes of floats + length u32
_KF_HEADER = struct.Struct("<4sIQ7d6dIIdI")

# Structured dtype for the common all-empty-opt_state fast path.
_RECORD_DTYPE = np.dtype(
    [
        ("position", "<f4", (3,)),
        ("rotation", "<f4", (4,)),
        ("scale", "<f4", (3,)),
        ("opacity", "<f4"),
        ("sh", "<f4", (48,)),
        ("opt_len", "<u4"),
    ]
)
assert _RECORD_DTYPE.itemsize == 240


def storage_canonical(g: Gaussian) -> Gaussian:
    """Quantize a Gaussian's numeric state through float32.

    The result is a fixed point of pack/unpack, so everything held by the
    store round-trips to disk bit-exactly.  Idempotent.
    """
    f32 = np.float32
    return Gaussian(
        position=g.position.astype(f32).astype(np.float64),
        rotation=g.rotation.astype(f32).astype(np.float64),
        scale=g.scale.astype(f32).astype(np.float64),
        opacity=float(f32(g.opacity)),
        sh=g.sh.astype(f32).astype(np.float64),
        opt_state=g.opt_state,
    )


def pack_chunk(encoded_id: int, gaussians: list[Gaussian]) -> bytes:
    header = _CHUNK_HEADER.pack(CHUNK_MAGIC, FORMAT_VERSION, encoded_id, len(gaussians), 0)
    if gaussians and all(len(g.opt_state) == 0 for g in gaussians):
        arr = np.zeros(len(gaussians), dtype=_RECORD_DTYPE)
        arr["position"] = [g.position for g in gaussians]
        arr["rotation"] = [g.rotation for g in gaussians]
        arr["scale"] = [g.scale for g in gaussians]
        arr["opacity"] = [g.opacity for g in gaussians]
        arr["sh"] = [g.sh for g in gaussians]
        return header + arr.tobytes()
    parts = [header]
    for g in gaussians:
        parts.append(
            _RECORD_FIXED.pack(
                *g.position.astype(np.float32),
                *g.rotation.astype(np.float32),
                *g.scale.astype(np.float32),
                np.float32(g.opacity),
                *g.sh.astype(np.float32),
                len(g.opt_state),
            )
        )
        parts.append(g.opt_state)
    return b"".join(parts)


def _check_header(data: bytes, magic: bytes, size: int, kind: str) -> None:
    if len(data) < size:
        raise CorruptChunk(f"{kind} file truncated before header end")
    if data[:4] != magic:
        raise CorruptChunk(f"bad {kind} magic {data[:4]!r}")


def storage_canonical_batch(gs: list[Gaussian]) -> list[Gaussian]:
    """Vectorized storage_canonical over a whole list."""
    if not gs:
        return []
    f32, f64 = np.float32, np.float64
    positions = np.array([g.position for g in gs]).astype(f32).astype(f64)
    rotations = np.array([g.rotation for g in gs]).astype(f32).astype(f64)
    scales = np.array([g.scale for g in gs]).astype(f32).astype(f64)
    opacities = np.array([g.opacity for g in gs], dtype=f32).astype(f64)
    sh = np.array([g.sh for g in gs]).astype(f32).astype(f64)
    validate_gaussian_arrays(positions, rotations, scales, opacities, sh)
    return [
        unchecked_gaussian(positions[i], rotations[i], scales[i],
                           float(opacities[i]), sh[i], gs[i].opt_state)
        for i in range(len(gs))
    ]


def unpack_chunk(data: bytes) -> tuple[int, list[Gaussian]]:
    """Parse a chunk file; returns (encoded id, gaussians)."""
    _check_header(data, CHUNK_MAGIC, _CHUNK_HEADER.size, "chunk")
    _, version, encoded_id, count, _reserved = _CHUNK_HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise CorruptChunk(f"unsupported chunk format version {version}")
    payload = data[_CHUNK_HEADER.size :]
    try:
        if len(payload) == count * _RECORD_DTYPE.itemsize:
            arr = np.frombuffer(payload, dtype=_RECORD_DTYPE)
            if count == 0 or not arr["opt_len"].any():
                positions = arr["position"].astype(np.float64)
                rotations = arr["rotation"].astype(np.float64)
                scales = arr["scale"].astype(np.float64)
                opacities = arr["opacity"].astype(np.float64)
                sh = arr["sh"].astype(np.float64)
                validate_gaussian_arrays(positions, rotations, scales, opacities, sh)
                return encoded_id, [
                    unchecked_gaussian(
                        positions[i], rotations[i], scales[i], float(opacities[i]), sh[i]
                    )
                    for i in range(count)
                ]
        gaussians = []
        offset = 0
        for _ in range(count):
            if offset + _RECORD_FIXED.size > len(payload):
                raise CorruptChunk("chunk record truncated")
            fields = _RECORD_FIXED.unpack_from(payload, offset)
            offset += _RECORD_FIXED.size
            opt_len = fields[-1]
            if offset + opt_len > len(payload):
                raise CorruptChunk("chunk opt_state truncated")
            opt_state = payload[offset : offset + opt_len]
            offset += opt_len
            gaussians.append(
                Gaussian(
                    position=np.array(fields[0:3], dtype=np.float64),
                    rotation=np.array(fields[3:7], dtype=np.float64),
                    scale=np.array(fields[7:10], dtype=np.float64),
                    opacity=float(fields[10]),
                    sh=np.array(fields[11:59], dtype=np.float64),
                    opt_state=opt_state,
                )
            )
        if offset != len(payload):
            raise CorruptChunk("chunk file has trailing bytes")
        return encoded_id, gaussians
    except ValueError as exc:  # invariant violations from garbage bytes
        raise CorruptChunk(f"chunk record fails invariants: {exc}") from exc


def read_chunk_header(data: bytes) -> tuple[int, int]:
    """(encoded id, gaussian count) from the first 32 bytes of a chunk file."""
    _check_header(data, CHUNK_MAGIC, _CHUNK_HEADER.size, "chunk")
    _, version, encoded_id, count, _reserved = _CHUNK_HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise CorruptChunk(f"unsupported chunk format version {version}")
    return encoded_id, count


def pack_keyframe(kf: Keyframe) -> bytes:
    intr = kf.intrinsics
    header = _KF_HEADER.pack(
        KEYFRAME_MAGIC,
        FORMAT_VERSION,
        kf.id,
        *kf.pose.translation,
        *kf.pose.rotation,
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        intr.near,
        intr.far,
        intr.width,
        intr.height,
        kf.last_loss,
        kf.usage_remaining,
    )
    rgb_u8 = np.clip(np.round(kf.rgb.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    return header + rgb_u8.tobytes() + kf.depth.astype("<f4").tobytes()


def unpack_keyframe(data: bytes) -> Keyframe:
    _check_header(data, KEYFRAME_MAGIC, _KF_HEADER.size, "keyframe")
    fields = _KF_HEADER.unpack_from(data, 0)
    version = fields[1]
    if version != FORMAT_VERSION:
        raise CorruptChunk(f"unsupported keyframe format version {version}")
    kf_id = fields[2]
    tx, ty, tz, qw, qx, qy, qz = fields[3:10]
    fx, fy, cx, cy, near, far = fields[10:16]
    width, height = fields[16], fields[17]
    last_loss, usage = fields[18], fields[19]
    n_rgb = height * width * 3
    n_depth = height * width * 4
    offset = _KF_HEADER.size
    if len(data) != offset + n_rgb + n_depth:
        raise CorruptChunk("keyframe payload truncated or oversized")
    rgb = np.frombuffer(data, dtype=np.uint8, count=n_rgb, offset=offset)
    depth = np.frombuffer(data, dtype="<f4", count=height * width, offset=offset + n_rgb)
    try:
        return Keyframe(
            id=kf_id,
            pose=Pose(rotation=np.array([qw, qx, qy, qz]), translation=np.array([tx, ty, tz])),
            intrinsics=CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height, near=near, far=far),
            rgb=rgb.reshape(height, width, 3).astype(np.float32) / np.float32(255.0),
            depth=depth.reshape(height, width).astype(np.float32),
            last_loss=last_loss,
            usage_remaining=usage,
        )
    except ValueError as exc:
        raise CorruptChunk(f"keyframe fields fail invariants: {exc}") from exc
