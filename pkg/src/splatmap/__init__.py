"""Out-of-core chunked map store for 3D Gaussian scenes.

Gaussians live in cubic spatial chunks paged between a budgeted in-memory
tier and disk; frustum culling decides what is resident, a spatial keyframe
grid keeps optimization I/O local, and loop-closure corrections move whole
chunk neighborhoods while keeping the map consistent.  The ``sim`` module
replays trajectories through the whole loop and emits per-step metrics.
"""

from .core import (
    CameraIntrinsics,
    Gaussian,
    Keyframe,
    Pose,
    RigidTransform,
    pose_compose,
    pose_inverse,
    transform_gaussian,
)
from .culling import ChunkExtent, CullConfig, Frustum, VisibilityCache, extract_frustum, visible_chunks
from .grid import ChunkCoord, assign_gaussians, chunk_aabb, chunk_coord, decode_id, encode_id
from .loopclose import CorrectionMode, CorrectionSet, run_correction
from .renderloss import (
    LossWeights,
    RenderedFrame,
    SceneArrays,
    depth_loss,
    image_loss,
    render,
    render_arrays,
    scene_arrays,
    ssim,
    total_loss,
)
from .sample import SampleConfig, lift_to_gaussians, log_norm, sample_pixels, sampling_probability
from .select import KeyframeIndex, SelectConfig, candidate_set, overlap, record_loss, select_keyframe
from .sim import ReplayConfig, SyntheticScene, generate_synthetic, report, run_replay
from .store import ChunkStore, StoreConfig

__version__ = "0.1.0"
