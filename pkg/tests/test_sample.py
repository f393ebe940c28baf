"""LoG scoring, sampling probability, pixel draws, and depth lifting."""

import numpy as np
import pytest

from splatmap.core import CameraIntrinsics, Keyframe, Pose, quat_normalize
from splatmap.errors import DimensionMismatch
from splatmap.sample import (
    SampleConfig,
    lift_to_gaussians,
    log_kernel,
    log_norm,
    sample_pixels,
    sampling_probability,
)

SH_C0 = 0.28209479177


def direct_convolution_log(rgb, sigma=1.0, radius=2):
    """Independent oracle: explicit zero-padded convolution loops."""
    gray = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    kernel = log_kernel(sigma, radius)
    h, w = gray.shape
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        acc += kernel[dr + radius, dc + radius] * gray[rr, cc]
            out[r, c] = abs(acc)
    peak = out.max()
    return out / peak if peak > 0 else out


class TestLogNorm:
    def test_black_image_is_all_zero(self):
        assert not log_norm(np.zeros((12, 12, 3))).any()

    def test_constant_image_zero_away_from_border(self):
        # zero padding fabricates an edge at the image border; the interior
        # response of a constant image is exactly zero
        out = log_norm(np.full((16, 16, 3), 0.5), radius=2)
        assert np.allclose(out[2:-2, 2:-2], 0.0, atol=1e-12)

    def test_single_bright_pixel_peaks_there(self):
        img = np.zeros((15, 15, 3))
        img[7, 7] = 1.0
        out = log_norm(img)
        peak = np.unravel_index(np.argmax(out), out.shape)
        assert abs(peak[0] - 7) <= 1 and abs(peak[1] - 7) <= 1
        assert out.max() == 1.0

    def test_step_edge_response_is_banded(self):
        img = np.zeros((16, 16, 3))
        img[:, 8:] = 0.8
        # interior rows/columns only: zero padding fabricates edges at borders
        out = log_norm(img, radius=2)[2:-2, :]
        assert out[:, 6:10].max() > 0.5
        assert np.allclose(out[:, :4], 0.0, atol=1e-12)
        assert np.allclose(out[:, 11:14], 0.0, atol=1e-12)

    def test_matches_direct_convolution_oracle(self):
        rng = np.random.default_rng(50)
        img = rng.random((10, 12, 3))
        assert np.allclose(log_norm(img), direct_convolution_log(img), atol=1e-12)

    def test_rejects_grayscale_input(self):
        with pytest.raises(DimensionMismatch):
            log_norm(np.zeros((8, 8)))


class TestSamplingProbability:
    def test_equal_maps_cancel(self):
        rng = np.random.default_rng(51)
        m = rng.random((9, 9))
        assert not sampling_probability(m, m).any()

    def test_zero_render_passes_input_through(self):
        rng = np.random.default_rng(52)
        m = rng.random((9, 9))
        assert np.array_equal(sampling_probability(m, np.zeros_like(m)), m)

    def test_clamps_at_zero(self):
        a = np.full((4, 4), 0.3)
        b = np.full((4, 4), 0.5)
        assert not sampling_probability(a, b).any()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            sampling_probability(np.zeros((4, 4)), np.zeros((5, 4)))

    def test_bounded_by_input(self):
        rng = np.random.default_rng(53)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        out = sampling_probability(a, b)
        assert (out >= 0).all() and (out <= a + 1e-15).all()


class TestSamplePixels:
    def test_all_zero_map(self):
        assert sample_pixels(np.zeros((6, 6)), 10, rng_seed=0) == []

    def test_concentrated_mass(self):
        ps = np.zeros((5, 5))
        ps[3, 1] = 1.0
        assert sample_pixels(ps, 1, rng_seed=0) == [(3, 1)]

    def test_fewer_positive_pixels_than_requested(self):
        ps = np.zeros((5, 5))
        ps[0, 0] = ps[4, 4] = 1.0
        out = sample_pixels(ps, 10, rng_seed=1)
        assert sorted(out) == [(0, 0), (4, 4)]

    def test_two_to_one_mass_ratio(self):
        ps = np.zeros((2, 2))
        ps[0, 0] = 2.0
        ps[1, 1] = 1.0
        picks = [sample_pixels(ps, 1, rng_seed=s)[0] for s in range(10_000)]
        heavy = sum(1 for p in picks if p == (0, 0))
        light = len(picks) - heavy
        assert abs(heavy / light - 2.0) / 2.0 < 0.05

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(54)
        ps = rng.random((20, 20))
        assert sample_pixels(ps, 30, rng_seed=9) == sample_pixels(ps, 30, rng_seed=9)

    def test_no_repeats(self):
        rng = np.random.default_rng(55)
        ps = rng.random((10, 10))
        out = sample_pixels(ps, 60, rng_seed=2)
        assert len(out) == len(set(out)) == 60


def keyframe_with_depth(pose=None, depth_value=2.0, invalid=()):
    intr = CameraIntrinsics(fx=40.0, fy=40.0, cx=8.0, cy=8.0, width=16, height=16,
                            near=0.1, far=100.0)
    rgb = np.full((16, 16, 3), 0.75)
    depth = np.full((16, 16), depth_value, dtype=np.float32)
    for r, c in invalid:
        depth[r, c] = 0.0
    return Keyframe(id=0, pose=pose or Pose(), intrinsics=intr, rgb=rgb, depth=depth)


class TestLift:
    def test_principal_point_unprojects_on_axis(self):
        kf = keyframe_with_depth()
        out = lift_to_gaussians([(8, 8)], kf, SampleConfig())
        assert len(out) == 1
        assert np.allclose(out[0].position, [0.0, 0.0, 2.0], atol=1e-12)

    def test_translated_camera_shifts_world_point(self):
        kf = keyframe_with_depth(pose=Pose(translation=[1.0, 0.0, 0.0]))
        out = lift_to_gaussians([(8, 8)], kf, SampleConfig())
        assert np.allclose(out[0].position, [1.0, 0.0, 2.0], atol=1e-12)

    def test_invalid_depth_skipped(self):
        kf = keyframe_with_depth(invalid=[(3, 4)])
        out = lift_to_gaussians([(8, 8), (3, 4)], kf, SampleConfig())
        assert len(out) == 1

    def test_output_length_equals_valid_count(self):
        rng = np.random.default_rng(56)
        invalid = {(int(r), int(c)) for r, c in rng.integers(0, 16, size=(30, 2))}
        kf = keyframe_with_depth(invalid=invalid)
        pixels = [(int(r), int(c)) for r, c in rng.integers(0, 16, size=(80, 2))]
        out = lift_to_gaussians(pixels, kf, SampleConfig())
        assert len(out) == sum(1 for p in pixels if p not in invalid)

    def test_color_and_scale_initialization(self):
        cfg = SampleConfig(init_scale_factor=1.0, init_opacity=0.1)
        kf = keyframe_with_depth(depth_value=4.0)
        g = lift_to_gaussians([(8, 8)], kf, cfg)[0]
        expected_color = kf.rgb[8, 8].astype(np.float64)
        assert np.allclose(g.sh[[0, 16, 32]], (expected_color - 0.5) / SH_C0, atol=1e-12)
        assert np.allclose(g.scale, 4.0 / 40.0, atol=1e-12)
        assert g.opacity == 0.1
        assert np.array_equal(g.rotation, [1.0, 0.0, 0.0, 0.0])
        assert not g.sh[[1, 17, 33]].any()

    def test_rotated_pose_unprojection_oracle(self):
        # compare against an independent homogeneous-matrix unprojection
        rng = np.random.default_rng(57)
        pose = Pose(rotation=quat_normalize(rng.normal(size=4)), translation=rng.normal(size=3))
        kf = keyframe_with_depth(pose=pose, depth_value=3.0)
        row, col = 5, 11
        g = lift_to_gaussians([(row, col)], kf, SampleConfig())[0]
        intr = kf.intrinsics
        cam = np.array([(col - intr.cx) / intr.fx * 3.0, (row - intr.cy) / intr.fy * 3.0, 3.0, 1.0])
        world = pose.matrix() @ cam
        assert np.allclose(g.position, world[:3], atol=1e-12)


class TestRedundancySuppression:
    def test_rendering_own_scene_reduces_mass(self):
        from splatmap.renderloss import render
        from splatmap.sample import log_norm as ln
        rng = np.random.default_rng(58)
        intr = CameraIntrinsics(fx=40.0, fy=40.0, cx=16.0, cy=16.0, width=32, height=32,
                                near=0.1, far=100.0)
        gaussians = []
        for _ in range(150):
            sh = np.zeros(48)
            sh[[0, 16, 32]] = (rng.random(3) - 0.5) / SH_C0
            from splatmap.core import Gaussian
            gaussians.append(Gaussian(
                position=np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(3, 8)]),
                scale=np.full(3, 0.15), opacity=0.9, sh=sh))
        frame = render(gaussians, Pose(), intr)
        p_input = ln(frame.rgb)
        mass_vs_empty = sampling_probability(p_input, np.zeros_like(p_input)).sum()
        mass_vs_self = sampling_probability(p_input, ln(frame.rgb)).sum()
        assert mass_vs_self < mass_vs_empty
        assert mass_vs_self == 0.0
