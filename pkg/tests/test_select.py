"""Keyframe candidate grid, overlap score, and usage/loss-weighted selection."""

import numpy as np
import pytest

from splatmap.errors import EmptyCandidates, UndefinedOverlap, UnknownKeyframe
from splatmap.select import (
    KeyframeIndex,
    SelectConfig,
    candidate_set,
    grid_cell,
    overlap,
    record_loss,
    select_keyframe,
)


class TestGridCell:
    def test_origin(self):
        assert grid_cell((0.0, 0.0, 0.0), 200.0) == (0, 0, 0)

    def test_hand_floor(self):
        assert grid_cell((250.0, 50.0, 0.0), 200.0) == (1, 0, 0)

    def test_negative_floor(self):
        assert grid_cell((-1.0, 0.0, 0.0), 200.0) == (-1, 0, 0)

    def test_not_center_shifted(self):
        # the chunk grid (Eq-5 style) would put 99 m into cell 1 with g=100;
        # the keyframe grid does not shift by half a cell
        assert grid_cell((99.0, 0.0, 0.0), 100.0) == (0, 0, 0)


class TestCandidateSet:
    def make_index(self, positions, g=200.0):
        idx = KeyframeIndex(config=SelectConfig(grid_resolution_m=g))
        for i, p in enumerate(positions):
            idx.add(i, p)
        return idx

    def test_same_cell_members(self):
        idx = self.make_index([(0, 0, 0), (50, 0, 0), (250, 0, 0)])
        assert candidate_set((10.0, 0.0, 0.0), idx) == [0, 1]

    def test_single_keyframe_own_position(self):
        idx = self.make_index([(5, 5, 5)])
        assert candidate_set((5.0, 5.0, 5.0), idx) == [0]

    def test_empty_cell_raises(self):
        idx = self.make_index([(0, 0, 0)])
        with pytest.raises(EmptyCandidates):
            candidate_set((1000.0, 0.0, 0.0), idx)

    def test_matches_brute_force_over_random_layouts(self):
        rng = np.random.default_rng(40)
        for _ in range(100):
            g = float(rng.uniform(50, 300))
            positions = rng.uniform(-800, 800, size=(int(rng.integers(1, 40)), 3))
            idx = KeyframeIndex(config=SelectConfig(grid_resolution_m=g))
            for i, p in enumerate(positions):
                idx.add(i, p)
            query = positions[int(rng.integers(0, len(positions)))]
            expected = [i for i, p in enumerate(positions)
                        if grid_cell(p, g) == grid_cell(query, g)]
            assert sorted(candidate_set(query, idx)) == expected


class TestOverlap:
    def test_half(self):
        assert overlap({1, 2, 3, 4}, {2, 3}) == 0.5

    def test_subset_is_one(self):
        assert overlap({1, 2}, {1, 2, 3}) == 1.0

    def test_disjoint_is_zero(self):
        assert overlap({1, 2}, {3, 4}) == 0.0

    def test_empty_visible_raises(self):
        with pytest.raises(UndefinedOverlap):
            overlap(set(), {1})

    def test_range_and_subset_iff_one(self):
        rng = np.random.default_rng(41)
        for _ in range(200):
            universe = list(range(20))
            visible = set(rng.choice(universe, size=int(rng.integers(1, 10)), replace=False))
            active = set(rng.choice(universe, size=int(rng.integers(0, 15)), replace=False))
            v = overlap(visible, active)
            assert 0.0 <= v <= 1.0
            assert (v == 1.0) == visible.issubset(active)


class TestSelectKeyframe:
    def test_single_candidate_decrements(self):
        idx = KeyframeIndex()
        idx.add(3, (0, 0, 0), usage_remaining=5, last_loss=1.0)
        assert select_keyframe([3], idx, rng_seed=0) == 3
        assert idx.usage_of(3) == 4

    def test_loss_weighted_three_to_one(self):
        cfg = SelectConfig(initial_usage=100_000)
        idx = KeyframeIndex(config=cfg)
        idx.add(0, (0, 0, 0), usage_remaining=100_000, last_loss=3.0)
        idx.add(1, (1, 0, 0), usage_remaining=100_000, last_loss=1.0)
        picks = np.array([select_keyframe([0, 1], idx, rng_seed=s) for s in range(10_000)])
        counts = np.bincount(picks, minlength=2)
        ratio = counts[0] / counts[1]
        assert abs(ratio - 3.0) / 3.0 < 0.05

    def test_replenish_when_exhausted(self):
        cfg = SelectConfig(initial_usage=8)
        idx = KeyframeIndex(config=cfg)
        idx.add(0, (0, 0, 0), usage_remaining=0, last_loss=1.0)
        idx.add(1, (1, 0, 0), usage_remaining=0, last_loss=1.0)
        chosen = select_keyframe([0, 1], idx, rng_seed=5)
        assert idx.usage_of(chosen) == cfg.initial_usage - 1
        other = 1 - chosen
        assert idx.usage_of(other) == cfg.initial_usage

    def test_usage_conservation_between_replenishments(self):
        cfg = SelectConfig(initial_usage=4)
        idx = KeyframeIndex(config=cfg)
        for i in range(3):
            idx.add(i, (float(i), 0, 0), usage_remaining=4, last_loss=1.0)
        total = 12
        for draw in range(total):
            select_keyframe([0, 1, 2], idx, rng_seed=draw)
        assert sum(idx.usage_of(i) for i in range(3)) == 0

    def test_never_returns_outside_candidates(self):
        idx = KeyframeIndex()
        for i in range(6):
            idx.add(i, (float(i), 0, 0), last_loss=float(i))
        for s in range(200):
            assert select_keyframe([1, 4], idx, rng_seed=s) in (1, 4)

    def test_zero_loss_keyframes_remain_selectable(self):
        idx = KeyframeIndex()
        idx.add(0, (0, 0, 0), usage_remaining=10, last_loss=0.0)
        idx.add(1, (1, 0, 0), usage_remaining=10, last_loss=0.0)
        picks = {select_keyframe([0, 1], idx, rng_seed=s) for s in range(50)}
        assert picks == {0, 1}

    def test_deterministic_per_seed(self):
        def build():
            idx = KeyframeIndex()
            idx.add(0, (0, 0, 0), usage_remaining=100, last_loss=2.0)
            idx.add(1, (1, 0, 0), usage_remaining=100, last_loss=1.0)
            return idx
        a = [select_keyframe([0, 1], build(), rng_seed=s) for s in range(100)]
        b = [select_keyframe([0, 1], build(), rng_seed=s) for s in range(100)]
        assert a == b


class TestRecordLoss:
    def make_cell(self, losses):
        idx = KeyframeIndex(config=SelectConfig())
        for i, loss in enumerate(losses):
            idx.add(i, (float(i), 0, 0), usage_remaining=8, last_loss=loss)
        return idx

    def test_below_median_no_bonus(self):
        idx = self.make_cell([1.0, 2.0, 3.0])
        record_loss(0, 0.5, idx)
        assert idx.usage_of(0) == 8
        assert idx.loss_of(0) == 0.5

    def test_above_median_gets_bonus(self):
        idx = self.make_cell([1.0, 2.0, 3.0])
        record_loss(0, 10.0, idx)
        assert idx.usage_of(0) == 8 + idx.config.bonus_usage

    def test_single_keyframe_is_its_own_median_no_bonus(self):
        idx = self.make_cell([1.0])
        record_loss(0, 5.0, idx)  # after update the cell median IS 5.0
        assert idx.usage_of(0) == 8
        assert idx.loss_of(0) == 5.0

    def test_unknown_keyframe(self):
        idx = self.make_cell([1.0])
        with pytest.raises(UnknownKeyframe):
            record_loss(42, 1.0, idx)

    def test_rejects_negative_loss(self):
        idx = self.make_cell([1.0])
        with pytest.raises(ValueError):
            record_loss(0, -0.1, idx)
