"""Spatial-grid keyframe candidates, chunk-overlap scoring, and weighted pick.

Keyframes are bucketed on a coarse grid (cell = element-wise floor(p / g),
deliberately not center-shifted like the chunk grid).  Candidates for an
optimization step are the keyframes sharing the latest keyframe's cell; among
those with usage allocations left, one is drawn with probability proportional
to its last loss.  High-loss keyframes earn bonus allocations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCandidates, UndefinedOverlap, UnknownKeyframe

__all__ = ["SelectConfig", "KeyframeIndex", "grid_cell", "candidate_set", "overlap",
           "select_keyframe", "record_loss"]

# Zero-loss keyframes keep a tiny weight so they stay selectable.
_LOSS_WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class SelectConfig:
    grid_resolution_m: float = 200.0
    initial_usage: int = 8
    bonus_usage: int = 4
    loss_bonus_quantile: float = 0.5

    def __post_init__(self):
        if self.grid_resolution_m <= 0:
            raise ValueError("grid_resolution_m must be positive")
        if self.initial_usage < 1 or self.bonus_usage < 1:
            raise ValueError("usage allocations must be >= 1")
        if not (0.0 < self.loss_bonus_quantile < 1.0):
            raise ValueError("loss_bonus_quantile must be in (0,1)")


def grid_cell(p, g: float) -> tuple[int, int, int]:
    """Element-wise floor(p / g); no center shift."""
    if g <= 0:
        raise ValueError("grid resolution must be positive")
    x, y, z = (float(v) for v in p)
    return (math.floor(x / g), math.floor(y / g), math.floor(z / g))


@dataclass
class _Entry:
    id: int
    position: np.ndarray
    cell: tuple[int, int, int]
    usage_remaining: int
    last_loss: float


@dataclass
class KeyframeIndex:
    """Lightweight per-keyframe selection state, bucketed by grid cell.

    Single-writer: concurrent reads are fine between mutations, mutating
    calls (add, update_position, select_keyframe, record_loss) are not.
    """

    config: SelectConfig = field(default_factory=SelectConfig)
    _entries: dict[int, _Entry] = field(default_factory=dict)
    _cells: dict[tuple[int, int, int], list[int]] = field(default_factory=dict)

    def add(self, kf_id: int, position, usage_remaining: int | None = None,
            last_loss: float = 0.0) -> None:
        if kf_id in self._entries:
            raise ValueError(f"keyframe {kf_id} already indexed")
        pos = np.asarray(position, dtype=np.float64).reshape(3).copy()
        cell = grid_cell(pos, self.config.grid_resolution_m)
        usage = self.config.initial_usage if usage_remaining is None else int(usage_remaining)
        self._entries[kf_id] = _Entry(kf_id, pos, cell, usage, float(last_loss))
        self._cells.setdefault(cell, []).append(kf_id)

    def update_position(self, kf_id: int, position) -> None:
        e = self._require(kf_id)
        pos = np.asarray(position, dtype=np.float64).reshape(3).copy()
        cell = grid_cell(pos, self.config.grid_resolution_m)
        if cell != e.cell:
            self._cells[e.cell].remove(kf_id)
            if not self._cells[e.cell]:
                del self._cells[e.cell]
            self._cells.setdefault(cell, []).append(kf_id)
            e.cell = cell
        e.position = pos

    def _require(self, kf_id: int) -> _Entry:
        try:
            return self._entries[kf_id]
        except KeyError:
            raise UnknownKeyframe(f"keyframe {kf_id} not in index") from None

    def ids(self) -> list[int]:
        return list(self._entries)

    def position_of(self, kf_id: int) -> np.ndarray:
        return self._require(kf_id).position

    def usage_of(self, kf_id: int) -> int:
        return self._require(kf_id).usage_remaining

    def loss_of(self, kf_id: int) -> float:
        return self._require(kf_id).last_loss

    def cell_members(self, cell: tuple[int, int, int]) -> list[int]:
        return list(self._cells.get(cell, ()))


def candidate_set(p_latest, idx: KeyframeIndex) -> list[int]:
    """Keyframes sharing the grid cell of p_latest, in insertion order."""
    cell = grid_cell(p_latest, idx.config.grid_resolution_m)
    members = idx.cell_members(cell)
    if not members:
        raise EmptyCandidates(f"no keyframe in grid cell {cell}")
    return members


def overlap(visible: set[int], active: set[int]) -> float:
    """Fraction of the visible chunk set already in the active tier."""
    if not visible:
        raise UndefinedOverlap("overlap is undefined for an empty visible set")
    return len(visible & active) / len(visible)


def select_keyframe(candidates: list[int], idx: KeyframeIndex, rng_seed: int) -> int:
    """Draw one candidate, loss-weighted among those with usage left.

    When every candidate is exhausted, all are replenished to the configured
    initial usage first.  The draw is deterministic for a given seed.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    eligible = [c for c in candidates if idx.usage_of(c) > 0]
    if not eligible:
        for c in candidates:
            idx._require(c).usage_remaining = idx.config.initial_usage
        eligible = list(candidates)
    weights = np.array([max(idx.loss_of(c), _LOSS_WEIGHT_FLOOR) for c in eligible])
    probs = weights / weights.sum()
    rng = np.random.default_rng(rng_seed)
    chosen = eligible[int(rng.choice(len(eligible), p=probs))]
    idx._require(chosen).usage_remaining -= 1
    return chosen


def record_loss(kf_id: int, loss: float, idx: KeyframeIndex) -> None:
    """Update a keyframe's loss; grant bonus usage on strict quantile excess.

    The quantile is taken over the current losses of the keyframe's cell,
    including the value just recorded, so a lone keyframe never outruns its
    own median.
    """
    if loss < 0 or not math.isfinite(loss):
        raise ValueError(f"loss must be finite and >= 0, got {loss}")
    entry = idx._require(kf_id)
    entry.last_loss = float(loss)
    cell_losses = [idx.loss_of(m) for m in idx.cell_members(entry.cell)]
    threshold = float(np.quantile(cell_losses, idx.config.loss_bonus_quantile))
    if loss > threshold:
        entry.usage_remaining += idx.config.bonus_usage
