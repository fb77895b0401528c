"""
Sparse segment sampling: split a video into N contiguous windows and pick a
burst of `span` consecutive frames from each.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from common.errors import ConfigError, PlanError, SizeError
from motionforge.tensor import Tensor, stack_channels
from motionforge.video_io import VideoClip

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class SegmentPlan:
    n_segments: int
    frames_per_segment: int
    starts: tuple
    mode: str
    seed: int | None
    total_frames: int

    def __post_init__(self):
        if len(self.starts) != self.n_segments:
            raise PlanError(f"{len(self.starts)} starts for {self.n_segments} segments")
        if any(b < a for a, b in zip(self.starts, self.starts[1:])):
            raise PlanError(f"segment starts must be non-decreasing: {self.starts}")
        if self.starts and (self.starts[0] < 0 or self.starts[-1] + self.frames_per_segment > self.total_frames):
            raise PlanError(f"segments overrun a {self.total_frames}-frame video: {self.starts}")

    @property
    def span(self) -> int:
        return self.frames_per_segment

    def indices(self) -> list[list[int]]:
        return [list(range(s, s + self.span)) for s in self.starts]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n_segments,
                "span": self.span,
                "starts": list(self.starts),
                "mode": self.mode,
                "seed": self.seed,
                "total": self.total_frames,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SegmentPlan":
        raw = json.loads(text)
        return cls(raw["n"], raw["span"], tuple(raw["starts"]), raw["mode"], raw["seed"], raw["total"])


def segment_windows(total_frames: int, n: int) -> list[tuple[int, int]]:
    """(start, length) per window; the last window absorbs the remainder."""
    base = total_frames // n
    windows = [(k * base, base) for k in range(n - 1)]
    windows.append(((n - 1) * base, total_frames - (n - 1) * base))
    return windows


def plan_segments(total_frames: int, n: int, span: int, mode: str = EVAL, seed: int | None = None) -> SegmentPlan:
    if n < 1 or span < 1:
        raise ConfigError(f"segments and span must be positive, got n={n} span={span}")
    if mode not in (TRAIN, EVAL):
        raise ConfigError(f"unknown sampling mode {mode!r}")
    if total_frames < span:
        raise SizeError(f"insufficient frames: {total_frames} < span {span}")
    if mode == TRAIN and seed is None:
        seed = 0

    rng = np.random.default_rng(seed) if mode == TRAIN else None
    latest = total_frames - span
    starts = []
    for window_start, window_len in segment_windows(total_frames, n):
        room = window_len - span
        if room < 0:
            start = window_start
        elif rng is not None:
            start = int(rng.integers(window_start, window_start + room + 1))
        else:
            start = window_start + room // 2
        starts.append(min(start, latest))
    return SegmentPlan(n, span, tuple(starts), mode, seed if mode == TRAIN else None, total_frames)


def gather(clip: VideoClip, plan: SegmentPlan) -> list[list[Tensor]]:
    if plan.total_frames != len(clip):
        raise PlanError(f"plan made for {plan.total_frames} frames applied to a {len(clip)}-frame clip")
    return [[clip.frames[i] for i in segment] for segment in plan.indices()]


def rgb_super(frames: list[Tensor]) -> Tensor:
    """Stack consecutive RGB frames along channels: (3*len) x H x W."""
    return stack_channels(frames)
