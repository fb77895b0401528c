"""Seeded synthetic classification sets built from motionforge.synthetic clips."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from common import config
from common.errors import ConfigError
from motionforge.synthetic import DIRECTIONS, SHAPES, render_clip
from motionforge.video_io import VideoClip

FULL = "full"
DIRECTION = "direction"
TASKS = (FULL, DIRECTION)
_DEFAULTS = config.DEFAULTS["train-toy"]


@dataclass(eq=False)
class SyntheticDataset:
    """
    `full`: 8 classes, shape x direction (label = 4 * shape + direction).
    `direction`: 4 classes, shape drawn at random per clip.
    """

    n_clips: int
    seed: int = 0
    task: str = FULL
    size: int = _DEFAULTS["data.size"]
    frames: int = _DEFAULTS["data.frames"]
    speed: int = _DEFAULTS["data.speed"]
    clips: list[VideoClip] = field(init=False, repr=False)
    labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.n_clips < 1:
            raise ConfigError(f"dataset needs at least one clip, got {self.n_clips}")
        rng = np.random.default_rng([self.seed, self.size, self.frames])
        self.labels = rng.permutation(np.arange(self.n_clips) % self.n_classes).astype(np.int64)
        self.clips = []
        for index, label in enumerate(self.labels):
            clip_rng = np.random.default_rng([self.seed, index, 1])
            if self.task == FULL:
                shape, direction = SHAPES[label // 4], DIRECTIONS[label % 4]
            else:
                shape, direction = SHAPES[int(clip_rng.integers(len(SHAPES)))], DIRECTIONS[label]
            rendered = render_clip(shape, direction, clip_rng, size=self.size, frames=self.frames, speed=self.speed)
            self.clips.append(rendered.clip)

    @property
    def n_classes(self) -> int:
        return len(SHAPES) * len(DIRECTIONS) if self.task == FULL else len(DIRECTIONS)

    def class_names(self) -> list[str]:
        if self.task == FULL:
            return [f"{shape}-{direction}" for shape in SHAPES for direction in DIRECTIONS]
        return list(DIRECTIONS)

    def describe(self) -> dict:
        return {
            "n_clips": self.n_clips,
            "seed": self.seed,
            "task": self.task,
            "size": self.size,
            "frames": self.frames,
            "speed": self.speed,
        }

    def __len__(self) -> int:
        return self.n_clips
