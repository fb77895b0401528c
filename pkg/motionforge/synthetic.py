"""
Synthetic clips: a textured square or disc translating over a flat background.
Motion wraps around the frame borders, so the object position is uniformly
distributed at every time step and a single frame says nothing about direction.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from common.errors import ConfigError
from motionforge.video_io import VideoClip

DIRECTIONS = ("up", "down", "left", "right")
SHAPES = ("square", "disc")
STEPS = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}


@dataclass(frozen=True, eq=False)
class SyntheticClip:
    clip: VideoClip
    shape: str
    direction: str
    positions: tuple  # (top, left) of the object per frame, before wrapping
    object_size: int


def object_mask(shape: str, side: int) -> np.ndarray:
    if shape == "square":
        return np.ones((side, side), dtype=bool)
    if shape == "disc":
        centre = (side - 1) / 2.0
        yy, xx = np.mgrid[0:side, 0:side]
        return (yy - centre) ** 2 + (xx - centre) ** 2 <= (side / 2.0) ** 2
    raise ConfigError(f"unknown synthetic shape {shape!r}; expected one of {SHAPES}")


def render_clip(
    shape: str,
    direction: str,
    rng: np.random.Generator,
    size: int = 64,
    frames: int = 40,
    speed: int = 2,
    object_size: int | None = None,
    textured: bool = True,
    position: tuple | None = None,
) -> SyntheticClip:
    if direction not in STEPS:
        raise ConfigError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
    side = object_size or max(3, size * 5 // 16)
    if side > size:
        raise ConfigError(f"object of side {side} does not fit a {size}x{size} frame")

    background = rng.uniform(0.05, 0.35, size=3)
    if textured:
        texture = rng.uniform(0.55, 1.0, size=(3, side, side))
    else:
        texture = np.ones((3, side, side))
    mask = np.zeros((size, size), dtype=bool)
    mask[:side, :side] = object_mask(shape, side)
    layer = np.zeros((3, size, size))
    layer[:, :side, :side] = texture

    if position is None:
        position = (int(rng.integers(0, size)), int(rng.integers(0, size)))
    dy, dx = STEPS[direction]
    array = np.empty((frames, 3, size, size), dtype=np.float32)
    positions = []
    for t in range(frames):
        top = position[0] + dy * speed * t
        left = position[1] + dx * speed * t
        positions.append((top, left))
        m = np.roll(mask, (top, left), axis=(0, 1))
        obj = np.roll(layer, (top, left), axis=(1, 2))
        array[t] = np.where(m, obj, background[:, None, None])
    clip = VideoClip.from_array(array, Fraction(25), f"synthetic:{shape}:{direction}")
    return SyntheticClip(clip, shape, direction, tuple(positions), side)


def static_clip(rng: np.random.Generator, size: int = 32, frames: int = 5) -> VideoClip:
    """Every frame identical random texture."""
    frame = rng.random((3, size, size), dtype=np.float32)
    return VideoClip.from_array(np.repeat(frame[np.newaxis], frames, axis=0), Fraction(25), "synthetic:static")
