"""
Motion Enhancement: residual between the 3x3-dilated next feature map and the
current one, stacked over T_m steps. Also the plain frame-difference baseline
and the brute-force displacement search the dilation replaces.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from common import logger
from common.errors import ArityError, ConfigError, NumericError, RangeError, ShapeError
from motionforge.tensor import Tensor, conv2d, maxpool2d_3x3, stack_channels, subtract

IDENTITY = "identity"
CONV2D = "conv2d"

# Dx, Dy in {0, +-1} with |Dx| + |Dy| <= 2: the full 3x3 neighbourhood.
ADMISSIBLE_OFFSETS = tuple(
    (dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if abs(dx) + abs(dy) <= 2
)


@dataclass(frozen=True, eq=False)
class MeConfig:
    transform: str = IDENTITY
    weights: np.ndarray | None = field(default=None, repr=False)
    bias: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.transform == IDENTITY:
            if self.weights is not None or self.bias is not None:
                raise ConfigError("identity transform takes no weights")
            return
        if self.transform != CONV2D:
            raise ConfigError(f"unknown ME transform {self.transform!r}")
        weights = np.asarray(self.weights, dtype=np.float32)
        bias = np.asarray(self.bias, dtype=np.float32)
        if weights.ndim != 4 or weights.shape[1] != 3 or weights.shape[2] != weights.shape[3]:
            raise ShapeError("ME conv weights", "C_out x 3 x k x k", weights.shape)
        if weights.shape[2] % 2 == 0:
            raise ConfigError(f"ME conv kernel must be odd, got {weights.shape[2]}")
        if bias.shape != (weights.shape[0],):
            raise ShapeError("ME conv bias", (weights.shape[0],), bias.shape)
        if not (np.isfinite(weights).all() and np.isfinite(bias).all()):
            raise NumericError("ME conv parameters must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @classmethod
    def identity(cls) -> "MeConfig":
        return cls()

    @classmethod
    def conv2d(cls, weights, bias) -> "MeConfig":
        return cls(CONV2D, weights, bias)

    @property
    def channels(self) -> int:
        return 3 if self.transform == IDENTITY else self.weights.shape[0]

    def describe(self) -> dict:
        if self.transform == IDENTITY:
            return {"transform": IDENTITY}
        return {"transform": CONV2D, "out_channels": self.channels, "kernel": int(self.weights.shape[2])}

    def apply(self, frame: Tensor) -> Tensor:
        if self.transform == IDENTITY:
            return frame
        k = self.weights.shape[2]
        out = conv2d(frame.data[np.newaxis], self.weights, self.bias, stride=1, padding=k // 2)[0]
        if not np.isfinite(out).all():
            raise NumericError("ME conv transform produced non-finite values")
        return Tensor(out, "CHW")


@dataclass(frozen=True, eq=False)
class MotionFeatures:
    tensor: Tensor
    t_m: int
    config: MeConfig

    def __post_init__(self):
        if self.tensor.shape[0] != self.t_m * self.config.channels:
            raise ShapeError("motion feature channels", self.t_m * self.config.channels, self.tensor.shape[0])


def _check_frames(frames, op: str):
    if len(frames) < 2:
        raise ArityError(f"{op} needs at least 2 frames, got {len(frames)}")
    first = frames[0].shape
    for index, frame in enumerate(frames):
        if frame.rank != 3 or frame.shape != first:
            raise ShapeError(f"{op} frame {index}", first, frame.shape)


def rgbdiff(frames: list[Tensor]) -> Tensor:
    """Plain consecutive differences frame[k+1] - frame[k], stacked along channels."""
    _check_frames(frames, "rgbdiff")
    return stack_channels([subtract(b, a) for a, b in zip(frames, frames[1:])])


def motion_enhance(frames: list[Tensor], config: MeConfig | None = None) -> MotionFeatures:
    config = config or MeConfig.identity()
    _check_frames(frames, "motion_enhance")
    if config.transform == IDENTITY:
        for index, frame in enumerate(frames):
            low, high = float(frame.data.min()), float(frame.data.max())
            if low < 0.0 or high > 1.0:
                raise RangeError(f"motion_enhance frame {index}: identity inputs must lie in [0, 1], got [{low}, {high}]")
    features = [config.apply(frame) for frame in frames]
    residuals = [subtract(maxpool2d_3x3(nxt), cur) for cur, nxt in zip(features, features[1:])]
    return MotionFeatures(stack_channels(residuals), len(residuals), config)


def displacement_search_oracle(f_next: Tensor, f_prev: Tensor) -> Tensor:
    """
    Reference residual: per pixel, the max of f_next over every admissible
    displacement (edge-clamped lookups) minus f_prev.
    """
    if f_next.shape != f_prev.shape:
        raise ShapeError("oracle operands", f_prev.shape, f_next.shape)
    if f_next.rank != 3:
        raise ShapeError("oracle input rank", 3, f_next.rank)
    _, height, width = f_next.shape
    rows = np.arange(height)
    cols = np.arange(width)
    best = None
    for dy, dx in ADMISSIBLE_OFFSETS:
        yy = np.clip(rows + dy, 0, height - 1)
        xx = np.clip(cols + dx, 0, width - 1)
        candidate = f_next.data[:, yy[:, None], xx[None, :]]
        best = candidate if best is None else np.maximum(best, candidate)
    return Tensor(best - f_prev.data, "CHW")


def me_stack_map_shape(t_m: int, c: int, h: int, w: int) -> tuple[int, int, int]:
    if min(t_m, c, h, w) < 1:
        raise ConfigError(f"ME stack extents must be positive: {(t_m, c, h, w)}")
    return t_m * c, h, w


def extract_segments(segments: list[list[Tensor]], method: str = "me", config: MeConfig | None = None, threads: int = 1) -> list[Tensor]:
    """Motion features for every gathered segment, one task per segment."""
    if method == "me":
        def run(frames):
            return motion_enhance(frames, config).tensor
    elif method == "rgbdiff":
        run = rgbdiff
    else:
        raise ConfigError(f"unknown motion method {method!r}; expected me or rgbdiff")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, segments))
    return [run(frames) for frames in segments]


def verify_random_pairs(n_pairs: int, max_size: int = 64, seed: int = 0) -> dict:
    """
    Compare motion_enhance against the oracle on random pairs of sizes
    1x1x1 .. 3 x max_size x max_size. Returns counts; mismatches are listed.
    """
    rng = np.random.default_rng(seed)
    mismatches = []
    for index in range(n_pairs):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, max_size + 1)), int(rng.integers(1, max_size + 1)))
        prev = Tensor(rng.random(shape, dtype=np.float32), "CHW")
        nxt = Tensor(rng.random(shape, dtype=np.float32), "CHW")
        if prev.shape[0] == 3:
            fast = motion_enhance([prev, nxt]).tensor
        else:
            fast = subtract(maxpool2d_3x3(nxt), prev)
        slow = displacement_search_oracle(nxt, prev)
        if not np.array_equal(fast.data, slow.data):
            mismatches.append({"pair": index, "shape": shape})
    logger.log(
        "oracle",
        "complete",
        f"Checked {n_pairs} random pairs against the displacement search",
        details={"pairs": n_pairs, "mismatches": len(mismatches), "seed": seed},
    )
    return {"pairs": n_pairs, "mismatches": mismatches}
