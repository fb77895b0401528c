"""
Video-Level Aggregation: global spatial max, temporal 1D max, temporal channel
shift and per-group scalar gating over a sequence of segment feature maps.

The Tensor-level operations are the public API; the array-level
forward/backward pairs below them take an optional leading batch axis and are
what the training network uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from common.errors import ConfigError, ShapeError
from motionforge.tensor import (
    Tensor,
    spatial_maxpool_global,
    temporal_maxpool1d,
    temporal_windows,
)


@dataclass(frozen=True)
class ShiftConfig:
    group_fraction: Fraction = Fraction(1, 4)
    boundary: str = "zero"

    def __post_init__(self):
        fraction = Fraction(self.group_fraction).limit_denominator(1000)
        if not 0 < fraction <= Fraction(1, 3):
            raise ConfigError(f"group_fraction must lie in (0, 1/3], got {fraction}")
        if self.boundary != "zero":
            raise ConfigError(f"only zero-fill boundaries are supported, got {self.boundary!r}")
        object.__setattr__(self, "group_fraction", fraction)

    @classmethod
    def parse(cls, raw) -> "ShiftConfig":
        try:
            return cls(Fraction(str(raw)))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse group fraction {raw!r}") from exc

    def fold(self, channels: int) -> int:
        """Channels per shifted group: floor(C * group_fraction)."""
        c = channels * self.group_fraction.numerator // self.group_fraction.denominator
        if c < 1 or 2 * c > channels:
            minimum = math.ceil(1 / self.group_fraction)
            raise ConfigError(f"channel shift needs C >= {minimum} for fraction {self.group_fraction}, got C={channels}")
        return c


@dataclass(frozen=True)
class GroupWeights:
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(w) for w in (self.w1, self.w2, self.w3)):
            raise ConfigError(f"group weights must be finite: {(self.w1, self.w2, self.w3)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.w3], dtype=np.float64)


# --- array-level rules (shape (..., C, T)) ------------------------------------

def shift_forward(x: np.ndarray, c: int) -> np.ndarray:
    out = np.zeros_like(x)
    out[..., :c, 1:] = x[..., :c, :-1]
    out[..., c:2 * c, :-1] = x[..., c:2 * c, 1:]
    out[..., 2 * c:, :] = x[..., 2 * c:, :]
    return out


def shift_backward(grad: np.ndarray, c: int) -> np.ndarray:
    """Adjoint of shift_forward: the opposite shift, also zero-filled."""
    out = np.zeros_like(grad)
    out[..., :c, :-1] = grad[..., :c, 1:]
    out[..., c:2 * c, 1:] = grad[..., c:2 * c, :-1]
    out[..., 2 * c:, :] = grad[..., 2 * c:, :]
    return out


def _group_scale(channels: int, c: int, w: np.ndarray, dtype) -> np.ndarray:
    scale = np.empty(channels, dtype=dtype)
    scale[:c] = w[0]
    scale[c:2 * c] = w[1]
    scale[2 * c:] = w[2]
    return scale[:, np.newaxis]


def weight_groups_forward(x: np.ndarray, w: np.ndarray, c: int) -> np.ndarray:
    return x * _group_scale(x.shape[-2], c, w, x.dtype)


def weight_groups_backward(grad: np.ndarray, x: np.ndarray, w: np.ndarray, c: int):
    dx = grad * _group_scale(x.shape[-2], c, w, grad.dtype)
    prod = grad * x
    dw = np.array(
        [prod[..., :c, :].sum(), prod[..., c:2 * c, :].sum(), prod[..., 2 * c:, :].sum()],
        dtype=np.float64,
    )
    return dx, dw


def spatial_max_forward(x: np.ndarray):
    """(..., T, C, H, W) -> (..., C, T) plus flat argmax indices over H*W."""
    flat = x.reshape(*x.shape[:-2], -1)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., np.newaxis], axis=-1)[..., 0]
    return np.swapaxes(out, -1, -2), idx


def spatial_max_backward(grad: np.ndarray, idx: np.ndarray, spatial: tuple) -> np.ndarray:
    g = np.swapaxes(grad, -1, -2)
    out = np.zeros((*g.shape, spatial[0] * spatial[1]), dtype=grad.dtype)
    np.put_along_axis(out, idx[..., np.newaxis], g[..., np.newaxis], axis=-1)
    return out.reshape(*g.shape, *spatial)


def temporal_max_forward(x: np.ndarray, kernel: int, stride: int):
    """(..., C, N) -> (..., C, T') plus the source time index of each max."""
    windows = temporal_windows(x, kernel, stride)
    local = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, local[..., np.newaxis], axis=-1)[..., 0]
    source = local + np.arange(windows.shape[-2]) * stride
    return out, source


def temporal_max_backward(grad: np.ndarray, source: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((*grad.shape[:-1], n), dtype=grad.dtype)
    # windows never overlap at the default geometry, but accumulate to stay exact when they do
    lead = np.indices(grad.shape)
    np.add.at(out, (*lead[:-1], source), grad)
    return out


# --- Tensor-level API ----------------------------------------------------------

def channel_shift(f: Tensor, cfg: ShiftConfig) -> Tensor:
    if f.rank != 2:
        raise ShapeError("channel_shift input rank", 2, f.rank)
    return Tensor(shift_forward(f.data, cfg.fold(f.shape[0])), "CT")


def group_weighted_sum(shifted: Tensor, w: GroupWeights, cfg: ShiftConfig) -> Tensor:
    if shifted.rank != 2:
        raise ShapeError("group_weighted_sum input rank", 2, shifted.rank)
    c = cfg.fold(shifted.shape[0])
    return Tensor(weight_groups_forward(shifted.data.astype(np.float64), w.as_array(), c), "CT")


@dataclass(frozen=True, eq=False)
class VlaTrace:
    stacked: Tensor
    pooled_spatial: Tensor
    pooled: Tensor
    shifted: Tensor
    output: Tensor


def vla_trace(segment_features: list[Tensor], cfg: ShiftConfig, w: GroupWeights, pool: tuple = (2, 2)) -> VlaTrace:
    if not segment_features:
        raise ShapeError("vla segment count", ">= 1", 0)
    first = segment_features[0].shape
    for index, feature in enumerate(segment_features):
        if feature.rank != 3 or feature.shape != first:
            raise ShapeError(f"vla segment {index} features", first, feature.shape)
    kernel, stride = pool
    stacked = Tensor(np.stack([feature.data for feature in segment_features]), "TCHW")
    pooled_spatial = spatial_maxpool_global(stacked)
    pooled = temporal_maxpool1d(pooled_spatial, kernel, stride)
    shifted = channel_shift(pooled, cfg)
    output = group_weighted_sum(shifted, w, cfg)
    return VlaTrace(stacked, pooled_spatial, pooled, shifted, output)


def vla_forward(segment_features: list[Tensor], cfg: ShiftConfig, w: GroupWeights, pool: tuple = (2, 2)) -> Tensor:
    return vla_trace(segment_features, cfg, w, pool).output
