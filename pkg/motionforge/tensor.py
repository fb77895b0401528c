"""
Dense tensor value type and the fixed numeric kernels the rest of the package
builds on. Storage is float32, row-major; the layout tag documents axis
meaning and never changes storage.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from common.errors import FormatError, NumericError, ShapeError, SizeError

LAYOUT_RANKS = {"C": 1, "CT": 2, "HW": 2, "CHW": 3, "TCHW": 4}
MTF1_MAGIC = b"MTF1"


@dataclass(frozen=True, eq=False)
class Tensor:
    data: np.ndarray
    layout: str

    def __post_init__(self):
        if self.layout not in LAYOUT_RANKS:
            raise ShapeError("layout tag", sorted(LAYOUT_RANKS), self.layout)
        array = np.array(self.data, dtype=np.float32, copy=True)
        if array.ndim != LAYOUT_RANKS[self.layout]:
            raise ShapeError(f"rank for layout {self.layout}", LAYOUT_RANKS[self.layout], array.ndim)
        if any(extent < 1 for extent in array.shape):
            raise ShapeError("tensor extents", "all >= 1", array.shape)
        if not np.isfinite(array).all():
            raise NumericError(f"non-finite values in {self.layout} tensor of shape {array.shape}")
        array.setflags(write=False)
        object.__setattr__(self, "data", array)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    def to_bytes(self) -> bytes:
        return encode_mtf1(self.data)


def _expect_rank(t: Tensor, ranks: Sequence[int], op: str):
    if t.rank not in ranks:
        expected = " or ".join(str(r) for r in ranks)
        raise ShapeError(f"{op} input rank", expected, f"{t.rank} (shape {t.shape})")


def maxpool2d_3x3(t: Tensor) -> Tensor:
    """3x3 stride-1 max over each channel with replicate-edge padding."""
    _expect_rank(t, (3,), "maxpool2d_3x3")
    return Tensor(ndimage.maximum_filter(t.data, size=(1, 3, 3), mode="nearest"), t.layout)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("subtract operands", a.shape, b.shape)
    return Tensor(a.data - b.data, a.layout)


def temporal_windows(array: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """View of the last axis as (..., T', kernel) pooling windows, no padding."""
    if kernel < 1 or stride < 1:
        raise SizeError(f"temporal pooling needs positive kernel/stride, got {kernel}/{stride}")
    if array.shape[-1] < kernel:
        raise SizeError(f"temporal pooling kernel {kernel} exceeds temporal extent {array.shape[-1]}")
    return sliding_window_view(array, kernel, axis=-1)[..., ::stride, :]


def temporal_maxpool1d(t: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    _expect_rank(t, (2,), "temporal_maxpool1d")
    return Tensor(temporal_windows(t.data, kernel, stride).max(axis=-1), "CT")


def spatial_maxpool_global(t: Tensor) -> Tensor:
    """CHW -> C, TCHW -> CT (channel-major, time second)."""
    _expect_rank(t, (3, 4), "spatial_maxpool_global")
    if t.rank == 3:
        return Tensor(t.data.max(axis=(1, 2)), "C")
    return Tensor(t.data.max(axis=(2, 3)).T, "CT")


def stack_channels(frames: Sequence[Tensor]) -> Tensor:
    if not frames:
        raise ShapeError("stack_channels frame count", ">= 1", 0)
    first = frames[0].shape
    for index, frame in enumerate(frames):
        _expect_rank(frame, (3,), "stack_channels")
        if frame.shape != first:
            raise ShapeError(f"stack_channels frame {index} shape", first, frame.shape)
    return Tensor(np.concatenate([frame.data for frame in frames], axis=0), "CHW")


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """
    Cross-correlation of a (B, C, H, W) batch with (O, C, k, k) weights.
    Zero padding; output (B, O, H', W').
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv2d input/weight", f"(B,{weight.shape[1]},H,W)", x.shape)
    k = weight.shape[-1]
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if padded.shape[2] < k or padded.shape[3] < k:
        raise SizeError(f"conv2d kernel {k} exceeds padded input {padded.shape[2:]}")
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum("bchwij,ocij->bohw", windows, weight, optimize=True)
    return out + bias.reshape(1, -1, 1, 1)


# --- MTF1 raw dump format ----------------------------------------------------

def encode_mtf1(array) -> bytes:
    data = np.asarray(array.data if isinstance(array, Tensor) else array, dtype="<f4")
    if not 1 <= data.ndim <= 255:
        raise ShapeError("MTF1 rank", "1..255", data.ndim)
    header = MTF1_MAGIC + struct.pack("<B", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    return header + np.ascontiguousarray(data).tobytes()


def decode_mtf1(buffer: bytes, offset: int = 0, source: str = "<buffer>") -> tuple[np.ndarray, int]:
    """Decode one MTF1 record at offset; returns (array, offset after record)."""
    if buffer[offset:offset + 4] != MTF1_MAGIC:
        raise FormatError("missing MTF1 magic", source)
    try:
        (rank,) = struct.unpack_from("<B", buffer, offset + 4)
        shape = struct.unpack_from(f"<{rank}I", buffer, offset + 5)
    except struct.error as exc:
        raise FormatError("truncated MTF1 header", source) from exc
    start = offset + 5 + 4 * rank
    count = int(np.prod(shape, dtype=np.int64))
    end = start + 4 * count
    if end > len(buffer):
        raise FormatError("truncated MTF1 payload", source)
    array = np.frombuffer(buffer, dtype="<f4", count=count, offset=start).reshape(shape)
    return array.astype(np.float32), end


_DEFAULT_LAYOUT = {1: "C", 2: "CT", 3: "CHW", 4: "TCHW"}


def write_mtf1(t: Tensor, path) -> None:
    with open(path, "wb") as f:
        f.write(t.to_bytes())


def read_mtf1(path, layout: str | None = None) -> Tensor:
    with open(path, "rb") as f:
        buffer = f.read()
    array, end = decode_mtf1(buffer, source=str(path))
    if end != len(buffer):
        raise FormatError("trailing bytes after MTF1 record", path)
    return Tensor(array, layout or _DEFAULT_LAYOUT.get(array.ndim, "CHW"))
