"""
Frame-sequence ingest (PNG / binary PPM), resize, center crop, and PNG export.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import png

from common import logger
from common.errors import FormatError, InputError, ShapeError, SizeError
from motionforge.tensor import Tensor

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True, eq=False)
class VideoClip:
    frames: tuple
    fps: Fraction | None = None
    source: str = "<memory>"

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise InputError("clip has no frames", self.source)
        first = frames[0].shape
        for index, frame in enumerate(frames):
            if frame.rank != 3 or frame.shape[0] != 3:
                raise ShapeError(f"frame {index} of {self.source}", "3xHxW", frame.shape)
            if frame.shape != first:
                raise ShapeError(f"frame {index} of {self.source}", first, frame.shape)
            if frame.data.min() < 0.0 or frame.data.max() > 1.0:
                raise FormatError(f"frame {index} has values outside [0, 1]", self.source)
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].shape[1]

    @property
    def width(self) -> int:
        return self.frames[0].shape[2]

    def as_array(self) -> np.ndarray:
        """(T, 3, H, W) float32 copy of all frames."""
        return np.stack([frame.data for frame in self.frames])

    @classmethod
    def from_array(cls, array: np.ndarray, fps=None, source: str = "<memory>") -> "VideoClip":
        return cls(tuple(Tensor(frame, "CHW") for frame in array), fps, source)


# --- decoding ----------------------------------------------------------------

def _decode_png(path: Path) -> np.ndarray:
    width, height, rows, info = png.Reader(filename=str(path)).asRGBA8()
    pixels = np.vstack([np.asarray(row, dtype=np.uint8) for row in rows])
    return pixels.reshape(height, width, 4)[:, :, :3]


def _ppm_header(data: bytes) -> tuple[list[int], int]:
    """Parse 'P6 width height maxval' with comments; returns fields and payload offset."""
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ValueError("malformed PPM header")
        fields.append(int(data[start:pos]))
    # exactly one whitespace byte separates the header from the raster
    return fields, pos + 1


def _decode_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] != b"P6":
        raise ValueError("only binary PPM (P6) is supported")
    (width, height, maxval), offset = _ppm_header(data)
    if not 0 < maxval < 256:
        raise ValueError(f"unsupported PPM maxval {maxval}")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=offset)
    pixels = raster.reshape(height, width, 3)
    if maxval != 255:
        pixels = np.rint(pixels.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return pixels


def decode_image(path) -> Tensor:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            head = f.read(8)
        if head.startswith(PNG_SIGNATURE):
            pixels = _decode_png(path)
        elif head.startswith(b"P6"):
            pixels = _decode_ppm(path)
        else:
            raise ValueError("neither PNG nor P6 PPM")
    except OSError as exc:
        raise InputError("cannot read image", path) from exc
    except (ValueError, png.Error) as exc:
        raise FormatError(f"cannot decode image ({exc})", path) from exc
    return Tensor(np.transpose(pixels, (2, 0, 1)).astype(np.float32) / 255.0, "CHW")


def load_image_sequence(directory, pattern: str = "*.png", threads: int = 1) -> VideoClip:
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError("input directory does not exist", directory)
    paths = sorted((p for p in directory.glob(pattern) if p.is_file()), key=lambda p: p.name)
    if not paths:
        raise InputError(f"no files match {pattern!r}", directory)

    logger.log("load_image_sequence", "start", f"Decoding {len(paths)} frames", details={"dir": str(directory)})
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(decode_image, paths))
    else:
        frames = [decode_image(p) for p in paths]

    first = frames[0].shape
    for path, frame in zip(paths, frames):
        if frame.shape != first:
            raise ShapeError(f"frame dimensions of {path.name}", first, frame.shape)
    return VideoClip(tuple(frames), None, str(directory))


# --- geometry ----------------------------------------------------------------

def resized_extent(height: int, width: int, short_side: int) -> tuple[int, int]:
    """Target (H, W) with min == short_side; the long side rounds half up."""
    if short_side < 1:
        raise SizeError(f"short_side must be positive, got {short_side}")
    if height <= width:
        return short_side, (2 * width * short_side + height) // (2 * height)
    return (2 * height * short_side + width) // (2 * width), short_side


def _bilinear_axis(array: np.ndarray, axis: int, out_size: int) -> np.ndarray:
    in_size = array.shape[axis]
    if in_size == out_size:
        return array
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    weight = src - lo
    shape = [1] * array.ndim
    shape[axis] = out_size
    weight = weight.reshape(shape)
    return np.take(array, lo, axis=axis) * (1.0 - weight) + np.take(array, hi, axis=axis) * weight


def resize_bilinear(clip: VideoClip, short_side: int) -> VideoClip:
    """Bilinear resize with half-pixel centers, aspect ratio preserved."""
    out_h, out_w = resized_extent(clip.height, clip.width, short_side)
    array = clip.as_array().astype(np.float64)
    array = _bilinear_axis(array, 2, out_h)
    array = _bilinear_axis(array, 3, out_w)
    array = np.clip(array, 0.0, 1.0).astype(np.float32)
    return VideoClip.from_array(array, clip.fps, clip.source)


def crop_offsets(height: int, width: int, size: int) -> tuple[int, int]:
    if size < 1 or size > min(height, width):
        raise SizeError(f"crop size {size} does not fit a {height}x{width} frame")
    return (height - size) // 2, (width - size) // 2


def center_crop(clip: VideoClip, size: int) -> VideoClip:
    top, left = crop_offsets(clip.height, clip.width, size)
    array = clip.as_array()[:, :, top:top + size, left:left + size]
    return VideoClip.from_array(array, clip.fps, clip.source)


def preprocess(clip: VideoClip, short_side: int = 0, crop: int = 0) -> VideoClip:
    """Resize then center-crop; zero disables a stage."""
    if short_side:
        clip = resize_bilinear(clip, short_side)
    if crop:
        clip = center_crop(clip, crop)
    return clip


# --- export ------------------------------------------------------------------

def open_for_write(path, mode: str = "wb"):
    """Open path for writing, creating parent directories; I/O failures raise InputError."""
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            os.makedirs(path.parent, exist_ok=True)
        return open(path, mode, encoding=None if "b" in mode else "utf-8")
    except OSError as exc:
        raise InputError("cannot write", path) from exc


def heatmap_pixels(t: Tensor) -> np.ndarray:
    """Mean |value| over channels, min-max stretched to uint8; flat input maps to 0."""
    data = t.data if t.rank == 3 else t.data[np.newaxis]
    if data.ndim != 3:
        raise ShapeError("heatmap input rank", "2 or 3", t.rank)
    magnitude = np.abs(data.astype(np.float64)).mean(axis=0)
    low, high = magnitude.min(), magnitude.max()
    if high == low:
        return np.zeros(magnitude.shape, dtype=np.uint8)
    return np.rint((magnitude - low) / (high - low) * 255.0).astype(np.uint8)


def export_heatmap_png(t: Tensor, path) -> None:
    pixels = heatmap_pixels(t)
    writer = png.Writer(width=pixels.shape[1], height=pixels.shape[0], greyscale=True, bitdepth=8)
    with open_for_write(path) as f:
        try:
            writer.write(f, pixels.tolist())
        except OSError as exc:
            raise InputError("cannot write", path) from exc


def export_frame_png(frame: Tensor, path) -> None:
    """Write a 3xHxW frame in [0, 1] as 8-bit RGB."""
    if frame.rank != 3 or frame.shape[0] != 3:
        raise ShapeError("frame for PNG export", "3xHxW", frame.shape)
    pixels = np.rint(np.clip(frame.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    rows = np.transpose(pixels, (1, 2, 0)).reshape(frame.shape[1], -1)
    writer = png.Writer(width=frame.shape[2], height=frame.shape[1], greyscale=False, bitdepth=8)
    with open_for_write(path) as f:
        try:
            writer.write(f, rows.tolist())
        except OSError as exc:
            raise InputError("cannot write", path) from exc


def write_image_sequence(clip: VideoClip, directory, prefix: str = "f") -> list[Path]:
    """Dump a clip as f0001.png, f0002.png, ... for round trips and demos."""
    directory = Path(directory)
    paths = []
    for index, frame in enumerate(clip.frames, start=1):
        path = directory / f"{prefix}{index:04d}.png"
        export_frame_png(frame, path)
        paths.append(path)
    return paths


def export_json(payload, path) -> None:
    """Sorted-key, indented JSON so repeated runs write identical bytes."""
    with open_for_write(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
