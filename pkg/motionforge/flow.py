"""
Horn-Schunck dense optical flow, the iterative comparator for the benchmark.

Intensities are on the 8-bit scale (luma * 255) so the usual alpha=15 keeps
its conventional meaning. The neighbour average is normalised over in-bounds
neighbours, which makes each Jacobi sweep an exact block minimisation of
`energy`, so the objective never increases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from common.errors import ShapeError
from motionforge.tensor import Tensor

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_NEIGHBOURS = np.array(
    [
        [1 / 12, 1 / 6, 1 / 12],
        [1 / 6, 0.0, 1 / 6],
        [1 / 12, 1 / 6, 1 / 12],
    ]
)
# (dy, dx, weight) for each unordered neighbour pair
_PAIRS = ((0, 1, 1 / 6), (1, 0, 1 / 6), (1, 1, 1 / 12), (1, -1, 1 / 12))


@dataclass(frozen=True, eq=False)
class FlowField:
    u: Tensor
    v: Tensor

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ShapeError("flow components", self.u.shape, self.v.shape)

    def magnitude(self) -> Tensor:
        return Tensor(np.hypot(self.u.data, self.v.data)[np.newaxis], "CHW")


def luma(frame: Tensor) -> Tensor:
    if frame.rank != 3 or frame.shape[0] != 3:
        raise ShapeError("luma input", "3xHxW", frame.shape)
    return Tensor(np.tensordot(LUMA_WEIGHTS, frame.data.astype(np.float64), axes=1) * 255.0, "HW")


def _gradients(prev: np.ndarray, nxt: np.ndarray):
    central = np.array([-0.5, 0.0, 0.5])
    ix = 0.5 * (ndimage.correlate1d(prev, central, axis=1, mode="nearest") + ndimage.correlate1d(nxt, central, axis=1, mode="nearest"))
    iy = 0.5 * (ndimage.correlate1d(prev, central, axis=0, mode="nearest") + ndimage.correlate1d(nxt, central, axis=0, mode="nearest"))
    return ix, iy, nxt - prev


def _check_pair(prev: Tensor, nxt: Tensor):
    if prev.rank != 2:
        raise ShapeError("horn_schunck input rank", 2, prev.rank)
    if prev.shape != nxt.shape:
        raise ShapeError("horn_schunck frames", prev.shape, nxt.shape)


def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # a pixel with no neighbours and no gradient (a 1x1 frame) keeps zero flow
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def horn_schunck(prev: Tensor, nxt: Tensor, alpha: float = 15.0, iters: int = 100, trace=None) -> FlowField:
    """
    Jacobi iterations from zero flow. `trace`, when given, is called with
    (iteration, u, v) after each sweep.
    """
    _check_pair(prev, nxt)
    p = prev.data.astype(np.float64)
    n = nxt.data.astype(np.float64)
    ix, iy, it = _gradients(p, n)
    support = ndimage.correlate(np.ones_like(p), _NEIGHBOURS, mode="constant", cval=0.0)
    denom = alpha * alpha * support + ix * ix + iy * iy
    u = np.zeros_like(p)
    v = np.zeros_like(p)
    for step in range(iters):
        u_bar = _safe_divide(ndimage.correlate(u, _NEIGHBOURS, mode="constant", cval=0.0), support)
        v_bar = _safe_divide(ndimage.correlate(v, _NEIGHBOURS, mode="constant", cval=0.0), support)
        t = _safe_divide(ix * u_bar + iy * v_bar + it, denom)
        u = u_bar - ix * t
        v = v_bar - iy * t
        if trace is not None:
            trace(step, u, v)
    return FlowField(Tensor(u, "HW"), Tensor(v, "HW"))


def energy(prev: Tensor, nxt: Tensor, u: np.ndarray, v: np.ndarray, alpha: float = 15.0) -> float:
    """Brightness-constancy data term plus weighted neighbour smoothness."""
    _check_pair(prev, nxt)
    ix, iy, it = _gradients(prev.data.astype(np.float64), nxt.data.astype(np.float64))
    total = float(np.sum((ix * u + iy * v + it) ** 2))
    height, width = u.shape
    smooth = 0.0
    for dy, dx, weight in _PAIRS:
        y0, y1 = 0, height - dy
        x0, x1 = max(0, -dx), width - max(0, dx)
        for field in (u, v):
            a = field[y0:y1, x0:x1]
            b = field[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
            smooth += weight * float(np.sum((a - b) ** 2))
    return total + alpha * alpha * smooth
