"""Finite-difference check of a layer's hand-written backward rule."""
from __future__ import annotations

import numpy as np

from motionforge.toynet.layers import Layer

STEP = 1e-4
FLOOR = 1e-4


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), FLOOR)


def _sample(shape: tuple, n_coords: int, rng: np.random.Generator):
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(n_coords, size), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def grad_check(layer: Layer, probe: np.ndarray, n_coords: int = 64, seed: int = 0, step: float = STEP) -> float:
    """
    Max relative error between backward() and central differences of
    sum(forward(x) * r) for a random projection r, over a random sample of
    input and parameter coordinates. Runs on a float64 copy of the layer.
    """
    layer = layer.astype(np.float64)
    x = np.array(probe, dtype=np.float64)
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal(np.shape(layer.forward(x)))
    analytic_x = layer.backward(projection)
    analytic_params = {key: np.array(grad, dtype=np.float64) for key, grad in layer.grads.items()}

    def objective() -> float:
        return float(np.sum(layer.forward(x) * projection))

    def numeric(target: np.ndarray, coord) -> float:
        original = target[coord]
        target[coord] = original + step
        upper = objective()
        target[coord] = original - step
        lower = objective()
        target[coord] = original
        return (upper - lower) / (2 * step)

    worst = 0.0
    for coord in _sample(x.shape, n_coords, rng):
        worst = max(worst, relative_error(float(analytic_x[coord]), numeric(x, coord)))
    for key, param in layer.params.items():
        for coord in _sample(param.shape, n_coords, rng):
            worst = max(worst, relative_error(float(analytic_params[key][coord]), numeric(param, coord)))
    return worst
