"""
Hand-differentiated layers. Each layer caches what its backward rule needs in
forward(), returns the input gradient from backward(), and stores parameter
gradients in `grads` under the same keys as `params`.
"""
from __future__ import annotations

import copy

import numpy as np

from common.errors import ShapeError
from motionforge.tensor import conv2d
from motionforge.vla import (
    ShiftConfig,
    shift_backward,
    shift_forward,
    spatial_max_backward,
    spatial_max_forward,
    temporal_max_backward,
    temporal_max_forward,
    weight_groups_backward,
    weight_groups_forward,
)


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def astype(self, dtype) -> "Layer":
        """Copy with parameters cast to dtype (grad checks run in float64)."""
        clone = copy.deepcopy(self)
        clone.params = {k: v.astype(dtype) for k, v in self.params.items()}
        clone.grads = {}
        return clone


class Conv2d(Layer):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, kernel: int = 3, stride: int = 2, padding: int = 1):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel * kernel
        self.params["weight"] = (rng.standard_normal((out_channels, in_channels, kernel, kernel)) * np.sqrt(2.0 / fan_in)).astype(np.float32)
        self.params["bias"] = np.zeros(out_channels, dtype=np.float32)
        self._x = None

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError("conv input", f"(B,{self.in_channels},H,W)", x.shape)
        self._x = x
        return conv2d(x, self.params["weight"], self.params["bias"], self.stride, self.padding)

    def backward(self, grad):
        x, w = self._x, self.params["weight"]
        k, s, p = self.kernel, self.stride, self.padding
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        out_h, out_w = grad.shape[2], grad.shape[3]
        dw = np.zeros_like(w, dtype=grad.dtype)
        dpad = np.zeros_like(padded, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                patch = padded[:, :, i:i + s * out_h:s, j:j + s * out_w:s]
                dw[:, :, i, j] = np.einsum("bohw,bchw->oc", grad, patch, optimize=True)
                dpad[:, :, i:i + s * out_h:s, j:j + s * out_w:s] += np.einsum("bohw,oc->bchw", grad, w[:, :, i, j], optimize=True)
        self.grads["weight"] = dw
        self.grads["bias"] = grad.sum(axis=(0, 2, 3))
        return dpad[:, :, p:p + x.shape[2], p:p + x.shape[3]]


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, scale: float | None = None):
        """`scale=None` draws U(-1/sqrt(in), 1/sqrt(in)); a number draws N(0, scale^2)."""
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        if scale is None:
            bound = 1.0 / np.sqrt(in_features)
            weight = rng.uniform(-bound, bound, size=(out_features, in_features))
        else:
            weight = rng.standard_normal((out_features, in_features)) * scale
        self.params["weight"] = weight.astype(np.float32)
        self.params["bias"] = np.zeros(out_features, dtype=np.float32)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError("linear input", f"(B,{self.in_features})", x.shape)
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        self.grads["weight"] = grad.T @ self._x
        self.grads["bias"] = grad.sum(axis=0)
        return grad @ self.params["weight"]


class GlobalAvgPool(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        _, _, h, w = self._shape
        return np.broadcast_to(grad[:, :, None, None] / (h * w), self._shape).copy()


class SegmentMean(Layer):
    """(B*N, K) per-segment scores -> (B, K) consensus."""

    def __init__(self, n_segments: int):
        super().__init__()
        self.n_segments = n_segments

    def forward(self, x):
        return x.reshape(-1, self.n_segments, x.shape[-1]).mean(axis=1)

    def backward(self, grad):
        return np.repeat(grad / self.n_segments, self.n_segments, axis=0)


class SpatialMaxPool(Layer):
    """(B*N, C, H, W) segment features -> (B, C, N)."""

    def __init__(self, n_segments: int):
        super().__init__()
        self.n_segments = n_segments

    def forward(self, x):
        self._shape = x.shape
        self._spatial = x.shape[-2:]
        out, self._idx = spatial_max_forward(x.reshape(-1, self.n_segments, *x.shape[1:]))
        return out

    def backward(self, grad):
        return spatial_max_backward(grad, self._idx, self._spatial).reshape(self._shape)


class TemporalMaxPool(Layer):
    def __init__(self, kernel: int = 2, stride: int = 2):
        super().__init__()
        self.kernel = kernel
        self.stride = stride

    def forward(self, x):
        self._n = x.shape[-1]
        out, self._source = temporal_max_forward(x, self.kernel, self.stride)
        return out

    def backward(self, grad):
        return temporal_max_backward(grad, self._source, self._n)


class ChannelShift(Layer):
    """Parameter-free temporal shift of two channel groups."""

    def __init__(self, cfg: ShiftConfig):
        super().__init__()
        self.cfg = cfg

    def forward(self, x):
        self._c = self.cfg.fold(x.shape[-2])
        return shift_forward(x, self._c)

    def backward(self, grad):
        return shift_backward(grad, self._c)


class GroupWeightedSum(Layer):
    def __init__(self, cfg: ShiftConfig, weights=(1.0, 1.0, 1.0)):
        super().__init__()
        self.cfg = cfg
        self.params["w"] = np.asarray(weights, dtype=np.float32)

    def forward(self, x):
        self._x = x
        self._c = self.cfg.fold(x.shape[-2])
        return weight_groups_forward(x, self.params["w"], self._c)

    def backward(self, grad):
        dx, dw = weight_groups_backward(grad, self._x, self.params["w"], self._c)
        self.grads["w"] = dw.astype(grad.dtype)
        return dx


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=np.float64)))


class SoftmaxCrossEntropy(Layer):
    """Mean cross-entropy over the batch; accumulates in float64."""

    def __init__(self, labels: np.ndarray):
        super().__init__()
        self.labels = np.asarray(labels, dtype=np.int64)

    def forward(self, logits):
        self._dtype = logits.dtype
        logp = log_softmax(logits.astype(np.float64))
        self._probs = np.exp(logp)
        rows = np.arange(len(self.labels))
        return np.asarray(-logp[rows, self.labels].mean())

    def backward(self, grad=1.0):
        delta = self._probs.copy()
        delta[np.arange(len(self.labels)), self.labels] -= 1.0
        return (delta * (np.asarray(grad, dtype=np.float64) / len(self.labels))).astype(self._dtype)
