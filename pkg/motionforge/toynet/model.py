"""
ToyNet: two strided 3x3 conv stages and a linear head, with an optional VLA
block between them. Without VLA the head scores every segment and a mean
consensus averages the scores; with VLA the segment feature maps are
aggregated first and the head sees one flattened video-level vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from common.errors import ConfigError, ShapeError, SizeError
from motionforge.motion_enhance import MeConfig, extract_segments
from motionforge.sampler import SegmentPlan, gather, rgb_super
from motionforge.tensor import Tensor
from motionforge.toynet.layers import (
    ChannelShift,
    Conv2d,
    Flatten,
    GlobalAvgPool,
    GroupWeightedSum,
    Layer,
    Linear,
    ReLU,
    SegmentMean,
    SpatialMaxPool,
    TemporalMaxPool,
    softmax,
)
from motionforge.video_io import VideoClip
from motionforge.vla import GroupWeights, ShiftConfig, VlaTrace, vla_trace

CONV1_OUT = 16
CONV2_OUT = 32


@dataclass(frozen=True)
class VlaSpec:
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    weights: GroupWeights = field(default_factory=GroupWeights)
    pool: tuple = (2, 2)

    def describe(self) -> dict:
        return {
            "group_fraction": str(self.shift.group_fraction),
            "weights": [self.weights.w1, self.weights.w2, self.weights.w3],
            "pool": list(self.pool),
        }

    @classmethod
    def from_description(cls, raw: dict) -> "VlaSpec":
        return cls(ShiftConfig.parse(raw["group_fraction"]), GroupWeights(*raw["weights"]), tuple(raw["pool"]))


@dataclass(frozen=True)
class FusionConfig:
    alpha_appearance: float = 1.0
    alpha_motion: float = 1.0

    def __post_init__(self):
        if self.alpha_appearance < 0 or self.alpha_motion < 0:
            raise ConfigError(f"fusion weights must be non-negative: {self.alpha_appearance}, {self.alpha_motion}")
        if self.alpha_appearance == 0 and self.alpha_motion == 0:
            raise ConfigError("fusion weights cannot both be zero")


@dataclass(frozen=True, eq=False)
class Prediction:
    label: np.ndarray | int
    probabilities: np.ndarray


def pooled_length(n_segments: int, kernel: int, stride: int) -> int:
    if kernel < 1 or stride < 1:
        raise ConfigError(f"temporal pool kernel and stride must be positive: {kernel}, {stride}")
    if n_segments < kernel:
        raise SizeError(f"temporal_maxpool1d: {n_segments} segments < pool kernel {kernel}")
    return (n_segments - kernel) // stride + 1


class ToyNet:
    def __init__(self, in_channels: int, n_classes: int, n_segments: int = 1, vla: VlaSpec | None = None, seed: int = 0):
        if in_channels < 1 or n_classes < 2 or n_segments < 1:
            raise ConfigError(f"invalid ToyNet config: in={in_channels} classes={n_classes} segments={n_segments}")
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.n_segments = n_segments
        self.vla = vla
        self.seed = seed

        rng = np.random.default_rng(seed)
        self.layers: dict[str, Layer] = {
            "conv1": Conv2d(in_channels, CONV1_OUT, rng),
            "relu1": ReLU(),
            "conv2": Conv2d(CONV1_OUT, CONV2_OUT, rng),
            "relu2": ReLU(),
        }
        self._stem = ("conv1", "relu1", "conv2", "relu2")
        if vla is None:
            self.layers.update(
                gap=GlobalAvgPool(),
                head=Linear(CONV2_OUT, n_classes, rng),
                consensus=SegmentMean(n_segments),
            )
            self._top = ("gap", "head", "consensus")
        else:
            kernel, stride = vla.pool
            pooled = pooled_length(n_segments, kernel, stride)
            vla.shift.fold(CONV2_OUT)
            self.layers.update(
                spatial=SpatialMaxPool(n_segments),
                temporal=TemporalMaxPool(kernel, stride),
                shift=ChannelShift(vla.shift),
                gate=GroupWeightedSum(vla.shift, (vla.weights.w1, vla.weights.w2, vla.weights.w3)),
                flatten=Flatten(),
                head=Linear(CONV2_OUT * pooled, n_classes, rng),
            )
            self._top = ("spatial", "temporal", "shift", "gate", "flatten", "head")

    def _check_input(self, x: np.ndarray, n_segments: int):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError("ToyNet input", f"(B*N,{self.in_channels},H,W)", x.shape)
        if x.shape[0] % n_segments:
            raise ShapeError("ToyNet batch", f"a multiple of {n_segments} segments", x.shape[0])
        if self.vla is not None and n_segments != self.n_segments:
            raise ConfigError(f"VLA network built for {self.n_segments} segments, got {n_segments}")

    def features(self, x: np.ndarray) -> np.ndarray:
        """Conv stages only: (B*N, in, H, W) -> (B*N, 32, H/4, W/4)."""
        for name in self._stem:
            x = self.layers[name].forward(x)
        return x

    def forward(self, x: np.ndarray, n_segments: int | None = None) -> np.ndarray:
        """(B*N, in, H, W) segment-major batch -> (B, n_classes) logits."""
        n_segments = n_segments or self.n_segments
        self._check_input(x, n_segments)
        if self.vla is None:
            self.layers["consensus"].n_segments = n_segments
        x = self.features(x)
        for name in self._top:
            x = self.layers[name].forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for name in reversed(self._stem + self._top):
            grad = self.layers[name].backward(grad)
        return grad

    def parameters(self):
        for name, layer in self.layers.items():
            for key in layer.params:
                yield f"{name}.{key}", layer, key

    def parameter_count(self) -> int:
        return sum(layer.params[key].size for _, layer, key in self.parameters())

    def group_weights(self) -> GroupWeights:
        w = self.layers["gate"].params["w"]
        return GroupWeights(float(w[0]), float(w[1]), float(w[2]))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: layer.params[key].copy() for name, layer, key in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        expected = {name for name, _, _ in self.parameters()}
        if set(state) != expected:
            raise ConfigError(f"checkpoint tensors {sorted(state)} do not match network {sorted(expected)}")
        for name, layer, key in self.parameters():
            if state[name].shape != layer.params[key].shape:
                raise ShapeError(f"checkpoint tensor {name}", layer.params[key].shape, state[name].shape)
            layer.params[key] = np.array(state[name], dtype=np.float32)

    def describe(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "n_classes": self.n_classes,
            "n_segments": self.n_segments,
            "vla": self.vla.describe() if self.vla is not None else None,
            "seed": self.seed,
            "parameters": self.parameter_count(),
        }

    @classmethod
    def from_description(cls, raw: dict) -> "ToyNet":
        vla = VlaSpec.from_description(raw["vla"]) if raw.get("vla") else None
        return cls(raw["in_channels"], raw["n_classes"], raw["n_segments"], vla, raw.get("seed", 0))


# --- branch inputs -----------------------------------------------------------

def motion_inputs(clip: VideoClip, plan: SegmentPlan, modality: str = "me", me_config: MeConfig | None = None) -> np.ndarray:
    """One motion stack per segment: (N, T_m*3, H, W)."""
    stacks = extract_segments(gather(clip, plan), modality, me_config)
    return np.stack([stack.data for stack in stacks])


def appearance_inputs(clip: VideoClip, plan: SegmentPlan) -> np.ndarray:
    """One RGB-Super stack per segment: (N, 3*span, H, W)."""
    return np.stack([rgb_super(frames).data for frames in gather(clip, plan)])


def forward_motion_branch(clip: VideoClip, plan: SegmentPlan, net: ToyNet, modality: str = "me") -> np.ndarray:
    if net.vla is not None:
        raise ConfigError("the motion branch takes a network without VLA")
    expected = (plan.span - 1) * 3
    if net.in_channels != expected:
        raise ConfigError(f"motion branch: conv1 takes {net.in_channels} channels, the motion stack has {expected} (T_m={plan.span - 1} x 3)")
    return net.forward(motion_inputs(clip, plan, modality), plan.n_segments)[0]


def _check_appearance(plan: SegmentPlan, net: ToyNet):
    if net.vla is None:
        raise ConfigError("the appearance branch needs a network with VLA attached")
    expected = 3 * plan.span
    if net.in_channels != expected:
        raise ConfigError(f"appearance branch: conv1 takes {net.in_channels} channels, RGB-Super has {expected} (3 x {plan.span})")


def forward_appearance_branch(clip: VideoClip, plan: SegmentPlan, net: ToyNet) -> np.ndarray:
    _check_appearance(plan, net)
    return net.forward(appearance_inputs(clip, plan), plan.n_segments)[0]


def appearance_trace(clip: VideoClip, plan: SegmentPlan, net: ToyNet) -> tuple[list[Tensor], VlaTrace]:
    """Per-segment post-conv feature maps and every VLA intermediate."""
    _check_appearance(plan, net)
    maps = net.features(appearance_inputs(clip, plan))
    features = [Tensor(m, "CHW") for m in maps]
    return features, vla_trace(features, net.vla.shift, net.group_weights(), net.vla.pool)


def fuse(scores_a: np.ndarray, scores_m: np.ndarray, cfg: FusionConfig | None = None) -> Prediction:
    cfg = cfg or FusionConfig()
    scores_a = np.asarray(scores_a)
    scores_m = np.asarray(scores_m)
    if scores_a.shape != scores_m.shape:
        raise ShapeError("fused class scores", scores_a.shape, scores_m.shape)
    probabilities = cfg.alpha_appearance * softmax(scores_a) + cfg.alpha_motion * softmax(scores_m)
    label = probabilities.argmax(axis=-1)
    return Prediction(int(label) if label.ndim == 0 else label, probabilities)


def transfer_init(appearance: ToyNet, motion: ToyNet, seed: int | None = None) -> ToyNet:
    """
    Appearance network whose conv stages start from the motion network's
    weights; head and VLA gate are freshly initialised.
    """
    if appearance.in_channels != motion.in_channels:
        raise ConfigError(
            "transfer_init requires 3*T_a == C*T_m: "
            f"appearance conv1 takes {appearance.in_channels} channels (3*T_a), "
            f"motion conv1 takes {motion.in_channels} (C*T_m)"
        )
    fresh_seed = appearance.seed + 1 if seed is None else seed
    net = ToyNet(appearance.in_channels, appearance.n_classes, appearance.n_segments, appearance.vla, fresh_seed)
    for name in ("conv1", "conv2"):
        for key, value in motion.layers[name].params.items():
            net.layers[name].params[key] = value.copy()
    return net
