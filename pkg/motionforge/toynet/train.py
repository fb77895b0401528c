"""
SGD training and evaluation for one branch at a time, plus the two-stream
pipeline (motion, appearance, fusion) the train-toy and ablate commands run.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from common import config, logger
from common.errors import ConfigError, TrainingError
from motionforge.sampler import EVAL, TRAIN, plan_segments
from motionforge.toynet.data import SyntheticDataset
from motionforge.toynet.layers import SoftmaxCrossEntropy
from motionforge.toynet.model import (
    FusionConfig,
    ToyNet,
    VlaSpec,
    appearance_inputs,
    fuse,
    motion_inputs,
    transfer_init,
)
from motionforge.vla import GroupWeights, ShiftConfig

MOTION = "motion"
APPEARANCE = "appearance"
MODALITIES = ("me", "rgbdiff")
_DEFAULTS = config.DEFAULTS["train-toy"]


@dataclass(frozen=True)
class BranchSpec:
    name: str
    kind: str
    n_segments: int
    span: int
    modality: str = "me"
    vla: VlaSpec | None = None

    def __post_init__(self):
        if self.kind not in (MOTION, APPEARANCE):
            raise ConfigError(f"unknown branch kind {self.kind!r}")
        if self.n_segments < 1:
            raise ConfigError(f"{self.name}: need at least one segment, got {self.n_segments}")
        if self.kind == MOTION:
            if self.span < 2:
                raise ConfigError(f"{self.name}: motion span must be >= 2, got {self.span}")
            if self.modality not in MODALITIES:
                raise ConfigError(f"{self.name}: unknown motion modality {self.modality!r}; expected one of {MODALITIES}")
            if self.vla is not None:
                raise ConfigError(f"{self.name}: VLA is only used on the appearance branch")
        elif self.span < 1:
            raise ConfigError(f"{self.name}: appearance span must be >= 1, got {self.span}")

    @property
    def in_channels(self) -> int:
        return 3 * (self.span - 1) if self.kind == MOTION else 3 * self.span

    def inputs(self, clip, plan) -> np.ndarray:
        if self.kind == MOTION:
            return motion_inputs(clip, plan, self.modality)
        return appearance_inputs(clip, plan)

    def build(self, n_classes: int, seed: int) -> ToyNet:
        return ToyNet(self.in_channels, n_classes, self.n_segments, self.vla, seed)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "n_segments": self.n_segments,
            "span": self.span,
            "modality": self.modality,
            "vla": self.vla.describe() if self.vla is not None else None,
        }

    @classmethod
    def from_description(cls, raw: dict) -> "BranchSpec":
        vla = VlaSpec.from_description(raw["vla"]) if raw.get("vla") else None
        return cls(raw["name"], raw["kind"], raw["n_segments"], raw["span"], raw.get("modality", "me"), vla)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = _DEFAULTS["epochs"]
    lr: float = _DEFAULTS["train.lr"]
    momentum: float = _DEFAULTS["train.momentum"]
    weight_decay: float = _DEFAULTS["train.weight_decay"]
    batch_size: int = _DEFAULTS["train.batch_size"]
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError(f"lr and weight decay must be >= 0, got {self.lr}, {self.weight_decay}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")


class SGD:
    """SGD with momentum and L2 weight decay, updating parameters in place."""

    def __init__(self, net: ToyNet, lr: float, momentum: float = 0.9, weight_decay: float = 5e-4):
        self.net = net
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(layer.params[key]) for name, layer, key in net.parameters()}

    def step(self, step_index: int):
        for name, layer, key in self.net.parameters():
            param = layer.params[key]
            grad = layer.grads[key] + self.weight_decay * param
            velocity = (self.momentum * self.velocity[name] + grad).astype(param.dtype)
            self.velocity[name] = velocity
            param -= (self.lr * velocity).astype(param.dtype)
            if not np.isfinite(param).all():
                raise TrainingError(f"non-finite values in parameter {name}", step_index)


@dataclass(eq=False)
class EvalResult:
    logits: np.ndarray
    labels: np.ndarray

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.logits.argmax(axis=1) == self.labels))


@dataclass(eq=False)
class TrainResult:
    net: ToyNet
    spec: BranchSpec
    history: list[dict] = field(default_factory=list)
    first_loss: float | None = None
    steps: int = 0

    @property
    def val_accuracy(self) -> float | None:
        return self.history[-1]["val_acc"] if self.history else None


def _train_plan(spec: BranchSpec, total: int, seed: int, epoch: int, index: int):
    return plan_segments(total, spec.n_segments, spec.span, TRAIN, seed=seed * 1_000_003 + epoch * 10_007 + index)


def evaluate(net: ToyNet, spec: BranchSpec, dataset: SyntheticDataset, batch_size: int = 32) -> EvalResult:
    logits = []
    for start in range(0, len(dataset), batch_size):
        batch = [
            spec.inputs(clip, plan_segments(len(clip), spec.n_segments, spec.span, EVAL))
            for clip in dataset.clips[start:start + batch_size]
        ]
        logits.append(net.forward(np.concatenate(batch), spec.n_segments))
    return EvalResult(np.concatenate(logits).astype(np.float64), dataset.labels.copy())


def train_branch(
    spec: BranchSpec,
    train_set: SyntheticDataset,
    val_set: SyntheticDataset,
    cfg: TrainConfig,
    net: ToyNet | None = None,
    sink: Callable[[dict], None] | None = None,
) -> TrainResult:
    """
    Train one branch; every epoch appends {branch, epoch, step, train_loss,
    train_acc, val_acc} to the history and hands it to `sink`.
    """
    if train_set.n_classes != val_set.n_classes:
        raise ConfigError(f"train/val class counts differ: {train_set.n_classes} vs {val_set.n_classes}")
    net = net or spec.build(train_set.n_classes, cfg.seed)
    if net.in_channels != spec.in_channels:
        raise ConfigError(f"{spec.name}: network takes {net.in_channels} channels, inputs have {spec.in_channels}")
    optimizer = SGD(net, cfg.lr, cfg.momentum, cfg.weight_decay)
    order_rng = np.random.default_rng([cfg.seed, 7])
    result = TrainResult(net, spec)

    for epoch in range(1, cfg.epochs + 1):
        order = order_rng.permutation(len(train_set))
        loss_sum, correct = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            x = np.concatenate([
                spec.inputs(train_set.clips[i], _train_plan(spec, len(train_set.clips[i]), cfg.seed, epoch, int(i)))
                for i in batch
            ])
            labels = train_set.labels[batch]
            criterion = SoftmaxCrossEntropy(labels)
            logits = net.forward(x, spec.n_segments)
            loss = float(criterion.forward(logits))
            if not np.isfinite(loss):
                raise TrainingError(f"{spec.name}: non-finite loss {loss}", result.steps)
            if result.first_loss is None:
                result.first_loss = loss
            net.backward(criterion.backward())
            optimizer.step(result.steps)
            result.steps += 1
            loss_sum += loss * len(batch)
            correct += int(np.sum(logits.argmax(axis=1) == labels))

        record = {
            "branch": spec.name,
            "epoch": epoch,
            "step": result.steps,
            "train_loss": loss_sum / len(order),
            "train_acc": correct / len(order),
            "val_acc": evaluate(net, spec, val_set).accuracy,
        }
        result.history.append(record)
        logger.log("train", "epoch", f"{spec.name} epoch {epoch}/{cfg.epochs}", level="DEBUG", details=record)
        if sink is not None:
            sink(record)

    logger.log(
        "train",
        "complete",
        f"Trained {spec.name} for {cfg.epochs} epochs",
        details={"steps": result.steps, "val_acc": result.val_accuracy, "parameters": net.parameter_count()},
    )
    return result


# --- config-driven pipeline ----------------------------------------------------

@dataclass(frozen=True)
class ToyExperiment:
    """Everything train-toy and ablate need, resolved from flat config keys."""

    seed: int
    task: str
    size: int
    frames: int
    speed: int
    train_clips: int
    val_clips: int
    motion: BranchSpec
    appearance: BranchSpec
    fusion: FusionConfig
    train: TrainConfig

    @classmethod
    def from_config(cls, resolved: dict) -> "ToyExperiment":
        vla = VlaSpec(
            ShiftConfig.parse(resolved["vla.group_fraction"]),
            GroupWeights(),
            (resolved["vla.pool_kernel"], resolved["vla.pool_stride"]),
        )
        return cls(
            seed=resolved["seed"],
            task=resolved["task"],
            size=resolved["data.size"],
            frames=resolved["data.frames"],
            speed=resolved["data.speed"],
            train_clips=resolved["data.train_clips"],
            val_clips=resolved["data.val_clips"],
            motion=BranchSpec(MOTION, MOTION, resolved["motion.n"], resolved["motion.span"], resolved["motion.modality"]),
            appearance=BranchSpec(APPEARANCE, APPEARANCE, resolved["appearance.n"], resolved["appearance.span"], vla=vla),
            fusion=FusionConfig(resolved["fusion.alpha_appearance"], resolved["fusion.alpha_motion"]),
            train=TrainConfig(
                epochs=resolved["epochs"],
                lr=resolved["train.lr"],
                momentum=resolved["train.momentum"],
                weight_decay=resolved["train.weight_decay"],
                batch_size=resolved["train.batch_size"],
                seed=resolved["seed"],
            ),
        )

    def dataset(self, split: str) -> SyntheticDataset:
        if split == "train":
            return SyntheticDataset(self.train_clips, self.seed, self.task, self.size, self.frames, self.speed)
        return SyntheticDataset(self.val_clips, self.seed + 7919, self.task, self.size, self.frames, self.speed)

    def rgb(self) -> BranchSpec:
        """Single-frame appearance network over the motion branch's segments."""
        return BranchSpec("rgb", APPEARANCE, self.motion.n_segments, 1)

    def describe(self) -> dict:
        raw = asdict(self)
        raw["motion"] = self.motion.describe()
        raw["appearance"] = self.appearance.describe()
        return raw


@dataclass(eq=False)
class TwoStreamResult:
    motion: TrainResult
    appearance: TrainResult
    fused_accuracy: float


def fused_accuracy(
    appearance: tuple[ToyNet, BranchSpec],
    motion: tuple[ToyNet, BranchSpec],
    dataset: SyntheticDataset,
    cfg: FusionConfig,
) -> float:
    scores_a = evaluate(appearance[0], appearance[1], dataset).logits
    scores_m = evaluate(motion[0], motion[1], dataset).logits
    prediction = fuse(scores_a, scores_m, cfg)
    return float(np.mean(prediction.label == dataset.labels))


def train_two_stream(
    experiment: ToyExperiment,
    transfer: bool = False,
    sink: Callable[[dict], None] | None = None,
) -> TwoStreamResult:
    train_set = experiment.dataset("train")
    val_set = experiment.dataset("val")
    motion = train_branch(experiment.motion, train_set, val_set, experiment.train, sink=sink)
    appearance_net = experiment.appearance.build(train_set.n_classes, experiment.train.seed + 1)
    if transfer:
        appearance_net = transfer_init(appearance_net, motion.net)
    appearance = train_branch(experiment.appearance, train_set, val_set, experiment.train, net=appearance_net, sink=sink)
    accuracy = fused_accuracy(
        (appearance.net, experiment.appearance), (motion.net, experiment.motion), val_set, experiment.fusion
    )
    record = {"branch": "fused", "epoch": experiment.train.epochs, "val_acc": accuracy}
    logger.log("train", "fused", "Fused two-stream accuracy", details=record)
    if sink is not None:
        sink(record)
    return TwoStreamResult(motion, appearance, accuracy)


ABLATIONS = ("plain", "rgb_super", "rgb_super_vla", "rgb_super_vla_transfer")


def run_ablation(experiment: ToyExperiment, sink: Callable[[dict], None] | None = None) -> list[dict]:
    """
    Appearance-branch validation accuracy as RGB-Super, VLA and transfer
    initialisation are added in turn.
    """
    train_set = experiment.dataset("train")
    val_set = experiment.dataset("val")
    base = experiment.appearance
    configs = {
        "plain": BranchSpec("plain", APPEARANCE, base.n_segments, 1),
        "rgb_super": BranchSpec("rgb_super", APPEARANCE, base.n_segments, base.span),
        "rgb_super_vla": BranchSpec("rgb_super_vla", APPEARANCE, base.n_segments, base.span, vla=base.vla),
    }
    rows = []
    for name, spec in configs.items():
        result = train_branch(spec, train_set, val_set, experiment.train, sink=sink)
        rows.append({"config": name, "val_acc": result.val_accuracy})

    motion = train_branch(experiment.motion, train_set, val_set, experiment.train, sink=sink)
    spec = BranchSpec("rgb_super_vla_transfer", APPEARANCE, base.n_segments, base.span, vla=base.vla)
    net = transfer_init(spec.build(train_set.n_classes, experiment.train.seed + 1), motion.net)
    result = train_branch(spec, train_set, val_set, experiment.train, net=net, sink=sink)
    rows.append({"config": "rgb_super_vla_transfer", "val_acc": result.val_accuracy})
    return rows
