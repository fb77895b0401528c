#jobs/train_toy/handler.py
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config, ledger, logger, repo
from common.errors import ConfigError
from motionforge.toynet.checkpoint import load_checkpoint, save_checkpoint
from motionforge.toynet.model import transfer_init
from motionforge.toynet.train import ToyExperiment, train_branch, train_two_stream
from motionforge.video_io import open_for_write

BRANCHES = ("motion", "appearance", "both", "rgb")


def _save(result, directory: Path, experiment: ToyExperiment, val_set):
    meta = {
        "branch": result.spec.describe(),
        "data": val_set.describe(),
        "experiment": experiment.describe(),
        "val_acc": result.val_accuracy,
        "steps": result.steps,
    }
    save_checkpoint(result.net, directory, result.spec.name, meta)


def train_toy(event, context):
    """
    Train the requested branch(es) on the synthetic set, stream per-epoch
    metrics to metrics.jsonl and save MTF1 checkpoints under `out`.
    """
    cfg = event
    logger.log("train_toy", "start", f"Training branch {cfg['branch']} for {cfg['epochs']} epochs", details={"out": cfg["out"], "seed": cfg["seed"]})
    run_id = context.get("run_id") if isinstance(context, dict) else None
    branch = cfg["branch"]
    if branch not in BRANCHES:
        raise ConfigError(f"unknown branch {branch!r}; expected one of {BRANCHES}")
    if cfg["transfer_init"] and branch != "both" and not (branch == "appearance" and cfg["motion_ckpt"]):
        raise ConfigError("--transfer-init needs --motion-ckpt (or --branch both to train the motion branch first)")

    experiment = ToyExperiment.from_config(cfg)
    out_dir = Path(cfg["out"])
    records = []

    with open_for_write(out_dir / "metrics.jsonl", "w") as metrics:
        def sink(record):
            records.append(record)
            metrics.write(json.dumps(record, sort_keys=True) + "\n")
            metrics.flush()

        if branch == "both":
            result = train_two_stream(experiment, transfer=cfg["transfer_init"], sink=sink)
            val_set = experiment.dataset("val")
            _save(result.motion, out_dir, experiment, val_set)
            _save(result.appearance, out_dir, experiment, val_set)
            summary = {
                "motion_val_acc": result.motion.val_accuracy,
                "appearance_val_acc": result.appearance.val_accuracy,
                "fused_val_acc": result.fused_accuracy,
            }
        else:
            spec = {"motion": experiment.motion, "appearance": experiment.appearance, "rgb": experiment.rgb()}[branch]
            train_set, val_set = experiment.dataset("train"), experiment.dataset("val")
            net = None
            if cfg["transfer_init"]:
                motion_net, _ = load_checkpoint(cfg["motion_ckpt"], "motion")
                net = transfer_init(spec.build(train_set.n_classes, experiment.train.seed + 1), motion_net)
            result = train_branch(spec, train_set, val_set, experiment.train, net=net, sink=sink)
            _save(result, out_dir, experiment, val_set)
            summary = {f"{spec.name}_val_acc": result.val_accuracy}

    if run_id:
        ledger.record(repo.insert_train_metric, run_id, records)
    logger.log("train_toy", "success", f"Trained branch {branch}", details={**summary, "out": str(out_dir)})
    return {"status": "success", "out": str(out_dir), **summary}


if __name__ == "__main__":
    train_toy(config.resolve_run_config("train-toy"), None)
