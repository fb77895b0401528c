#jobs/eval/handler.py
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config, logger
from common.errors import InputError
from motionforge.toynet.checkpoint import load_checkpoint
from motionforge.toynet.data import SyntheticDataset
from motionforge.toynet.model import FusionConfig
from motionforge.toynet.train import BranchSpec, evaluate, fused_accuracy

CHECKPOINT_NAMES = ("motion", "appearance", "rgb")


def evaluate_checkpoints(event, context):
    """Re-score every checkpoint in `ckpt` on its validation set; fuse when both streams exist."""
    cfg = event
    logger.log("eval", "start", f"Evaluating checkpoints in {cfg['ckpt']}")
    directory = Path(cfg["ckpt"])
    found = [name for name in CHECKPOINT_NAMES if (directory / f"{name}.json").is_file()]
    if not found:
        raise InputError("no checkpoints found", directory)

    loaded = {}
    accuracies = {}
    for name in found:
        net, meta = load_checkpoint(directory, name)
        spec = BranchSpec.from_description(meta["branch"])
        dataset = SyntheticDataset(**meta["data"])
        loaded[name] = (net, spec, dataset)
        accuracies[f"{name}_val_acc"] = evaluate(net, spec, dataset).accuracy

    if "motion" in loaded and "appearance" in loaded:
        fusion = FusionConfig(cfg["fusion.alpha_appearance"], cfg["fusion.alpha_motion"])
        net_a, spec_a, dataset = loaded["appearance"]
        net_m, spec_m, _ = loaded["motion"]
        accuracies["fused_val_acc"] = fused_accuracy((net_a, spec_a), (net_m, spec_m), dataset, fusion)

    logger.log("eval", "success", f"Evaluated {len(found)} checkpoints", details=accuracies)
    return {"status": "success", **accuracies}


if __name__ == "__main__":
    evaluate_checkpoints(config.resolve_run_config("eval"), None)
