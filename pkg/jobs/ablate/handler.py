#jobs/ablate/handler.py
import csv
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config, ledger, logger, repo
from motionforge.toynet.train import ToyExperiment, run_ablation
from motionforge.video_io import open_for_write


def run_appearance_ablation(event, context):
    """Appearance accuracy for plain / +RGB-Super / +VLA / +transfer, written as CSV."""
    cfg = event
    logger.log("ablate", "start", f"Ablating the appearance branch for {cfg['epochs']} epochs", details={"out": cfg["out"]})
    run_id = context.get("run_id") if isinstance(context, dict) else None
    experiment = ToyExperiment.from_config(cfg)
    records = []
    rows = run_ablation(experiment, sink=records.append)

    with open_for_write(cfg["out"], "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["config", "val_acc"])
        for row in rows:
            writer.writerow([row["config"], row["val_acc"]])

    if run_id:
        ledger.record(repo.insert_train_metric, run_id, records)
    logger.log("ablate", "success", f"Ablation written to {cfg['out']}", details={r["config"]: r["val_acc"] for r in rows})
    return {"status": "success", "out": cfg["out"], "rows": rows}


if __name__ == "__main__":
    run_appearance_ablation(config.resolve_run_config("ablate"), None)
