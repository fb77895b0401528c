#jobs/bench/handler.py
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config, ledger, logger, repo
from common.errors import ConfigError, VerificationError
from motionforge.bench import emit_report, run_bench, speed_ratio, summary_line
from motionforge.synthetic import render_clip
from motionforge.video_io import load_image_sequence, preprocess


def _bench_clip(cfg):
    if cfg["input.dir"]:
        clip = load_image_sequence(cfg["input.dir"], cfg["input.pattern"], cfg["threads"])
        return preprocess(clip, cfg["video.short_side"], cfg["video.crop"])
    rng = np.random.default_rng(cfg["seed"])
    return render_clip("square", "right", rng, size=cfg["size"], frames=cfg["frames"]).clip


def run_benchmark(event, context):
    """Time each method over every consecutive pair and write the CSV (and SVG)."""
    cfg = event
    logger.log("bench", "start", f"Benchmarking {','.join(cfg['methods'])}", details={"size": cfg["size"], "frames": cfg["frames"], "threads": cfg["threads"]})
    run_id = context.get("run_id") if isinstance(context, dict) else None
    if cfg["gate_ratio"] > 0 and cfg["threads"] != 1:
        raise ConfigError("the speed-ratio gate only runs single-threaded (threads=1)")

    clip = _bench_clip(cfg)
    reports = run_bench(
        cfg["methods"],
        clip,
        repeats=cfg["repeats"],
        warmup=cfg["warmup"],
        threads=cfg["threads"],
        flow_alpha=cfg["flow.alpha"],
        flow_iters=cfg["flow.iters"],
    )
    csv_path = emit_report(reports, cfg["out"], "csv")
    svg_path = emit_report(reports, cfg["svg"], "svg") if cfg["svg"] else None
    if run_id:
        ledger.record(repo.insert_bench_report, run_id, reports)

    summary = summary_line(reports)
    logger.log("bench", "success", summary, details={"csv": str(csv_path), "svg": str(svg_path) if svg_path else None})

    ratio = None
    if cfg["gate_ratio"] > 0:
        ratio = speed_ratio(reports, "me", "horn_schunck")
        if ratio < cfg["gate_ratio"]:
            raise VerificationError(f"me/horn_schunck throughput ratio {ratio:.1f} below gate {cfg['gate_ratio']}")
        logger.log("bench", "gate", f"me/horn_schunck ratio {ratio:.1f} passes gate {cfg['gate_ratio']}")

    return {
        "status": "success",
        "summary": summary,
        "csv": str(csv_path),
        "svg": str(svg_path) if svg_path else None,
        "ratio": ratio,
        "reports": reports,
    }


if __name__ == "__main__":
    run_benchmark(config.resolve_run_config("bench"), None)
