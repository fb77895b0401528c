#jobs/visualize/handler.py
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config, logger
from common.errors import SizeError
from motionforge.flow import horn_schunck, luma
from motionforge.motion_enhance import motion_enhance, rgbdiff
from motionforge.synthetic import render_clip
from motionforge.video_io import (
    export_frame_png,
    export_heatmap_png,
    load_image_sequence,
    preprocess,
)


def _load_clip(cfg):
    if cfg["input.dir"]:
        clip = load_image_sequence(cfg["input.dir"], cfg["input.pattern"], cfg["threads"])
        return preprocess(clip, cfg["video.short_side"], cfg["video.crop"])
    # flat square moving right; edges are the only structure in the frame
    rng = np.random.default_rng(cfg["seed"])
    frames = cfg["pairs.start"] + cfg["pairs.count"] + 1
    size = cfg["synthetic.size"]
    return render_clip("square", "right", rng, size=size, frames=frames, textured=False, position=(size // 4, size // 4)).clip


def render_pairs(event, context):
    """
    For each requested consecutive pair write the source frame, an RGBDiff
    heatmap and an ME heatmap (plus a flow magnitude heatmap with `flow`).
    """
    cfg = event
    logger.log("visualize", "start", "Rendering heatmaps", details={"input": cfg["input.dir"], "out": cfg["out"]})
    clip = _load_clip(cfg)
    start, count = cfg["pairs.start"], cfg["pairs.count"]
    if start < 0 or count < 1 or start + count > len(clip) - 1:
        raise SizeError(f"pairs {start}..{start + count - 1} out of range for a {len(clip)}-frame clip")

    out_dir = Path(cfg["out"])
    written = []
    for k in range(start, start + count):
        prev, nxt = clip.frames[k], clip.frames[k + 1]
        outputs = {
            "frame": lambda path: export_frame_png(prev, path),
            "rgbdiff": lambda path: export_heatmap_png(rgbdiff([prev, nxt]), path),
            "me": lambda path: export_heatmap_png(motion_enhance([prev, nxt]).tensor, path),
        }
        if cfg["flow"]:
            outputs["flow"] = lambda path: export_heatmap_png(
                horn_schunck(luma(prev), luma(nxt), cfg["flow.alpha"], cfg["flow.iters"]).magnitude(), path
            )
        for kind, write in outputs.items():
            path = out_dir / f"pair_{k:04d}_{kind}.png"
            write(path)
            written.append(str(path))

    logger.log(
        "visualize",
        "success",
        f"Rendered {count} frame pairs",
        details={"out": str(out_dir), "files": len(written), "source": clip.source},
    )
    return {"status": "success", "pairs": count, "files": written}


if __name__ == "__main__":
    render_pairs(config.resolve_run_config("visualize"), None)
