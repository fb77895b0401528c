#jobs/extract/handler.py
import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config, logger
from common.errors import ConfigError, VerificationError
from motionforge.motion_enhance import (
    MeConfig,
    displacement_search_oracle,
    extract_segments,
    verify_random_pairs,
)
from motionforge.sampler import gather, plan_segments
from motionforge.tensor import write_mtf1
from motionforge.video_io import export_json, load_image_sequence, preprocess


def _check_clip_against_oracle(segments) -> list[dict]:
    mismatches = []
    for index, frames in enumerate(segments):
        residuals = extract_segments([frames], "me")[0].data
        for k, (cur, nxt) in enumerate(zip(frames, frames[1:])):
            expected = displacement_search_oracle(nxt, cur).data
            if not np.array_equal(residuals[3 * k:3 * k + 3], expected):
                mismatches.append({"segment": index, "pair": k})
    return mismatches


def extract_features(event, context):
    """
    Plan segments over an image sequence, write one MTF1 motion stack plus a
    JSON sidecar per segment. With `oracle` set, also check ME against the
    displacement search (on the clip, when given, and on random pairs).
    """
    cfg = event
    logger.log("extract", "start", "Extracting motion stacks", details={"input": cfg["input.dir"], "oracle": cfg["oracle"]})
    if not cfg["input.dir"] and not cfg["oracle"]:
        raise ConfigError("extract needs an input directory or --oracle")
    out_dir = Path(cfg["out"])
    written = []
    mismatches = []

    if cfg["input.dir"]:
        clip = load_image_sequence(cfg["input.dir"], cfg["input.pattern"], cfg["threads"])
        clip = preprocess(clip, cfg["video.short_side"], cfg["video.crop"])
        plan = plan_segments(len(clip), cfg["sampler.n"], cfg["sampler.span"], cfg["sampler.mode"], cfg["seed"])
        segments = gather(clip, plan)
        me_config = MeConfig.identity()
        stacks = extract_segments(segments, cfg["method"], me_config, cfg["threads"])

        export_json(
            {"plan": json.loads(plan.to_json()), "source": clip.source, "method": cfg["method"]},
            out_dir / "plan.json",
        )
        for index, (stack, frames) in enumerate(zip(stacks, plan.indices())):
            path = out_dir / f"segment_{index:03d}.mtf"
            write_mtf1(stack, path)
            export_json(
                {
                    "segment_index": index,
                    "t_m": len(frames) - 1,
                    "source": clip.source,
                    "frames": frames,
                    "method": cfg["method"],
                    "transform": me_config.describe()["transform"],
                    "shape": list(stack.shape),
                    "layout": stack.layout,
                },
                path.with_suffix(".json"),
            )
            written.append(str(path))
        logger.log(
            "extract",
            "success",
            f"Wrote {len(written)} motion stacks",
            details={"out": str(out_dir), "shape": list(stacks[0].shape), "method": cfg["method"]},
        )
        if cfg["oracle"]:
            mismatches.extend(_check_clip_against_oracle(segments))

    if cfg["oracle"]:
        result = verify_random_pairs(cfg["oracle.random_pairs"], cfg["oracle.max_size"], cfg["seed"])
        mismatches.extend(result["mismatches"])
        if mismatches:
            logger.log(
                "extract",
                "error",
                f"{len(mismatches)} oracle mismatches",
                level="ERROR",
                details={"first": mismatches[:5]},
            )
            raise VerificationError(f"motion_enhance disagrees with the displacement search on {len(mismatches)} pairs")

    return {
        "status": "success",
        "segments": len(written),
        "files": written,
        "oracle_pairs": cfg["oracle.random_pairs"] if cfg["oracle"] else 0,
    }


if __name__ == "__main__":
    extract_features(config.resolve_run_config("extract"), None)
