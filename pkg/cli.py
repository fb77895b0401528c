#cli.py
"""
motionforge command line: extract, visualize, bench, train-toy, eval, ablate.

Every flag maps onto a flat dotted config key. Precedence is
defaults < --config JSON file < flags < MOTIONFORGE_* environment variables.
Exit codes: 0 ok, 2 config, 3 I/O, 4 verification.
"""
import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config, ledger, logger
from common.errors import EXIT_OK, MotionForgeError
from jobs.ablate.handler import run_appearance_ablation
from jobs.bench.handler import run_benchmark
from jobs.eval.handler import evaluate_checkpoints
from jobs.extract.handler import extract_features
from jobs.train_toy.handler import train_toy
from jobs.visualize.handler import render_pairs

HANDLERS = {
    "extract": extract_features,
    "visualize": render_pairs,
    "bench": run_benchmark,
    "train-toy": train_toy,
    "eval": evaluate_checkpoints,
    "ablate": run_appearance_ablation,
}

_INPUT_FLAGS = [
    ("--input", "input.dir", "directory of PNG/PPM frames"),
    ("--pattern", "input.pattern", "glob for frame files"),
    ("--short-side", "video.short_side", "resize so the short side has this many pixels (0 = off)"),
    ("--crop", "video.crop", "center crop size (0 = off)"),
    ("--threads", "threads", "worker threads for decoding and extraction"),
]

_TRAIN_FLAGS = [
    ("--seed", "seed", "random seed"),
    ("--task", "task", "label set: full (8 classes) or direction (4 classes)"),
    ("--size", "data.size", "synthetic frame size"),
    ("--frames", "data.frames", "frames per synthetic clip"),
    ("--train-clips", "data.train_clips", "training clips"),
    ("--val-clips", "data.val_clips", "validation clips"),
    ("--speed", "data.speed", "object speed in pixels per frame"),
    ("--motion-segments", "motion.n", "motion branch segments"),
    ("--motion-span", "motion.span", "frames per motion segment"),
    ("--modality", "motion.modality", "motion representation: me or rgbdiff"),
    ("--appearance-segments", "appearance.n", "appearance branch segments"),
    ("--appearance-span", "appearance.span", "frames per RGB-Super stack"),
    ("--group-fraction", "vla.group_fraction", "channel fraction per shifted group, in (0, 1/3]"),
    ("--pool-kernel", "vla.pool_kernel", "VLA temporal pool kernel"),
    ("--pool-stride", "vla.pool_stride", "VLA temporal pool stride"),
    ("--alpha-appearance", "fusion.alpha_appearance", "fusion weight of the appearance branch"),
    ("--alpha-motion", "fusion.alpha_motion", "fusion weight of the motion branch"),
    ("--epochs", "epochs", "training epochs"),
    ("--lr", "train.lr", "SGD learning rate"),
    ("--momentum", "train.momentum", "SGD momentum"),
    ("--weight-decay", "train.weight_decay", "L2 weight decay"),
    ("--batch-size", "train.batch_size", "clips per batch"),
]

FLAGS = {
    "extract": _INPUT_FLAGS + [
        ("--segments", "sampler.n", "number of segments N"),
        ("--span", "sampler.span", "frames per segment"),
        ("--mode", "sampler.mode", "segment start choice: eval (centered) or train (seeded random)"),
        ("--seed", "seed", "random seed"),
        ("--method", "method", "motion representation: me or rgbdiff"),
        ("--oracle", "oracle", "also verify ME against the displacement search"),
        ("--oracle-pairs", "oracle.random_pairs", "random frame pairs checked by --oracle"),
        ("--oracle-max-size", "oracle.max_size", "largest random pair extent"),
        ("--out", "out", "output directory"),
    ],
    "visualize": _INPUT_FLAGS + [
        ("--start", "pairs.start", "first frame pair"),
        ("--count", "pairs.count", "number of frame pairs"),
        ("--flow", "flow", "add a Horn-Schunck magnitude heatmap"),
        ("--flow-alpha", "flow.alpha", "Horn-Schunck smoothness weight"),
        ("--flow-iters", "flow.iters", "Horn-Schunck iterations"),
        ("--synthetic-size", "synthetic.size", "frame size of the moving square used without --input"),
        ("--seed", "seed", "random seed"),
        ("--out", "out", "output directory"),
    ],
    "bench": _INPUT_FLAGS + [
        ("--methods", "methods", "comma-separated subset of copy,me,rgbdiff,horn_schunck"),
        ("--size", "size", "synthetic frame size"),
        ("--frames", "frames", "synthetic clip length"),
        ("--repeats", "repeats", "timed repeats (>= 5)"),
        ("--warmup", "warmup", "discarded warmup repeats"),
        ("--flow-alpha", "flow.alpha", "Horn-Schunck smoothness weight"),
        ("--flow-iters", "flow.iters", "Horn-Schunck iterations"),
        ("--gate-ratio", "gate_ratio", "fail unless fps(me)/fps(horn_schunck) reaches this (0 = off)"),
        ("--seed", "seed", "random seed"),
        ("--out", "out", "CSV report path"),
        ("--svg", "svg", "SVG bar chart path (empty = none)"),
    ],
    "train-toy": _TRAIN_FLAGS + [
        ("--branch", "branch", "motion, appearance, both or rgb"),
        ("--transfer-init", "transfer_init", "initialise appearance conv stages from a motion network"),
        ("--motion-ckpt", "motion_ckpt", "checkpoint directory holding motion.json for --transfer-init"),
        ("--out", "out", "checkpoint directory"),
    ],
    "eval": [
        ("--ckpt", "ckpt", "checkpoint directory"),
        ("--alpha-appearance", "fusion.alpha_appearance", "fusion weight of the appearance branch"),
        ("--alpha-motion", "fusion.alpha_motion", "fusion weight of the motion branch"),
    ],
    "ablate": _TRAIN_FLAGS + [
        ("--out", "out", "CSV path"),
    ],
}

DESCRIPTIONS = {
    "extract": "Sample segments from a frame directory and write ME (or RGBDiff) stacks as MTF1.",
    "visualize": "Render source frame, RGBDiff and ME heatmaps for consecutive frame pairs.",
    "bench": "Time motion representations over every consecutive frame pair.",
    "train-toy": "Train the toy two-branch network on synthetic moving shapes.",
    "eval": "Re-score saved checkpoints and fuse the two streams.",
    "ablate": "Train appearance-branch variants and write their validation accuracy.",
}


def _format_default(value) -> str:
    if isinstance(value, list):
        return ",".join(value)
    if value == "":
        return '""'
    return str(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionforge", description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)
    for command, flags in FLAGS.items():
        defaults = config.DEFAULTS[command]
        sub = commands.add_parser(command, help=DESCRIPTIONS[command], description=DESCRIPTIONS[command])
        sub.add_argument("--config", default=None, help="JSON file of dotted config keys (default: none)")
        for flag, key, text in flags:
            help_text = f"{text} (default: {_format_default(defaults[key])})"
            if isinstance(defaults[key], bool):
                sub.add_argument(flag, dest=key, action="store_const", const=True, default=argparse.SUPPRESS, help=help_text)
            else:
                sub.add_argument(flag, dest=key, metavar=key.split(".")[-1].upper(), default=argparse.SUPPRESS, help=help_text)
    return parser


def main(argv=None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    flags = {key: value for key, value in vars(args).items() if key not in ("command", "config")}
    try:
        resolved = config.resolve_run_config(command, args.config, flags, environ)
        with ledger.recorded_run(command, resolved) as run_id:
            logger.log_config(command, resolved)
            result = HANDLERS[command](resolved, {"run_id": run_id})
    except MotionForgeError as exc:
        logger.log(command, "error", str(exc), level="ERROR", details={"exit_code": exc.exit_code, "error": type(exc).__name__})
        print(f"motionforge {command}: {exc}", file=sys.stderr)
        return exc.exit_code
    if result.get("summary"):
        print(result["summary"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
