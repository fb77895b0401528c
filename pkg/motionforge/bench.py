"""
Throughput benchmark of motion representations over every consecutive frame
pair of a clip. Decoding happens before timing; each timed repeat covers the
transform, pooling, subtraction and stacking only.
"""
from __future__ import annotations

import csv
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import matplotlib
import numpy as np
import scipy
from matplotlib.figure import Figure

from common import logger
from common.errors import ConfigError, InputError, SizeError
from motionforge.flow import horn_schunck, luma
from motionforge.motion_enhance import motion_enhance, rgbdiff
from motionforge.tensor import Tensor
from motionforge.video_io import VideoClip, open_for_write

METHODS = ("copy", "me", "rgbdiff", "horn_schunck")
CSV_COLUMNS = ["method", "resolution", "frames", "fps_median", "fps_mad", "threads"]
MIN_FRAMES = 50
MIN_REPEATS = 5
UNSTABLE_RATIO = 0.25


@dataclass(frozen=True)
class BenchReport:
    method: str
    resolution: str
    frames_processed: int
    wall_seconds: tuple
    fps_median: float
    fps_mad: float
    threads: int
    env: dict = field(default_factory=dict, compare=False)

    @property
    def unstable(self) -> bool:
        return self.fps_median > 0 and self.fps_mad / self.fps_median > UNSTABLE_RATIO

    def csv_row(self) -> list:
        return [self.method, self.resolution, self.frames_processed, self.fps_median, self.fps_mad, self.threads]


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo", "r", encoding="utf-8") as f:
            for line in f:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine() or "unknown"


def describe_environment() -> dict:
    return {
        "cpu": _cpu_model(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "build": f"python {platform.python_version()} numpy {np.__version__} scipy {scipy.__version__}",
    }


def _pair_function(method: str, alpha: float, iters: int):
    if method == "copy":
        return lambda prev, nxt: np.copy(nxt.data)
    if method == "me":
        return lambda prev, nxt: motion_enhance([prev, nxt]).tensor
    if method == "rgbdiff":
        return lambda prev, nxt: rgbdiff([prev, nxt])
    if method == "horn_schunck":
        return lambda prev, nxt: horn_schunck(luma(prev), luma(nxt), alpha=alpha, iters=iters)
    raise ConfigError(f"unknown bench method {method!r}; expected a subset of {', '.join(METHODS)}")


def _time_repeat(fn, pairs: list[tuple[Tensor, Tensor]], threads: int) -> float:
    start = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda pair: fn(*pair), pairs))
    else:
        for prev, nxt in pairs:
            fn(prev, nxt)
    return time.perf_counter() - start


def summarize(method: str, resolution: str, frames: int, walls: list[float], threads: int, env: dict) -> BenchReport:
    fps_median = frames / statistics.median(walls)
    per_repeat = [frames / wall for wall in walls]
    centre = statistics.median(per_repeat)
    fps_mad = statistics.median(abs(fps - centre) for fps in per_repeat)
    return BenchReport(method, resolution, frames, tuple(walls), fps_median, fps_mad, threads, env)


def run_bench(
    methods: list[str],
    clip: VideoClip,
    repeats: int = 7,
    warmup: int = 2,
    threads: int = 1,
    flow_alpha: float = 15.0,
    flow_iters: int = 100,
) -> list[BenchReport]:
    functions = {method: _pair_function(method, flow_alpha, flow_iters) for method in methods}
    if not functions:
        raise ConfigError("no bench methods selected")
    if repeats < MIN_REPEATS:
        raise ConfigError(f"bench needs at least {MIN_REPEATS} timed repeats, got {repeats}")
    if warmup < 0 or threads < 1:
        raise ConfigError(f"invalid warmup/threads: {warmup}, {threads}")
    if len(clip) < MIN_FRAMES:
        raise SizeError(f"bench needs a clip of at least {MIN_FRAMES} frames, got {len(clip)}")

    pairs = list(zip(clip.frames, clip.frames[1:]))
    resolution = f"{clip.height}x{clip.width}"
    env = describe_environment()
    reports = []
    for method, fn in functions.items():
        for _ in range(warmup):
            _time_repeat(fn, pairs, threads)
        walls = [_time_repeat(fn, pairs, threads) for _ in range(repeats)]
        report = summarize(method, resolution, len(pairs), walls, threads, env)
        reports.append(report)
        logger.log(
            "bench",
            "measured",
            f"{method} at {resolution}: {report.fps_median:.1f} fps",
            details={"fps_median": report.fps_median, "fps_mad": report.fps_mad, "repeats": repeats},
        )
        if report.unstable:
            logger.log(
                "bench",
                "unstable",
                f"{method} throughput varies by more than {UNSTABLE_RATIO:.0%} between repeats",
                level="WARN",
                details={"fps_median": report.fps_median, "fps_mad": report.fps_mad},
            )
    return reports


def speed_ratio(reports: list[BenchReport], fast: str = "me", slow: str = "horn_schunck") -> float:
    by_method = {report.method: report for report in reports}
    missing = [m for m in (fast, slow) if m not in by_method]
    if missing:
        raise ConfigError(f"speed ratio needs reports for {', '.join(missing)}")
    return by_method[fast].fps_median / by_method[slow].fps_median


def summary_line(reports: list[BenchReport]) -> str:
    return "; ".join(f"{r.method} {r.fps_median:.1f} fps (mad {r.fps_mad:.1f})" for r in reports)


def _write_csv(reports: list[BenchReport], path: Path):
    with open_for_write(path, "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            writer.writerow(report.csv_row())


def _write_svg(reports: list[BenchReport], path: Path):
    with matplotlib.rc_context({"svg.hashsalt": "motionforge", "svg.fonttype": "none"}):
        fig = Figure(figsize=(6.0, 1.5 + 0.5 * len(reports)))
        ax = fig.subplots()
        bars = ax.barh([r.method for r in reports], [r.fps_median for r in reports], color="#4c72b0")
        for bar, report in zip(bars, reports):
            bar.set_gid(f"bar-{report.method}")
        ax.set_xscale("log")
        ax.set_xlabel("frame pairs / second (median)")
        ax.set_title(f"Motion representation throughput, {reports[0].resolution}")
        fig.tight_layout()
        with open_for_write(path) as f:
            fig.savefig(f, format="svg", metadata={"Date": None})


def emit_report(reports: list[BenchReport], path, fmt: str = "csv") -> Path:
    if not reports:
        raise ConfigError("no bench reports to emit")
    path = Path(path)
    if fmt == "csv":
        _write_csv(reports, path)
    elif fmt == "svg":
        _write_svg(reports, path)
    else:
        raise ConfigError(f"unknown report format {fmt!r}; expected csv or svg")
    return path


def read_report_csv(path) -> list[dict]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as exc:
        raise InputError("cannot read bench report", path) from exc
    for row in rows:
        row["frames"] = int(row["frames"])
        row["fps_median"] = float(row["fps_median"])
        row["fps_mad"] = float(row["fps_mad"])
        row["threads"] = int(row["threads"])
    return rows
