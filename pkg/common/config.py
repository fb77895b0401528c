import json
import os
from urllib.parse import urlparse

from common.errors import ConfigError, FormatError, InputError

ENV_PREFIX = "MOTIONFORGE_"


def _get_bool(name: str, default: bool = False) -> bool:
    return os.getenv(name, str(default)).lower() in ("1", "true", "yes", "y", "on")


# Core configuration
LOG_LEVEL = os.getenv(f"{ENV_PREFIX}LOG_LEVEL", "INFO").upper()

# Run ledger (disabled unless a URL is given)
DB_URL = os.getenv(f"{ENV_PREFIX}DB_URL")

# Report export
REPORT_S3_BUCKET = os.getenv(f"{ENV_PREFIX}REPORT_S3_BUCKET")
REPORT_S3_PREFIX = os.getenv(f"{ENV_PREFIX}REPORT_S3_PREFIX", "")
LOCAL_ONLY = _get_bool(f"{ENV_PREFIX}LOCAL_ONLY", True)

# Schema/versioning
SCHEMA_VERSION = "2026-10-ledger1"


def db_is_sqlite(url: str | None = None) -> bool:
    url = url or DB_URL or ""
    return urlparse(url).scheme in ("sqlite", "") or url.endswith(".db")


def get_sqlite_path(url: str | None = None) -> str:
    """
    Resolve the SQLite file path from a ledger URL. Defaults to motionforge.db.
    """
    url = url or DB_URL or ""
    parsed = urlparse(url)
    if parsed.scheme not in ("sqlite", "") and not url.endswith(".db"):
        raise ConfigError(f"ledger URL is not SQLite; cannot derive path: {url}")
    path = parsed.path
    if not path or path == "/":
        path = "motionforge.db"
    if path.startswith("/") and parsed.scheme == "sqlite":
        path = path[1:]
    return os.path.abspath(path)


# --- Run configuration -------------------------------------------------------
# Flat dotted keys per subcommand. Precedence: defaults < config file < flags < env.

_INPUT = {
    "input.dir": "",
    "input.pattern": "*.png",
    "video.short_side": 0,
    "video.crop": 0,
    "threads": 1,
}

_DATA = {
    "seed": 0,
    "task": "full",
    "data.size": 32,
    "data.frames": 40,
    "data.train_clips": 128,
    "data.val_clips": 64,
    "data.speed": 2,
    "motion.n": 8,
    "motion.span": 5,
    "motion.modality": "me",
    "appearance.n": 4,
    "appearance.span": 4,
    "vla.group_fraction": "1/4",
    "vla.pool_kernel": 2,
    "vla.pool_stride": 2,
    "fusion.alpha_appearance": 1.0,
    "fusion.alpha_motion": 1.0,
}

_TRAIN = {
    **_DATA,
    "epochs": 30,
    "train.lr": 0.001,
    "train.momentum": 0.9,
    "train.weight_decay": 5e-4,
    "train.batch_size": 16,
}

DEFAULTS = {
    "extract": {
        **_INPUT,
        "sampler.n": 16,
        "sampler.span": 5,
        "sampler.mode": "eval",
        "seed": 0,
        "method": "me",
        "oracle": False,
        "oracle.random_pairs": 1000,
        "oracle.max_size": 64,
        "out": "extract_out",
    },
    "visualize": {
        **_INPUT,
        "pairs.start": 0,
        "pairs.count": 1,
        "flow": False,
        "flow.alpha": 15.0,
        "flow.iters": 100,
        "synthetic.size": 64,
        "seed": 0,
        "out": "visualize_out",
    },
    "bench": {
        **_INPUT,
        "methods": ["me", "rgbdiff", "horn_schunck"],
        "size": 224,
        "frames": 100,
        "repeats": 7,
        "warmup": 2,
        "flow.alpha": 15.0,
        "flow.iters": 100,
        "gate_ratio": 0.0,
        "seed": 0,
        "out": "report.csv",
        "svg": "",
    },
    "train-toy": {
        **_TRAIN,
        "branch": "motion",
        "transfer_init": False,
        "motion_ckpt": "",
        "out": "ckpt",
    },
    "eval": {
        "ckpt": "ckpt",
        "fusion.alpha_appearance": 1.0,
        "fusion.alpha_motion": 1.0,
    },
    "ablate": {
        **_TRAIN,
        "out": "ablation.csv",
    },
}


def env_name(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "_")


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "y", "on"):
        return True
    if lowered in ("0", "false", "no", "n", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _coerce(key: str, value, default):
    """Bring a file/flag/env value to the type of the key's default."""
    try:
        if isinstance(default, bool):
            return _parse_bool(value, key) if isinstance(value, str) else bool(value)
        if isinstance(default, int):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                return [item.strip() for item in value.split(",") if item.strip()]
            return [str(item) for item in value]
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot use {value!r} as {type(default).__name__}") from exc


def _merge(resolved: dict, defaults: dict, values: dict, source: str):
    unknown = sorted(set(values) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys in {source}: {', '.join(unknown)}")
    for key, value in values.items():
        resolved[key] = _coerce(key, value, defaults[key])


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            values = json.load(f)
    except OSError as exc:
        raise InputError("cannot read config file", path) from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"config file is not valid JSON ({exc.msg})", path) from exc
    if not isinstance(values, dict):
        raise FormatError("config file must hold a JSON object", path)
    return values


def resolve_run_config(
    command: str,
    config_file: str | None = None,
    flags: dict | None = None,
    environ: dict | None = None,
) -> dict:
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command: {command}")
    defaults = DEFAULTS[command]
    resolved = {key: (list(value) if isinstance(value, list) else value) for key, value in defaults.items()}

    if config_file:
        _merge(resolved, defaults, load_config_file(config_file), config_file)
    _merge(resolved, defaults, flags or {}, "flags")

    environ = os.environ if environ is None else environ
    for key, default in defaults.items():
        raw = environ.get(env_name(key))
        if raw is not None:
            resolved[key] = _coerce(key, raw, default)
    return resolved
