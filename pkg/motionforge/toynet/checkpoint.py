"""
Checkpoints: `<name>.mtf` holds every parameter as concatenated MTF1 records,
`<name>.json` the manifest (tensor names, shapes, byte offsets, architecture
and caller metadata).
"""
from __future__ import annotations

import json
from pathlib import Path

from common.errors import FormatError, InputError
from motionforge.tensor import decode_mtf1, encode_mtf1
from motionforge.toynet.model import ToyNet
from motionforge.video_io import open_for_write

MANIFEST_FORMAT = "MTF1+manifest/1"


def save_checkpoint(net: ToyNet, directory, name: str, meta: dict | None = None) -> tuple[Path, Path]:
    directory = Path(directory)
    blob_path = directory / f"{name}.mtf"
    manifest_path = directory / f"{name}.json"
    tensors = []
    offset = 0
    with open_for_write(blob_path) as f:
        for tensor_name, array in net.state_dict().items():
            record = encode_mtf1(array)
            f.write(record)
            tensors.append({"name": tensor_name, "shape": list(array.shape), "offset": offset, "length": len(record)})
            offset += len(record)
    manifest = {
        "format": MANIFEST_FORMAT,
        "blob": blob_path.name,
        "architecture": net.describe(),
        "tensors": tensors,
        "meta": meta or {},
    }
    with open_for_write(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return blob_path, manifest_path


def load_checkpoint(directory, name: str) -> tuple[ToyNet, dict]:
    directory = Path(directory)
    manifest_path = directory / f"{name}.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        blob_path = directory / manifest["blob"]
        buffer = blob_path.read_bytes()
    except FileNotFoundError as exc:
        raise InputError("checkpoint not found", exc.filename) from exc
    except OSError as exc:
        raise InputError("cannot read checkpoint", manifest_path) from exc
    except (json.JSONDecodeError, KeyError) as exc:
        raise FormatError("malformed checkpoint manifest", manifest_path) from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"unsupported checkpoint format {manifest.get('format')!r}", manifest_path)

    state = {}
    for entry in manifest["tensors"]:
        array, end = decode_mtf1(buffer, entry["offset"], source=str(blob_path))
        if end - entry["offset"] != entry["length"] or list(array.shape) != entry["shape"]:
            raise FormatError(f"tensor {entry['name']} does not match its manifest entry", blob_path)
        state[entry["name"]] = array
    net = ToyNet.from_description(manifest["architecture"])
    net.load_state_dict(state)
    return net, manifest["meta"]
