"""Checkpoint format: a JSON manifest plus one little-endian float32 blob.

``manifest.json`` lists every tensor (parameters first, then buffers) with
its name, shape and byte offset into ``weights.bin``, alongside free-form
metadata (architecture hyperparameters, seed, ...).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import FormatError
from .layers import Module

MANIFEST = "manifest.json"
WEIGHTS = "weights.bin"
FORMAT_VERSION = 1


def save_checkpoint(model: Module, directory: str | Path, metadata: dict[str, Any] | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    blobs = []
    for kind, items in (("parameter", model.named_parameters()), ("buffer", model.named_buffers())):
        for name, arr in items:
            data = arr.data if kind == "parameter" else arr
            buf = np.ascontiguousarray(data, dtype="<f4").tobytes()
            entries.append({"name": name, "kind": kind, "shape": list(data.shape), "offset": offset, "nbytes": len(buf)})
            blobs.append(buf)
            offset += len(buf)
    manifest = {"format_version": FORMAT_VERSION, "dtype": "float32-le", "tensors": entries, "metadata": metadata or {}}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (directory / WEIGHTS).write_bytes(b"".join(blobs))
    return directory


def read_checkpoint(directory: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {manifest.get('format_version')}")
    raw = (directory / WEIGHTS).read_bytes()
    state = {}
    for e in manifest["tensors"]:
        end = e["offset"] + e["nbytes"]
        if end > len(raw):
            raise FormatError(f"weights truncated: need {end} bytes, have {len(raw)}", offset=len(raw))
        arr = np.frombuffer(raw[e["offset"] : end], dtype="<f4").reshape(e["shape"])
        state[e["name"]] = arr.astype(np.float64) if e["kind"] == "buffer" else arr.copy()
    return state, manifest["metadata"]


def load_checkpoint(model: Module, directory: str | Path) -> dict[str, Any]:
    state, metadata = read_checkpoint(directory)
    model.load_state_dict(state)
    return metadata
