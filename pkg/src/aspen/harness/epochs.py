"""EEGT binary epochs container.

Layout (little-endian throughout)::

    0   magic   b"EEGT"
    4   u32     version (1)
    8   u32     C
    12  u32     T
    16  u32     n
    20  f32     fs
    24  u32     K (number of classes)
    28  u32[n]  labels
        u32[n]  subjects
        u32[n]  sessions
        f32[n, C, T] data, row-major

An optional JSON sidecar ``<path>.json`` carries the paradigm name and
generator metadata; it is not needed to read the arrays back.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..dataset import EEGDataset
from ..errors import FormatError

MAGIC = b"EEGT"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIfI")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def encode_epochs(ds: EEGDataset) -> bytes:
    n, C, T = ds.data.shape
    for name, arr in (("labels", ds.labels), ("subjects", ds.subjects), ("sessions", ds.sessions)):
        if n and (arr.min() < 0 or arr.max() > 0xFFFFFFFF):
            raise FormatError(f"{name} do not fit in u32", 0)
    header = _HEADER.pack(MAGIC, VERSION, C, T, n, ds.fs, ds.n_classes)
    parts = [header]
    for arr in (ds.labels, ds.subjects, ds.sessions):
        parts.append(np.asarray(arr, dtype="<u4").tobytes())
    parts.append(np.ascontiguousarray(ds.data, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_epochs(buf: bytes, paradigm: str = "", meta: dict | None = None) -> EEGDataset:
    if len(buf) < _HEADER.size:
        raise FormatError(f"header needs {_HEADER.size} bytes, file has {len(buf)}", len(buf))
    magic, version, C, T, n, fs, K = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}", 4)
    expected = _HEADER.size + 3 * 4 * n + 4 * n * C * T
    if len(buf) != expected:
        raise FormatError(
            f"expected {expected} bytes for n={n}, C={C}, T={T}, found {len(buf)}",
            min(len(buf), expected),
        )
    offset = _HEADER.size
    arrays = []
    for _ in range(3):
        arrays.append(np.frombuffer(buf, dtype="<u4", count=n, offset=offset).astype(np.int64))
        offset += 4 * n
    labels, subjects, sessions = arrays
    if n and labels.max() >= K:
        bad = int(np.argmax(labels >= K))
        raise FormatError(f"label {labels[bad]} >= K={K}", _HEADER.size + 4 * bad)
    data = np.frombuffer(buf, dtype="<f4", count=n * C * T, offset=offset).reshape(n, C, T).astype(np.float32)
    return EEGDataset(data, labels, subjects, sessions, float(fs), int(K), paradigm, meta or {})


def save_epochs(ds: EEGDataset, path, sidecar: bool = True) -> None:
    path = Path(path)
    path.write_bytes(encode_epochs(ds))
    if sidecar:
        info = {"paradigm": ds.paradigm, "meta": ds.meta}
        sidecar_path(path).write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


def load_epochs(path) -> EEGDataset:
    path = Path(path)
    paradigm, meta = "", {}
    side = sidecar_path(path)
    if side.exists():
        info = json.loads(side.read_text())
        paradigm, meta = info.get("paradigm", ""), info.get("meta", {})
    return decode_epochs(path.read_bytes(), paradigm, meta)
