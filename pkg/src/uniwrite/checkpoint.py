"""Versioned binary checkpoints: named float64 parameter blobs.

Layout (all integers little-endian):

    8 bytes   magic  b"UNIWRT01"
    u32       format version (currently 1)
    u32       fingerprint length, then UTF-8 fingerprint string
    u32       parameter count
    per parameter:
        u16   name length, then UTF-8 name
        u32   rows, u32 cols
        rows*cols float64 values

The fingerprint is a canonical description of the architecture; loading
verifies it (and every shape) before touching the model.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointCompatibilityError,
    CheckpointCorruptError,
    CheckpointVersionError,
)

MAGIC = b"UNIWRT01"
VERSION = 1


def save_checkpoint(path, fingerprint: str, params: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fp = fingerprint.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(fp)))
        fh.write(fp)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointCorruptError(f"checkpoint truncated while reading {what}")
    return buf


def load_checkpoint(path, expected_fingerprint: str | None = None) -> tuple[str, dict[str, np.ndarray]]:
    """Read a checkpoint back; verifies magic, version and fingerprint."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(MAGIC), "magic")
        if magic != MAGIC:
            raise CheckpointVersionError(
                f"bad magic {magic!r}; expected {MAGIC!r} — not a checkpoint file?"
            )
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointVersionError(
                f"unsupported checkpoint version {version}; this build reads {VERSION}"
            )
        (fp_len,) = struct.unpack("<I", _read_exact(fh, 4, "fingerprint length"))
        fingerprint = _read_exact(fh, fp_len, "fingerprint").decode("utf-8")
        if expected_fingerprint is not None and fingerprint != expected_fingerprint:
            raise CheckpointCompatibilityError(
                "checkpoint fingerprint does not match the model:\n"
                f"  file:  {fingerprint}\n  model: {expected_fingerprint}"
            )
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "parameter count"))
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            rows, cols = struct.unpack("<II", _read_exact(fh, 8, f"shape of {name}"))
            raw = _read_exact(fh, rows * cols * 8, f"data of {name}")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointCorruptError("trailing bytes after the last parameter")
    return fingerprint, params
