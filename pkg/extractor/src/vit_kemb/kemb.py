"""KEMB writer/reader implementing the interchange format contract.

This is a deliberately independent implementation of the one-page format the
scoring library defines, so the two packages interoperate only through bytes
on disk. Layout (integers little-endian): magic ``KEMB``, version 1, dtype
code 0x01 (float32), two reserved zero bytes, uint32 P, uint32 D, uint32 J,
J bytes of UTF-8 JSON metadata ``{"image_id": ..., "model_tag": ...}``, then
P*D*4 bytes of row-major float32 payload.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"KEMB"
VERSION = 1
DTYPE_FLOAT32 = 0x01
HEADER = struct.Struct("<4sBBHIII")


class KembFormatError(ValueError):
    pass


def write_kemb(path, image_id: str, patches: np.ndarray, model_tag: str) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    arr = np.ascontiguousarray(patches, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise KembFormatError(f"patches must be a non-empty 2-D matrix, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise KembFormatError(f"non-finite embedding values for {image_id!r}")
    meta = json.dumps(
        {"image_id": image_id, "model_tag": model_tag},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    p, d = arr.shape
    blob = HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, 0, p, d, len(meta)) + meta + arr.tobytes()

    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".kemb.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_kemb(path) -> tuple[str, np.ndarray, str]:
    """Return (image_id, patches, model_tag); used for self-tests only."""
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise KembFormatError(f"{path}: shorter than the fixed header")
    magic, version, dtype, _, p, d, j = HEADER.unpack_from(blob, 0)
    if magic != MAGIC or version != VERSION or dtype != DTYPE_FLOAT32:
        raise KembFormatError(f"{path}: bad magic/version/dtype")
    meta = json.loads(blob[HEADER.size:HEADER.size + j].decode("utf-8"))
    payload = blob[HEADER.size + j:]
    if len(payload) != p * d * 4:
        raise KembFormatError(f"{path}: payload size mismatch")
    patches = np.frombuffer(payload, dtype="<f4").reshape(p, d)
    return meta["image_id"], patches, meta["model_tag"]
