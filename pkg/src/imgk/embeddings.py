"""Patch-embedding containers, the KEMB interchange format, and set stacking.

KEMB is a one-page binary format for a single image's patch-embedding matrix,
designed for bit-exact cross-language interchange. Layout (integers
little-endian):

    bytes 0-3    magic ``KEMB``
    byte  4      version, currently 1
    byte  5      dtype code, 0x01 = float32
    bytes 6-7    reserved, zero
    bytes 8-11   uint32 P, number of rows (patches)
    bytes 12-15  uint32 D, number of columns (embedding width)
    bytes 16-19  uint32 J, byte length of the UTF-8 JSON metadata
    bytes 20..   J bytes of JSON ``{"image_id": ..., "model_tag": ...}``
    then         P*D*4 bytes of row-major float32 payload

P and D travel in the file so extractors other than the reference one can be
plugged in; the reference shape (196, 1024) is enforced only for the
reference ``model_tag``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import KembError, ValidationError

__all__ = [
    "REFERENCE_MODEL_TAG",
    "REFERENCE_SHAPE",
    "PatchEmbeddings",
    "ImageSetManifest",
    "StackedSet",
    "write_embeddings",
    "read_embeddings",
    "stack_set",
    "load_store",
]

MAGIC = b"KEMB"
VERSION = 1
DTYPE_FLOAT32 = 0x01
HEADER = struct.Struct("<4sBBHIII")  # magic, version, dtype, reserved, P, D, J

REFERENCE_MODEL_TAG = "vit-l16-in21k"
REFERENCE_SHAPE = (196, 1024)


@dataclass(frozen=True)
class PatchEmbeddings:
    """One image's patch-embedding matrix, shape (P, D), float32."""

    image_id: str
    patches: np.ndarray
    model_tag: str

    def __post_init__(self):
        arr = np.ascontiguousarray(self.patches, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(
                f"patches must be a non-empty 2-D matrix, got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise ValidationError(f"non-finite entries in embeddings for {self.image_id!r}")
        if self.model_tag == REFERENCE_MODEL_TAG and arr.shape != REFERENCE_SHAPE:
            raise ValidationError(
                f"model_tag {REFERENCE_MODEL_TAG!r} requires shape {REFERENCE_SHAPE}, "
                f"got {arr.shape}"
            )
        object.__setattr__(self, "patches", arr)

    @property
    def n_patches(self) -> int:
        return self.patches.shape[0]

    @property
    def dim(self) -> int:
        return self.patches.shape[1]


@dataclass(frozen=True)
class ImageSetManifest:
    """Names the member images of one image set, in display order."""

    set_id: str
    image_ids: tuple[str, ...]
    notes: str = ""

    def __post_init__(self):
        ids = tuple(self.image_ids)
        if not ids:
            raise ValidationError(f"manifest {self.set_id!r} has no image_ids")
        if len(set(ids)) != len(ids):
            raise ValidationError(f"manifest {self.set_id!r} has duplicate image_ids")
        object.__setattr__(self, "image_ids", ids)

    def to_json(self) -> str:
        payload = {"set_id": self.set_id, "image_ids": list(self.image_ids), "notes": self.notes}
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ImageSetManifest":
        raw = json.loads(text)
        try:
            return cls(set_id=raw["set_id"], image_ids=tuple(raw["image_ids"]),
                       notes=raw.get("notes", ""))
        except KeyError as exc:
            raise ValidationError(f"manifest JSON missing key {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ImageSetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class StackedSet:
    """All member embeddings of one set stacked row-wise, with provenance."""

    set_id: str
    points: np.ndarray                      # (sum of P, D) float32
    row_provenance: tuple[tuple[str, int], ...] = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def _metadata_bytes(e: PatchEmbeddings) -> bytes:
    # Canonical JSON (sorted keys, no whitespace) keeps writes byte-deterministic.
    meta = {"image_id": e.image_id, "model_tag": e.model_tag}
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_embeddings(e: PatchEmbeddings, path) -> None:
    """Write ``e`` to ``path`` in KEMB format, byte-for-byte deterministic."""
    meta = _metadata_bytes(e)
    p, d = e.patches.shape
    header = HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, 0, p, d, len(meta))
    payload = np.ascontiguousarray(e.patches, dtype="<f4").tobytes()
    Path(path).write_bytes(header + meta + payload)


def read_embeddings(path) -> PatchEmbeddings:
    """Read a KEMB file. Round-trip identity: read(write(e)) is bitwise ``e``."""
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise KembError("truncated", f"{path}: file shorter than the fixed header")
    magic, version, dtype, _reserved, p, d, j = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise KembError("bad_magic", f"{path}: magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise KembError("bad_version", f"{path}: version {version}, expected {VERSION}")
    if dtype != DTYPE_FLOAT32:
        raise KembError("bad_dtype", f"{path}: dtype code {dtype:#x}, expected 0x01")
    if p < 1 or d < 1:
        raise KembError("size_mismatch", f"{path}: header declares shape ({p}, {d})")
    meta_end = HEADER.size + j
    if len(blob) < meta_end:
        raise KembError("truncated", f"{path}: metadata shorter than declared {j} bytes")
    try:
        meta = json.loads(blob[HEADER.size:meta_end].decode("utf-8"))
        image_id = meta["image_id"]
        model_tag = meta["model_tag"]
    except (ValueError, KeyError) as exc:
        raise KembError("bad_metadata", f"{path}: {exc}") from exc
    expected = p * d * 4
    payload = blob[meta_end:]
    if len(payload) < expected:
        raise KembError(
            "truncated", f"{path}: payload {len(payload)} bytes, header implies {expected}"
        )
    if len(payload) > expected:
        raise KembError(
            "size_mismatch", f"{path}: {len(payload) - expected} trailing bytes after payload"
        )
    patches = np.frombuffer(payload, dtype="<f4").reshape(p, d)
    return PatchEmbeddings(image_id=image_id, patches=patches, model_tag=model_tag)


def stack_set(manifest: ImageSetManifest,
              store: Mapping[str, PatchEmbeddings]) -> StackedSet:
    """Stack all member embeddings row-wise, image order then patch order."""
    members = []
    for image_id in manifest.image_ids:
        if image_id not in store:
            raise ValidationError(
                f"set {manifest.set_id!r}: image_id {image_id!r} not in store"
            )
        members.append(store[image_id])
    dims = {m.dim for m in members}
    if len(dims) != 1:
        raise ValidationError(
            f"set {manifest.set_id!r}: inconsistent embedding widths {sorted(dims)}"
        )
    tags = {m.model_tag for m in members}
    if len(tags) != 1:
        raise ValidationError(
            f"set {manifest.set_id!r}: mixed model_tags {sorted(tags)}"
        )
    points = np.vstack([m.patches for m in members])
    provenance = tuple(
        (m.image_id, i) for m in members for i in range(m.n_patches)
    )
    return StackedSet(set_id=manifest.set_id, points=points, row_provenance=provenance)


def load_store(directory) -> dict[str, PatchEmbeddings]:
    """Load every ``*.kemb`` under ``directory``, keyed by embedded image_id."""
    directory = Path(directory)
    store: dict[str, PatchEmbeddings] = {}
    for path in sorted(directory.glob("*.kemb")):
        e = read_embeddings(path)
        if e.image_id in store:
            raise ValidationError(f"duplicate image_id {e.image_id!r} in {directory}")
        store[e.image_id] = e
    return store
