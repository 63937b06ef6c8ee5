"""ViT-L/16 patch-embedding extraction into the KEMB interchange format."""

__version__ = "0.1.0"

from .extract import ExtractionJob, ExtractionResult, extract, preprocess, write_manifest
from .kemb import KembFormatError, read_kemb, write_kemb
from .model import (
    CheckpointError,
    SelfCheckError,
    SelfCheckReport,
    build_model,
    patch_tokens,
    selfcheck,
    weights_fingerprint,
)

__all__ = [name for name in dir() if not name.startswith("_")]
