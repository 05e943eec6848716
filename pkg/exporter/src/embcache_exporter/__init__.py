"""Transformer-backed embedding exporter for EMBCACHE v1 files."""

__version__ = "0.1.0"

from .exporter import (
    DEFAULT_MODEL,
    EmptyKeysFileError,
    ExportManifest,
    ModelLoadFailureError,
    export_embeddings,
    normalize_key,
)

__all__ = [
    "DEFAULT_MODEL",
    "EmptyKeysFileError",
    "ExportManifest",
    "ModelLoadFailureError",
    "export_embeddings",
    "normalize_key",
]
