"""Embed a list of text keys with a pretrained transformer and write them in
the EMBCACHE v1 format.

Vectors are mean-pooled over the final hidden states of real tokens (padding
excluded via the attention mask). Keys are normalized exactly as the consumer
normalizes its lookups: lowercased, trimmed, whitespace runs collapsed.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_MODEL = "distilbert-base-uncased"
POOLING = "mean over final hidden states"


class ModelLoadFailureError(RuntimeError):
    pass


class EmptyKeysFileError(ValueError):
    pass


@dataclass(frozen=True)
class ExportManifest:
    model_id: str
    pooling: str
    dim: int
    key_count: int


def normalize_key(text: str) -> str:
    """Shared key contract: lowercase, trim, collapse whitespace runs."""
    return " ".join(text.lower().split())


def read_keys(path: str | Path) -> list[str]:
    """Unique normalized keys in first-seen order; duplicates warn on stderr."""
    keys: list[str] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        key = normalize_key(raw)
        if not key:
            continue
        if key in seen:
            print(f"warning: line {lineno}: duplicate key {key!r} skipped", file=sys.stderr)
            continue
        seen.add(key)
        keys.append(key)
    return keys


def _load_model(model_id: str):
    try:
        from transformers import AutoModel, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ModelLoadFailureError(f"cannot load model {model_id!r}: {exc}") from exc
    model.eval()
    return tokenizer, model


def _embed_batch(tokenizer, model, batch: list[str]) -> np.ndarray:
    import torch

    encoded = tokenizer(batch, padding=True, truncation=True, return_tensors="pt")
    with torch.no_grad():
        hidden = model(**encoded).last_hidden_state  # (batch, tokens, dim)
    mask = encoded["attention_mask"].unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return (summed / counts).double().numpy()


def export_embeddings(
    keys_path: str | Path,
    model_id: str,
    output_path: str | Path,
    batch_size: int = 32,
) -> ExportManifest:
    """Write an EMBCACHE v1 file for every unique normalized key."""
    keys = read_keys(keys_path)
    if not keys:
        raise EmptyKeysFileError(f"{keys_path}: no usable keys")

    tokenizer, model = _load_model(model_id)
    hidden_width = int(getattr(model.config, "hidden_size", getattr(model.config, "dim", 0)))

    lines = [f"EMBCACHE v1 dim={hidden_width}"]
    for start in range(0, len(keys), batch_size):
        batch = keys[start : start + batch_size]
        vectors = _embed_batch(tokenizer, model, batch)
        if vectors.shape[1] != hidden_width:
            raise ModelLoadFailureError(
                f"model emitted width {vectors.shape[1]}, config says {hidden_width}"
            )
        for key, vec in zip(batch, vectors):
            lines.append(key + "\t" + " ".join(f"{v:.9e}" for v in vec))

    Path(output_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return ExportManifest(
        model_id=str(model_id), pooling=POOLING, dim=hidden_width, key_count=len(keys)
    )
