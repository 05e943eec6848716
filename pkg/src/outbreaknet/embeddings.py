"""Text-to-vector layer: a read-only embedding cache plus a hashing fallback.

The cache is a plain-text file (EMBCACHE v1) so any tool honoring the format
can produce it. The signed feature-hashing fallback keeps the whole pipeline
runnable when no cache has been exported; it trades semantics for determinism.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMBCACHE_MAGIC = "EMBCACHE v1"
SOURCE_CACHE = "cache"
SOURCE_FALLBACK = "fallback"

_HEADER_RE = re.compile(r"^EMBCACHE v1 dim=([0-9]+)$")


class CacheFormatError(ValueError):
    """An EMBCACHE file violates the format contract."""


class BadMagicError(CacheFormatError):
    pass


class DimMismatchError(CacheFormatError):
    pass


class DuplicateKeyError(CacheFormatError):
    pass


class NonFiniteValueError(CacheFormatError):
    pass


class BadKeyError(CacheFormatError):
    """A stored key is not in normalized form."""


def normalize_key(text: str) -> str:
    """Lowercase, trim, and collapse internal whitespace runs to one space."""
    return " ".join(text.lower().split())


@dataclass(eq=False)
class Embedding:
    """Fixed-length real vector for one normalized text key."""

    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass
class EmbeddingCache:
    """Immutable-after-load map from normalized key to embedding."""

    dim: int
    entries: dict[str, Embedding] = field(default_factory=dict)
    source_label: str = "none"

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingCache":
        if dim < 1:
            raise ValueError("embedding dim must be positive")
        return cls(dim=dim, entries={}, source_label="empty")

    def effective_dim(self, fallback_dim: int) -> int:
        """Dimension used for lookups and fallback vectors.

        An empty cache defers to the configured fallback dimension.
        """
        return self.dim if self.entries else fallback_dim


def load_cache(path: str | Path) -> EmbeddingCache:
    """Read an EMBCACHE v1 file into a fully materialized cache."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        match = _HEADER_RE.match(header)
        if match is None:
            raise BadMagicError(f"{path}: bad header {header!r}")
        dim = int(match.group(1))
        if dim < 1:
            raise BadMagicError(f"{path}: dim must be positive, got {dim}")
        entries: dict[str, Embedding] = {}
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            key, sep, payload = line.partition("\t")
            if not sep:
                raise CacheFormatError(f"{path}:{lineno}: missing tab separator")
            if normalize_key(key) != key or not key:
                raise BadKeyError(f"{path}:{lineno}: key {key!r} is not normalized")
            if key in entries:
                raise DuplicateKeyError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                values = np.array([float(tok) for tok in payload.split()], dtype=np.float64)
            except ValueError as exc:
                raise CacheFormatError(f"{path}:{lineno}: bad float token ({exc})") from exc
            if values.size != dim:
                raise DimMismatchError(
                    f"{path}:{lineno}: row has {values.size} values, header says {dim}"
                )
            if not np.all(np.isfinite(values)):
                raise NonFiniteValueError(f"{path}:{lineno}: non-finite value")
            entries[key] = Embedding(values)
    return EmbeddingCache(dim=dim, entries=entries, source_label=str(path))


def save_cache(cache: EmbeddingCache, path: str | Path) -> None:
    """Write a cache back out in EMBCACHE v1 form (LF, 10 significant digits)."""
    lines = [f"EMBCACHE v1 dim={cache.dim}"]
    for key, emb in cache.entries.items():
        lines.append(key + "\t" + " ".join(f"{v:.9e}" for v in emb.values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def hash_embed(text: str, dim: int, seed: int) -> Embedding:
    """Deterministic signed bucket-hash embedding of the normalized text.

    Tokens are split on spaces, each hashed to one of `dim` buckets with a
    sign, summed, then L2-normalized. Inputs with no tokens (or with a fully
    cancelled bucket sum) yield the zero vector.
    """
    if dim < 1:
        raise ValueError("embedding dim must be positive")
    vec = np.zeros(dim, dtype=np.float64)
    key_bytes = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    for token in normalize_key(text).split():
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16, key=key_bytes).digest()
        bucket = int.from_bytes(digest[:8], "little") % dim
        sign = 1.0 if digest[8] & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return Embedding(vec)


def embed_text(
    cache: EmbeddingCache,
    fallback_seed: int,
    text: str,
    fallback_dim: int = 64,
) -> tuple[Embedding, str]:
    """Look the normalized text up in the cache, hashing on a miss.

    Returns the embedding together with a flag naming which path produced it.
    """
    key = normalize_key(text)
    hit = cache.entries.get(key)
    if hit is not None:
        return hit, SOURCE_CACHE
    dim = cache.effective_dim(fallback_dim)
    return hash_embed(text, dim, fallback_seed), SOURCE_FALLBACK


def embed_symptom_list(
    cache: EmbeddingCache,
    seed: int,
    symptoms: list[str],
    fallback_dim: int = 64,
) -> Embedding:
    """Mean-pool the embeddings of a symptom list; empty list gives zeros."""
    dim = cache.effective_dim(fallback_dim)
    if not symptoms:
        return Embedding(np.zeros(dim, dtype=np.float64))
    total = np.zeros(dim, dtype=np.float64)
    for symptom in symptoms:
        emb, _ = embed_text(cache, seed, symptom, fallback_dim=fallback_dim)
        total += emb.values
    return Embedding(total / len(symptoms))
