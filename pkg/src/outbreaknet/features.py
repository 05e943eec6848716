"""Model-input assembly: min-max scaling, the one-hot baseline, and the
concatenation of scaled numerics with the disease/symptom/phrase embedding
blocks into one feature vector.

The numeric block is the ten daily weather aggregates plus three temporal
features (month-of-year sine/cosine and the year), all min-max scaled with
parameters fitted on training rows only. Out-of-range values at inference
are deliberately left unclamped.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import (
    Embedding,
    EmbeddingCache,
    embed_symptom_list,
    embed_text,
)
from .ingest import DiseaseRecord, MergedHealthRecord
from .weather import PeriodWeatherSummary, atomic_write_text

NUMERIC_FIELD_NAMES = (
    "avg_temp_c",
    "avg_temp_f",
    "avg_wind_mph",
    "avg_wind_kph",
    "avg_wind_deg",
    "avg_pressure",
    "avg_dew_point",
    "avg_heat_index",
    "avg_visibility",
    "avg_uv_index",
    "month_sin",
    "month_cos",
    "year",
)

EMBEDDING_BLOCK_NAMES = ("disease", "symptoms", "phrase")


class EmptyInputError(ValueError):
    pass


class RaggedRowsError(ValueError):
    pass


class LengthMismatchError(ValueError):
    pass


class DuplicateVocabularyError(ValueError):
    pass


class BlockDimMismatchError(ValueError):
    def __init__(self, block: str, expected: int, got: int):
        super().__init__(f"block {block!r}: expected dim {expected}, got {got}")
        self.block = block


class MissingWeatherError(ValueError):
    def __init__(self, period: tuple[date, date]):
        super().__init__(f"no weather summary for period {period[0]}..{period[1]}")
        self.period = period


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered layout of the combined feature vector."""

    numeric_fields: tuple[str, ...]
    embedding_blocks: tuple[tuple[str, int], ...]

    @property
    def total_dim(self) -> int:
        return len(self.numeric_fields) + sum(dim for _, dim in self.embedding_blocks)

    def column_names(self) -> list[str]:
        names = [f"num:{f}" for f in self.numeric_fields]
        for block, dim in self.embedding_blocks:
            names.extend(f"{block}:{i}" for i in range(dim))
        return names


def default_schema(embed_dim: int) -> FeatureSchema:
    return FeatureSchema(
        numeric_fields=NUMERIC_FIELD_NAMES,
        embedding_blocks=tuple((name, embed_dim) for name in EMBEDDING_BLOCK_NAMES),
    )


@dataclass(frozen=True)
class ScalerParams:
    """Per-field min/max fitted on training rows, plus target min/max."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    target_min: float
    target_max: float


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: FeatureSchema


def fit_scaler(rows: Sequence[Sequence[float]], targets: Sequence[float]) -> ScalerParams:
    """Column-wise extrema over training rows and targets."""
    if len(rows) == 0 or len(targets) == 0:
        raise EmptyInputError("cannot fit scaler on empty data")
    width = len(rows[0])
    for row in rows:
        if len(row) != width:
            raise RaggedRowsError(f"row of length {len(row)}, expected {width}")
    mat = np.asarray(rows, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    return ScalerParams(
        mins=tuple(float(v) for v in mat.min(axis=0)),
        maxs=tuple(float(v) for v in mat.max(axis=0)),
        target_min=float(t.min()),
        target_max=float(t.max()),
    )


def apply_scaler(params: ScalerParams, row: Sequence[float]) -> np.ndarray:
    """Map each field to (x - min) / (max - min); constant fields go to 0.

    Values outside the fitted range map outside [0, 1] on purpose.
    """
    if len(row) != len(params.mins):
        raise LengthMismatchError(f"row length {len(row)}, scaler has {len(params.mins)} fields")
    out = np.empty(len(row), dtype=np.float64)
    for i, x in enumerate(row):
        span = params.maxs[i] - params.mins[i]
        out[i] = 0.0 if span == 0.0 else (x - params.mins[i]) / span
    return out


def scale_target(params: ScalerParams, y: float) -> float:
    span = params.target_max - params.target_min
    return 0.0 if span == 0.0 else (y - params.target_min) / span


def invert_target(params: ScalerParams, y_scaled: float) -> float:
    return params.target_min + y_scaled * (params.target_max - params.target_min)


def one_hot_encode(vocabulary: Sequence[str], value: str) -> np.ndarray:
    """Baseline categorical encoding; unknown values map to all zeros."""
    if len(set(vocabulary)) != len(vocabulary):
        raise DuplicateVocabularyError("vocabulary contains duplicates")
    vec = np.zeros(len(vocabulary), dtype=np.float64)
    try:
        vec[list(vocabulary).index(value)] = 1.0
    except ValueError:
        pass
    return vec


def assemble_features(
    schema: FeatureSchema,
    scaled_numerics: Sequence[float],
    disease_vec: Embedding,
    symptom_vec: Embedding,
    phrase_vec: Embedding,
) -> FeatureVector:
    """Concatenate blocks in schema order; no reordering or rescaling here."""
    if len(scaled_numerics) != len(schema.numeric_fields):
        raise BlockDimMismatchError("numeric", len(schema.numeric_fields), len(scaled_numerics))
    blocks = dict(zip(EMBEDDING_BLOCK_NAMES, (disease_vec, symptom_vec, phrase_vec)))
    parts = [np.asarray(scaled_numerics, dtype=np.float64)]
    for name, dim in schema.embedding_blocks:
        vec = blocks[name]
        if vec.dim != dim:
            raise BlockDimMismatchError(name, dim, vec.dim)
        parts.append(vec.values)
    values = np.concatenate(parts)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite feature value")
    return FeatureVector(values=values, schema=schema)


def temporal_features(period_start: date) -> tuple[float, float, float]:
    angle = 2.0 * math.pi * (period_start.month - 1) / 12.0
    return math.sin(angle), math.cos(angle), float(period_start.year)


def numeric_row(summary: PeriodWeatherSummary, period_start: date) -> list[float]:
    """Raw (unscaled) numeric fields in schema order."""
    m_sin, m_cos, year = temporal_features(period_start)
    return [
        summary.avg_temp_c,
        summary.avg_temp_f,
        summary.avg_wind_mph,
        summary.avg_wind_kph,
        summary.avg_wind_deg,
        summary.avg_pressure,
        summary.avg_dew_point,
        summary.avg_heat_index,
        summary.avg_visibility,
        summary.avg_uv_index,
        m_sin,
        m_cos,
        year,
    ]


@dataclass
class FeatureConfig:
    embed_seed: int = 0
    fallback_dim: int = 64


@dataclass
class FeatureBuildResult:
    rows: list[tuple[FeatureVector, float]]
    scaler: ScalerParams
    source_counts: dict[str, Counter] = field(default_factory=dict)


def build_training_rows(
    records: Sequence[DiseaseRecord],
    period_weather: Mapping[tuple[date, date], PeriodWeatherSummary],
    merged: Sequence[MergedHealthRecord],
    cache: EmbeddingCache,
    schema: FeatureSchema,
    config: FeatureConfig,
    scaler: ScalerParams | None = None,
) -> FeatureBuildResult:
    """One (feature vector, scaled target) row per disease record, in order.

    When `scaler` is None the scaler is fitted on these records' numerics and
    targets; pass a previously fitted scaler to transform held-out rows
    without leakage. Records whose period has no weather summary fail loudly.
    """
    if not records:
        raise EmptyInputError("no disease records")
    profile_by_name = {m.profile.name: m.profile for m in merged}

    raw_rows: list[list[float]] = []
    for rec in records:
        period = (rec.period_start, rec.period_end)
        summary = period_weather.get(period)
        if summary is None:
            raise MissingWeatherError(period)
        raw_rows.append(numeric_row(summary, rec.period_start))
    targets = [rec.value for rec in records]
    if scaler is None:
        scaler = fit_scaler(raw_rows, targets)

    counts = {name: Counter() for name in EMBEDDING_BLOCK_NAMES}
    block_dim = dict(schema.embedding_blocks)
    rows: list[tuple[FeatureVector, float]] = []
    for rec, raw in zip(records, raw_rows):
        summary = period_weather[(rec.period_start, rec.period_end)]
        disease_vec, flag = embed_text(cache, config.embed_seed, rec.disease_name, config.fallback_dim)
        counts["disease"][flag] += 1
        profile = profile_by_name.get(rec.disease_name)
        if profile is None:
            symptom_vec = Embedding(np.zeros(block_dim["symptoms"], dtype=np.float64))
            counts["symptoms"]["missing"] += 1
        else:
            symptom_vec = embed_symptom_list(
                cache, config.embed_seed, list(profile.symptoms), config.fallback_dim
            )
            counts["symptoms"]["present"] += 1
        phrase_vec, flag = embed_text(cache, config.embed_seed, summary.top_phrase, config.fallback_dim)
        counts["phrase"][flag] += 1

        fv = assemble_features(
            schema, apply_scaler(scaler, raw), disease_vec, symptom_vec, phrase_vec
        )
        rows.append((fv, scale_target(scaler, rec.value)))
    return FeatureBuildResult(rows=rows, scaler=scaler, source_counts=counts)


def write_feature_matrix(
    path: str | Path, schema: FeatureSchema, rows: Sequence[tuple[FeatureVector, float]]
) -> None:
    """Debug/parity dump: one TSV row per example, final column is the target."""
    lines = ["\t".join(schema.column_names() + ["target"])]
    for fv, target in rows:
        lines.append("\t".join(repr(float(v)) for v in fv.values) + "\t" + repr(float(target)))
    atomic_write_text(path, "\n".join(lines) + "\n")
