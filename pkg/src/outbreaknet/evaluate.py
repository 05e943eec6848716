"""Regression metrics and the leave-one-disease-out evaluation harness.

Metrics are computed in original case-count units. The harness fits the
scaler on training diseases only, trains a fresh network, and scores the
held-out disease chronologically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingCache
from .features import (
    FeatureConfig,
    FeatureSchema,
    ScalerParams,
    build_training_rows,
)
from .ingest import DiseaseRecord, MergedHealthRecord
from .neuralnet import (
    DEFAULT_HIDDEN_SIZES,
    HyperParams,
    Network,
    init_network,
    predict,
    train,
)
from .weather import PeriodWeatherSummary, atomic_write_text


class LengthMismatchError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


class UndefinedR2Error(ValueError):
    """Constant actuals with nonzero residuals leave R^2 undefined."""


class UnknownDiseaseError(ValueError):
    pass


class EmptyTrainingSetError(ValueError):
    pass


class IoFailureError(OSError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mse: float
    rmse: float
    r_squared: float
    n: int


@dataclass
class EvalResult:
    held_out_disease: str
    metrics: MetricsReport
    predictions: list[tuple[date, float, float]]  # (period_start, actual, predicted)
    scaler: ScalerParams
    network: Network


def compute_metrics(actual: Sequence[float], predicted: Sequence[float]) -> MetricsReport:
    """MAE, MSE, RMSE and R^2 (1 - SSres/SStot about the mean of actual)."""
    if len(actual) != len(predicted):
        raise LengthMismatchError(f"{len(actual)} actual vs {len(predicted)} predicted")
    if len(actual) == 0:
        raise EmptyInputError("no values")
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(p))):
        raise ValueError("non-finite input value")

    residuals = a - p
    mae = float(np.mean(np.abs(residuals)))
    mse = float(np.mean(residuals**2))
    rmse = math.sqrt(mse)
    ss_res = float(np.sum(residuals**2))
    if np.all(a == a[0]):
        if ss_res == 0.0:
            r2 = 1.0
        else:
            raise UndefinedR2Error("constant actuals with nonzero residuals")
    else:
        ss_tot = float(np.sum((a - np.mean(a)) ** 2))
        r2 = 1.0 - ss_res / ss_tot
    return MetricsReport(mae=mae, mse=mse, rmse=rmse, r_squared=r2, n=len(actual))


@dataclass
class PipelineInputs:
    """Everything the harness needs besides the disease records themselves."""

    period_weather: Mapping[tuple[date, date], PeriodWeatherSummary]
    merged: Sequence[MergedHealthRecord]
    cache: EmbeddingCache
    schema: FeatureSchema
    feature_config: FeatureConfig
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN_SIZES


def fit_training_scaler(
    datasets: Mapping[str, Sequence[DiseaseRecord]],
    held_out: str,
    inputs: PipelineInputs,
):
    """Build the training rows (and scaler) from every non-held-out disease."""
    train_records = [
        rec
        for name in sorted(datasets)
        if name != held_out
        for rec in datasets[name]
    ]
    if not train_records:
        raise EmptyTrainingSetError("no training rows outside the held-out disease")
    return build_training_rows(
        train_records,
        inputs.period_weather,
        inputs.merged,
        inputs.cache,
        inputs.schema,
        inputs.feature_config,
        scaler=None,
    )


def leave_one_out_eval(
    datasets: Mapping[str, Sequence[DiseaseRecord]],
    held_out: str,
    hp: HyperParams,
    inputs: PipelineInputs,
) -> EvalResult:
    """Train on every disease except `held_out`, then score the held-out rows."""
    if held_out not in datasets:
        raise UnknownDiseaseError(f"held-out disease {held_out!r} not in dataset map")
    train_build = fit_training_scaler(datasets, held_out, inputs)

    sizes = (inputs.schema.total_dim, *inputs.hidden_sizes, 1)
    net = init_network(sizes, hp.seed)
    train(net, train_build.rows, hp)

    held_records = list(datasets[held_out])
    if not held_records:
        raise EmptyInputError(f"held-out disease {held_out!r} has no rows")
    held_build = build_training_rows(
        held_records,
        inputs.period_weather,
        inputs.merged,
        inputs.cache,
        inputs.schema,
        inputs.feature_config,
        scaler=train_build.scaler,
    )
    predictions = [
        (rec.period_start, rec.value, predict(net, train_build.scaler, fv))
        for rec, (fv, _) in zip(held_records, held_build.rows)
    ]
    predictions.sort(key=lambda row: row[0])
    metrics = compute_metrics(
        [a for _, a, _ in predictions], [p for _, _, p in predictions]
    )
    return EvalResult(
        held_out_disease=held_out,
        metrics=metrics,
        predictions=predictions,
        scaler=train_build.scaler,
        network=net,
    )


def export_plot_series(result: EvalResult, path: str | Path) -> None:
    """TSV of (period_start, actual, predicted) sorted by period; atomic write."""
    if not result.predictions:
        raise EmptyInputError("no predictions to export")
    rows = sorted(result.predictions, key=lambda row: row[0])
    lines = ["period_start\tactual\tpredicted"]
    lines.extend(f"{d.isoformat()}\t{repr(a)}\t{repr(p)}" for d, a, p in rows)
    try:
        atomic_write_text(path, "\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailureError(f"failed to write {path}: {exc}") from exc


def write_metrics_report(metrics: MetricsReport, path: str | Path) -> None:
    lines = [
        "metric\tvalue",
        f"mae\t{repr(metrics.mae)}",
        f"mse\t{repr(metrics.mse)}",
        f"rmse\t{repr(metrics.rmse)}",
        f"r_squared\t{repr(metrics.r_squared)}",
        f"n\t{metrics.n}",
    ]
    try:
        atomic_write_text(path, "\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailureError(f"failed to write {path}: {exc}") from exc
