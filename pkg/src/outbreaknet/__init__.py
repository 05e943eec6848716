"""Outbreak case-count forecasting from weather aggregates and text embeddings."""

__version__ = "0.1.0"

from .embeddings import EmbeddingCache, embed_text, hash_embed, load_cache, normalize_key
from .evaluate import MetricsReport, compute_metrics, leave_one_out_eval
from .features import FeatureSchema, ScalerParams, build_training_rows, default_schema
from .ingest import DiseaseRecord, parse_disease_table, parse_symptom_records
from .neuralnet import HyperParams, Network, forward, grad_check, init_network, predict, train
from .weather import DailyWeatherSummary, aggregate_day, aggregate_period, fetch_observations

__all__ = [
    "EmbeddingCache",
    "embed_text",
    "hash_embed",
    "load_cache",
    "normalize_key",
    "MetricsReport",
    "compute_metrics",
    "leave_one_out_eval",
    "FeatureSchema",
    "ScalerParams",
    "build_training_rows",
    "default_schema",
    "DiseaseRecord",
    "parse_disease_table",
    "parse_symptom_records",
    "HyperParams",
    "Network",
    "forward",
    "grad_check",
    "init_network",
    "predict",
    "train",
    "DailyWeatherSummary",
    "aggregate_day",
    "aggregate_period",
    "fetch_observations",
]
