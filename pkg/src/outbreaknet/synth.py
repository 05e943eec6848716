"""Seeded synthetic fixtures: a weather history plus nine monthly disease
series whose case counts are a noiseless smooth function of the period's
weather aggregates plus a small per-disease offset keyed to the disease-name
embedding. Used by the end-to-end tests and the example scripts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .embeddings import hash_embed
from .ingest import (
    DemographicsRecord,
    DiseaseRecord,
    MergedHealthRecord,
    SymptomProfile,
    merge_demographics,
    serialize_disease_table,
)
from .weather import (
    DailyWeatherSummary,
    PeriodWeatherSummary,
    StationKey,
    WeatherObservation,
    aggregate_day,
    serialize_observations_tsv,
    summaries_for_periods,
)

IST = timezone(timedelta(hours=5, minutes=30))

DISEASE_NAMES = (
    "cholera",
    "covid-19",
    "dengue",
    "malaria",
    "measles",
    "pneumonia",
    "tuberculosis",
    "typhoid",
    "influenza",
)

SYMPTOMS = {
    "cholera": ("watery diarrhea", "vomiting", "leg cramps", "dehydration"),
    "covid-19": ("fever", "dry cough", "fatigue", "loss of taste"),
    "dengue": ("high fever", "severe headache", "joint pain", "rash"),
    "malaria": ("fever", "chills", "sweating", "headache"),
    "measles": ("fever", "rash", "runny nose", "red eyes"),
    "pneumonia": ("chest pain", "cough", "shortness of breath", "fever"),
    "tuberculosis": ("persistent cough", "night sweats", "weight loss", "fever"),
    "typhoid": ("prolonged fever", "abdominal pain", "constipation", "headache"),
    "influenza": ("fever", "cough", "sore throat", "muscle aches"),
}

PHRASES = ("Fair", "Haze", "Partly Cloudy", "Rain", "Fog")
CLOUD_COVERS = ("Clear", "Partly Cloudy", "Mostly Cloudy", "Overcast")
COMPASS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")


@dataclass
class SyntheticSpec:
    seed: int = 2024
    start_year: int = 2015
    months: int = 60
    obs_per_day: int = 8
    region: str = "IN"
    station: str = "VIDP:9:IN"
    embed_seed: int = 0
    embed_dim: int = 64
    base_cases: float = 3000.0
    weather_amplitude: float = 1000.0
    offset_scale: float = 150.0


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    records: list[DiseaseRecord]
    profiles: list[SymptomProfile]
    demographics: list[DemographicsRecord]
    observations: dict[date, list[WeatherObservation]]
    daily: dict[date, DailyWeatherSummary]
    period_weather: dict[tuple[date, date], PeriodWeatherSummary] = field(default_factory=dict)

    @property
    def held_out(self) -> str:
        return DISEASE_NAMES[-1]

    def records_by_disease(self) -> dict[str, list[DiseaseRecord]]:
        out: dict[str, list[DiseaseRecord]] = {}
        for rec in self.records:
            out.setdefault(rec.disease_name, []).append(rec)
        return out

    def merged_records(self) -> list[MergedHealthRecord]:
        merged, _ = merge_demographics(self.profiles, self.demographics)
        return merged


def add_months(d: date, n: int) -> date:
    total = d.month - 1 + n
    return date(d.year + total // 12, total % 12 + 1, 1)


def month_end(first: date) -> date:
    return add_months(first, 1) - timedelta(days=1)


def _compass(deg: float) -> str:
    return COMPASS[int(((deg + 22.5) % 360.0) // 45.0)]


def _day_observations(rng: np.random.Generator, day: date, n_obs: int) -> list[WeatherObservation]:
    doy = day.timetuple().tm_yday
    season = math.sin(2.0 * math.pi * (doy - 100) / 365.25)
    day_temp = 25.0 + 8.0 * season + rng.normal(0.0, 1.5)
    day_pressure = 1008.0 - 6.0 * season + rng.normal(0.0, 1.0)
    day_wind = 4.0 + 2.0 * abs(season) + abs(rng.normal(0.0, 1.0))
    day_uv = max(0.5, 6.0 + 3.0 * season + rng.normal(0.0, 0.5))
    day_deg = float(rng.uniform(0.0, 360.0))
    # mildly season-dependent phrase distribution
    wet = max(0.0, season)
    weights = np.array([1.5 - wet, 1.0, 1.0, 0.3 + 1.5 * wet, 0.4 * (1.0 - wet) + 0.1])
    weights /= weights.sum()

    obs = []
    for k in range(n_obs):
        hour = int(k * 24 / n_obs)
        diurnal = 4.0 * math.sin(2.0 * math.pi * (hour - 9) / 24.0)
        temp = day_temp + diurnal + rng.normal(0.0, 0.3)
        deg = (day_deg + rng.normal(0.0, 15.0)) % 360.0
        obs.append(
            WeatherObservation(
                timestamp=datetime(day.year, day.month, day.day, hour, 0, tzinfo=IST),
                temp_c=round(temp, 2),
                phrase=str(rng.choice(PHRASES, p=weights)),
                wind_mph=round(max(0.0, day_wind + rng.normal(0.0, 0.8)), 2),
                wind_deg=round(deg, 1),
                wind_dir=_compass(deg),
                pressure=round(day_pressure + rng.normal(0.0, 0.4), 2),
                dew_point_c=round(temp - 8.0 + rng.normal(0.0, 0.5), 2),
                heat_index_c=round(temp + 2.0 + max(0.0, season) * 2.0, 2),
                visibility_km=round(float(rng.uniform(3.0, 10.0)), 2),
                cloud_cover=str(rng.choice(CLOUD_COVERS)),
                uv_index=round(max(0.0, day_uv + rng.normal(0.0, 0.3)), 2),
            )
        )
    return obs


def _weather_signal(summary: PeriodWeatherSummary) -> float:
    """Smooth nonlinear function of a period's weather aggregates."""
    t = (summary.avg_temp_c - 25.0) / 8.0
    p = (summary.avg_pressure - 1008.0) / 6.0
    u = (summary.avg_uv_index - 6.0) / 3.0
    return t + 0.5 * t * t + 0.6 * p + 0.4 * u


def generate_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """Deterministic synthetic dataset for the given spec."""
    rng = np.random.default_rng(spec.seed)
    start = date(spec.start_year, 1, 1)
    end = month_end(add_months(start, spec.months - 1))

    observations: dict[date, list[WeatherObservation]] = {}
    daily: dict[date, DailyWeatherSummary] = {}
    day = start
    while day <= end:
        obs = _day_observations(rng, day, spec.obs_per_day)
        observations[day] = obs
        daily[day] = aggregate_day(obs, day)
        day += timedelta(days=1)

    periods = [
        (add_months(start, m), month_end(add_months(start, m))) for m in range(spec.months)
    ]
    period_weather = summaries_for_periods(daily, periods)

    # per-disease offset keyed to the disease-name embedding
    direction = np.random.default_rng(spec.seed + 1).normal(size=spec.embed_dim)
    direction /= np.linalg.norm(direction)

    records: list[DiseaseRecord] = []
    for name in DISEASE_NAMES:
        emb = hash_embed(name, spec.embed_dim, spec.embed_seed)
        offset = spec.offset_scale * float(emb.values @ direction)
        for p_start, p_end in periods:
            signal = _weather_signal(period_weather[(p_start, p_end)])
            value = spec.base_cases + spec.weather_amplitude * signal + offset
            records.append(
                DiseaseRecord(
                    disease_name=name,
                    period_start=p_start,
                    period_end=p_end,
                    region=spec.region,
                    value=round(value, 6),
                    value_type="cases",
                )
            )

    profiles = [
        SymptomProfile(
            code=f"D{i:03d}",
            name=name,
            symptoms=SYMPTOMS[name],
            description=f"synthetic profile for {name}",
            test_procedure="laboratory confirmation",
            medication_desc="supportive care",
            medications=("oral rehydration", "antipyretics"),
            symptom_desc="; ".join(SYMPTOMS[name]),
        )
        for i, name in enumerate(DISEASE_NAMES, start=1)
    ]
    demographics = [
        DemographicsRecord(
            name=name,
            risk_years="0-5, 65+",
            less_risk_years="20-40",
            high_risk_race_ethnicity="all",
            high_risk_gender="all",
            less_risk_race_ethnicity="all",
            less_risk_gender="all",
        )
        for name in DISEASE_NAMES
    ]
    return SyntheticDataset(
        spec=spec,
        records=records,
        profiles=profiles,
        demographics=demographics,
        observations=observations,
        daily=daily,
        period_weather=period_weather,
    )


def _record_file_text(profiles, demographics) -> tuple[str, str]:
    symptom_blocks = []
    for p in profiles:
        symptom_blocks.append(
            "\n".join(
                [
                    f"code: {p.code}",
                    f"name: {p.name}",
                    f"symptoms: {', '.join(p.symptoms)}",
                    f"description: {p.description}",
                    f"test_procedure: {p.test_procedure}",
                    f"medication_desc: {p.medication_desc}",
                    f"medications: {', '.join(p.medications)}",
                    f"symptom_desc: {p.symptom_desc}",
                ]
            )
        )
    demo_blocks = []
    for d in demographics:
        demo_blocks.append(
            "\n".join(
                [
                    f"name: {d.name}",
                    f"risk_years: {d.risk_years}",
                    f"less_risk_years: {d.less_risk_years}",
                    f"high_risk_race_ethnicity: {d.high_risk_race_ethnicity}",
                    f"high_risk_gender: {d.high_risk_gender}",
                    f"less_risk_race_ethnicity: {d.less_risk_race_ethnicity}",
                    f"less_risk_gender: {d.less_risk_gender}",
                ]
            )
        )
    return "\n\n".join(symptom_blocks) + "\n", "\n\n".join(demo_blocks) + "\n"


def write_fixtures(dataset: SyntheticDataset, root: str | Path, epochs: int = 400) -> Path:
    """Write disease/symptom/demographics files, the raw weather source tree,
    and a ready-to-run config. Returns the config path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    spec = dataset.spec

    (root / "disease.csv").write_text(serialize_disease_table(dataset.records), encoding="utf-8")
    symptoms_text, demo_text = _record_file_text(dataset.profiles, dataset.demographics)
    (root / "symptoms.txt").write_text(symptoms_text, encoding="utf-8")
    (root / "demographics.txt").write_text(demo_text, encoding="utf-8")

    source_dir = root / "weather_source"
    station = StationKey(spec.station)
    for day, obs in dataset.observations.items():
        path = source_dir / station.key / f"{day.isoformat()}.tsv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_observations_tsv(obs), encoding="utf-8")

    config_path = root / "run.cfg"
    config_path.write_text(
        "\n".join(
            [
                f"disease_file = {root / 'disease.csv'}",
                f"symptom_file = {root / 'symptoms.txt'}",
                f"demographics_file = {root / 'demographics.txt'}",
                f"weather_source_dir = {source_dir}",
                f"weather_cache_dir = {root / 'cache'}",
                f"output_dir = {root / 'out'}",
                f"station = {spec.station}",
                f"embed_dim = {spec.embed_dim}",
                f"embed_seed = {spec.embed_seed}",
                "seed = 7",
                f"epochs = {epochs}",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    return config_path
