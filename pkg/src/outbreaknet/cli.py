"""Command-line pipeline driver.

Subcommands: ingest, weather-sync, weather-aggregate, train, evaluate,
predict, plot-data. Human-readable progress goes to stderr; machine output
files land in the configured output directory. Exit codes: 0 success,
1 usage error, 2 data/validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

from . import evaluate as ev
from . import features as ft
from . import ingest as ig
from . import neuralnet as nn
from . import weather as wx
from .embeddings import EmbeddingCache, load_cache, normalize_key

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


class UnknownKeyError(ValueError):
    def __init__(self, lineno: int, key: str):
        super().__init__(f"line {lineno}: unknown config key {key!r}")
        self.lineno = lineno


class BadValueError(ValueError):
    def __init__(self, key: str, detail: str):
        super().__init__(f"bad value for {key!r}: {detail}")
        self.key = key


@dataclass
class Config:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    l2_lambda: float = 1e-4
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0
    layer_sizes: tuple[int, ...] = nn.DEFAULT_HIDDEN_SIZES  # hidden widths
    embed_dim: int = 64
    embed_seed: int = 0
    station: str = "VIDP:9:IN"
    disease_file: str = ""
    symptom_file: str = ""
    demographics_file: str = ""
    weather_cache_dir: str = "cache"
    weather_source_dir: str = ""
    embedding_cache_path: str = ""
    output_dir: str = ""

    def hyper_params(self) -> nn.HyperParams:
        return nn.HyperParams(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            l2_lambda=self.l2_lambda,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(tok.strip()) for tok in text.split(",") if tok.strip())


_CONFIG_FIELDS = {
    "learning_rate": ("learning_rate", float),
    "beta1": ("beta1", float),
    "beta2": ("beta2", float),
    "epsilon": ("epsilon", float),
    "lambda": ("l2_lambda", float),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "seed": ("seed", int),
    "layer_sizes": ("layer_sizes", _parse_int_tuple),
    "embed_dim": ("embed_dim", int),
    "embed_seed": ("embed_seed", int),
    "station": ("station", str),
    "disease_file": ("disease_file", str),
    "symptom_file": ("symptom_file", str),
    "demographics_file": ("demographics_file", str),
    "weather_cache_dir": ("weather_cache_dir", str),
    "weather_source_dir": ("weather_source_dir", str),
    "embedding_cache_path": ("embedding_cache_path", str),
    "output_dir": ("output_dir", str),
}

_BOUNDS_CHECKS = (
    ("learning_rate", lambda c: c.learning_rate > 0, "must be positive"),
    ("beta1", lambda c: 0 <= c.beta1 < 1, "must lie in [0, 1)"),
    ("beta2", lambda c: 0 <= c.beta2 < 1, "must lie in [0, 1)"),
    ("epsilon", lambda c: c.epsilon > 0, "must be positive"),
    ("lambda", lambda c: c.l2_lambda >= 0, "must be nonnegative"),
    ("epochs", lambda c: c.epochs >= 0, "must be nonnegative"),
    ("batch_size", lambda c: c.batch_size >= 1, "must be positive"),
    ("embed_dim", lambda c: c.embed_dim >= 1, "must be positive"),
    ("layer_sizes", lambda c: all(s >= 1 for s in c.layer_sizes), "sizes must be positive"),
)


def load_config(path: str | Path) -> Config:
    """Parse a flat `key = value` file; unknown keys are rejected."""
    config = Config()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key:
            raise UnknownKeyError(lineno, line)
        if key not in _CONFIG_FIELDS:
            raise UnknownKeyError(lineno, key)
        attr, parse = _CONFIG_FIELDS[key]
        try:
            setattr(config, attr, parse(value))
        except ValueError as exc:
            raise BadValueError(key, str(exc)) from exc
    for key, check, msg in _BOUNDS_CHECKS:
        if not check(config):
            raise BadValueError(key, msg)
    return config


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _output_dir(config: Config) -> Path:
    out = Path(config.output_dir) if config.output_dir else Path(
        "runs"
    ) / time.strftime("%Y%m%d-%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# shared pipeline assembly


@dataclass
class LoadedData:
    records: list[ig.DiseaseRecord]
    merged: list[ig.MergedHealthRecord]
    cache: EmbeddingCache
    schema: ft.FeatureSchema
    feature_config: ft.FeatureConfig
    reports: dict[str, ig.ValidationReport] = field(default_factory=dict)
    merge_warnings: list[str] = field(default_factory=list)


def _load_data(config: Config) -> LoadedData:
    if not config.disease_file:
        raise UsageError("config must set disease_file")
    with open(config.disease_file, encoding="utf-8") as fh:
        records, disease_report = ig.parse_disease_table(fh)

    profiles: list[ig.SymptomProfile] = []
    demographics: list[ig.DemographicsRecord] = []
    reports = {"disease": disease_report}
    if config.symptom_file:
        with open(config.symptom_file, encoding="utf-8") as fh:
            profiles, reports["symptoms"] = ig.parse_symptom_records(fh)
    if config.demographics_file:
        with open(config.demographics_file, encoding="utf-8") as fh:
            demographics, reports["demographics"] = ig.parse_demographics_records(fh)
    merged, merge_warnings = ig.merge_demographics(profiles, demographics)

    if config.embedding_cache_path:
        cache = load_cache(config.embedding_cache_path)
    else:
        cache = EmbeddingCache.empty(config.embed_dim)
    schema = ft.default_schema(cache.effective_dim(config.embed_dim))
    feature_config = ft.FeatureConfig(embed_seed=config.embed_seed, fallback_dim=config.embed_dim)
    return LoadedData(records, merged, cache, schema, feature_config, reports, merge_warnings)


def _report_to_stderr(name: str, report: ig.ValidationReport) -> None:
    _log(f"{name}: {report.row_count} rows, {len(report.error_list)} errors, "
         f"{len(report.warning_list)} warnings")
    for lineno, msg in report.error_list:
        _log(f"  error line {lineno}: {msg}")
    for lineno, msg in report.warning_list:
        _log(f"  warning line {lineno}: {msg}")


def _daily_from_cache(config: Config, days: set[date]) -> dict[date, wx.DailyWeatherSummary]:
    station = wx.StationKey(config.station)
    daily: dict[date, wx.DailyWeatherSummary] = {}
    for day in sorted(days):
        path = wx.cache_path_for(config.weather_cache_dir, station, day)
        if not path.exists():
            raise wx.EmptyInputError(f"no cached weather for {station.key} on {day}")
        obs = wx.read_observations_file(path)
        if not obs:
            raise wx.EmptyDayError(f"{station.key} {day}: cached as empty")
        daily[day] = wx.aggregate_day(obs, day)
    return daily


def _period_weather_for(config: Config, records: list[ig.DiseaseRecord]):
    periods = {(r.period_start, r.period_end) for r in records}
    days: set[date] = set()
    for start, end in periods:
        cur = start
        while cur <= end:
            days.add(cur)
            cur += timedelta(days=1)
    daily = _daily_from_cache(config, days)
    return wx.summaries_for_periods(daily, sorted(periods))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_ingest(args) -> int:
    config = load_config(args.config)
    data = _load_data(config)
    out_dir = _output_dir(config)

    validation = ig.validate_dataset(data.records)
    for name, report in data.reports.items():
        _report_to_stderr(name, report)
    _report_to_stderr("dataset checks", validation)
    for msg in data.merge_warnings:
        _log(f"  warning: {msg}")

    lines = ["source\tline\tlevel\tmessage"]
    for name, report in {**data.reports, "dataset": validation}.items():
        for lineno, msg in report.error_list:
            lines.append(f"{name}\t{lineno}\terror\t{msg}")
        for lineno, msg in report.warning_list:
            lines.append(f"{name}\t{lineno}\twarning\t{msg}")
    wx.atomic_write_text(out_dir / "ingest_report.tsv", "\n".join(lines) + "\n")

    if args.emit_keys:
        keys = {r.disease_name for r in data.records}
        for m in data.merged:
            keys.update(m.profile.symptoms)
        cache_root = Path(config.weather_cache_dir) / config.station
        if cache_root.is_dir():
            for path in sorted(cache_root.glob("*.tsv")):
                for o in wx.read_observations_file(path):
                    keys.add(normalize_key(o.phrase))
        keys.discard("")
        key_path = Path(args.emit_keys)
        wx.atomic_write_text(key_path, "\n".join(sorted(keys)) + "\n")
        _log(f"wrote {len(keys)} keys to {key_path}")

    if any(r.error_list for r in data.reports.values()):
        return EXIT_DATA
    return EXIT_OK


def _date_range(start: date, end: date):
    cur = start
    while cur <= end:
        yield cur
        cur += timedelta(days=1)


def _cmd_weather_sync(args) -> int:
    config = load_config(args.config)
    if not config.weather_source_dir:
        raise UsageError("config must set weather_source_dir for weather-sync")
    provider = wx.FixtureProvider(config.weather_source_dir)
    station = wx.StationKey(config.station)
    limiter = wx.RateLimiter(args.max_rps) if args.max_rps else None
    synced = empty = 0
    for day in _date_range(args.start, args.end):
        try:
            wx.fetch_observations(
                provider, station, day, config.weather_cache_dir, limiter=limiter
            )
            synced += 1
        except wx.EmptyDayError:
            empty += 1
            _log(f"warning: {day} has no observations")
    _log(f"synced {synced} days ({empty} empty) into {config.weather_cache_dir}")
    return EXIT_OK


def _cmd_weather_aggregate(args) -> int:
    config = load_config(args.config)
    out_dir = _output_dir(config)
    station = wx.StationKey(config.station)
    cache_root = Path(config.weather_cache_dir) / station.key
    if args.start and args.end:
        days = list(_date_range(args.start, args.end))
    else:
        days = sorted(date.fromisoformat(p.stem) for p in cache_root.glob("*.tsv"))
    summaries = []
    skipped = 0
    for day in days:
        path = wx.cache_path_for(config.weather_cache_dir, station, day)
        if not path.exists():
            skipped += 1
            _log(f"warning: no cache entry for {day}, skipping")
            continue
        obs = wx.read_observations_file(path)
        if not obs:
            skipped += 1
            continue
        summaries.append(wx.aggregate_day(obs, day))
    out_path = out_dir / "daily_summary.tsv"
    wx.write_daily_summaries(out_path, summaries)
    _log(f"aggregated {len(summaries)} days ({skipped} skipped) -> {out_path}")
    return EXIT_OK


def _require_clean(data: LoadedData) -> None:
    errors = [(name, e) for name, r in data.reports.items() for e in r.error_list]
    if errors:
        for name, (lineno, msg) in errors:
            _log(f"error in {name} line {lineno}: {msg}")
        raise ValueError(f"{len(errors)} validation errors; fix inputs first")


def _cmd_train(args) -> int:
    config = load_config(args.config)
    data = _load_data(config)
    _require_clean(data)
    out_dir = _output_dir(config)

    period_weather = _period_weather_for(config, data.records)
    build = ft.build_training_rows(
        data.records, period_weather, data.merged, data.cache, data.schema, data.feature_config
    )
    sizes = (data.schema.total_dim, *config.layer_sizes, 1)
    net = nn.init_network(sizes, config.seed)
    hp = config.hyper_params()
    _log(f"training on {len(build.rows)} rows, architecture {sizes}")
    history = nn.train(net, build.rows, hp)

    nn.save_checkpoint(out_dir / "model.ckpt", net, build.scaler)
    ft.write_feature_matrix(out_dir / "features.tsv", data.schema, build.rows)
    log_lines = ["epoch\tdata_loss\tregularized_loss"]
    log_lines += [
        f"{i}\t{repr(d)}\t{repr(r)}" for i, (d, r) in enumerate(history.epoch_losses, start=1)
    ]
    wx.atomic_write_text(out_dir / "training_log.tsv", "\n".join(log_lines) + "\n")
    if history.epoch_losses:
        _log(f"final data loss {history.final_data_loss:.6g} (scaled units)")
    _log(f"checkpoint -> {out_dir / 'model.ckpt'}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    config = load_config(args.config)
    data = _load_data(config)
    _require_clean(data)
    out_dir = _output_dir(config)

    period_weather = _period_weather_for(config, data.records)
    by_disease: dict[str, list[ig.DiseaseRecord]] = {}
    for rec in data.records:
        by_disease.setdefault(rec.disease_name, []).append(rec)

    inputs = ev.PipelineInputs(
        period_weather=period_weather,
        merged=data.merged,
        cache=data.cache,
        schema=data.schema,
        feature_config=data.feature_config,
        hidden_sizes=config.layer_sizes,
    )
    hp = config.hyper_params()
    hold_out = normalize_key(args.hold_out)
    _log(f"evaluating with {hold_out!r} held out "
         f"({sum(len(v) for k, v in by_disease.items() if k != hold_out)} training rows)")
    result = ev.leave_one_out_eval(by_disease, hold_out, hp, inputs)

    ev.write_metrics_report(result.metrics, out_dir / "metrics.tsv")
    ev.export_plot_series(result, out_dir / "predictions.tsv")
    nn.save_checkpoint(out_dir / "model.ckpt", result.network, result.scaler)
    m = result.metrics
    _log(f"held-out {hold_out}: mae={m.mae:.4f} mse={m.mse:.4f} "
         f"rmse={m.rmse:.4f} r2={m.r_squared:.4f} n={m.n}")
    _log(f"outputs -> {out_dir}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    config = load_config(args.config)
    data = _load_data(config)
    net, scaler = nn.load_checkpoint(args.checkpoint)
    if net.input_dim != data.schema.total_dim:
        raise ft.LengthMismatchError(
            f"checkpoint expects dim {net.input_dim}, schema builds {data.schema.total_dim}"
        )

    period = (args.period_start, args.period_end)
    stub = ig.DiseaseRecord(
        disease_name=normalize_key(args.disease),
        period_start=period[0],
        period_end=period[1],
        region="",
        value=0.0,
        value_type="cases",
    )
    days = set(_date_range(*period))
    daily = _daily_from_cache(config, days)
    period_weather = wx.summaries_for_periods(daily, [period])
    build = ft.build_training_rows(
        [stub], period_weather, data.merged, data.cache, data.schema,
        data.feature_config, scaler=scaler,
    )
    value = nn.predict(net, scaler, build.rows[0][0])
    print(repr(value))
    return EXIT_OK


def _cmd_plot_data(args) -> int:
    config = load_config(args.config)
    out_dir = _output_dir(config)
    if args.field not in wx.DailyWeatherSummary.__dataclass_fields__ or args.field == "date":
        raise UsageError(f"unknown summary field {args.field!r}")
    station = wx.StationKey(config.station)
    cache_root = Path(config.weather_cache_dir) / station.key
    if args.start and args.end:
        days = list(_date_range(args.start, args.end))
    else:
        days = sorted(date.fromisoformat(p.stem) for p in cache_root.glob("*.tsv"))
    lines = [f"date\t{args.field}"]
    count = 0
    for day in days:
        path = wx.cache_path_for(config.weather_cache_dir, station, day)
        if not path.exists():
            continue
        obs = wx.read_observations_file(path)
        if not obs:
            continue
        summary = wx.aggregate_day(obs, day)
        value = getattr(summary, args.field)
        rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{day.isoformat()}\t{rendered}")
        count += 1
    out_path = out_dir / f"weather_{args.field}.tsv"
    wx.atomic_write_text(out_path, "\n".join(lines) + "\n")
    _log(f"wrote {count} points -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="outbreaknet", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.set_defaults(func=func)
        return p

    p = add("ingest", _cmd_ingest, "parse and validate the input files")
    p.add_argument("--emit-keys", metavar="PATH", default="",
                   help="also write the text keys needing embeddings")

    p = add("weather-sync", _cmd_weather_sync, "fill the weather cache from the source dir")
    p.add_argument("--start", type=date.fromisoformat, required=True)
    p.add_argument("--end", type=date.fromisoformat, required=True)
    p.add_argument("--max-rps", type=float, default=0.0, help="provider rate limit")

    p = add("weather-aggregate", _cmd_weather_aggregate, "emit the daily summary TSV")
    p.add_argument("--start", type=date.fromisoformat, default=None)
    p.add_argument("--end", type=date.fromisoformat, default=None)

    add("train", _cmd_train, "train on every disease and save a checkpoint")

    p = add("evaluate", _cmd_evaluate, "leave-one-disease-out evaluation")
    p.add_argument("--hold-out", required=True, help="disease to hold out for testing")

    p = add("predict", _cmd_predict, "predict one disease-period case count")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--disease", required=True)
    p.add_argument("--period-start", type=date.fromisoformat, required=True)
    p.add_argument("--period-end", type=date.fromisoformat, required=True)

    p = add("plot-data", _cmd_plot_data, "emit a weather-trend series for plotting")
    p.add_argument("--field", required=True, help="daily summary field, e.g. avg_temp_c")
    p.add_argument("--start", type=date.fromisoformat, default=None)
    p.add_argument("--end", type=date.fromisoformat, default=None)

    return parser


def run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except nn.NonFiniteLossError as exc:
        _log(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except (ValueError, OSError, wx.ProviderUnavailableError, wx.EmptyDayError) as exc:
        _log(f"error: {exc}")
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
