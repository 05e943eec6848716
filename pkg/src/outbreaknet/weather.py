"""Weather acquisition and aggregation.

Raw observations come through a provider contract (any transport that can
yield a station-local day of rows) fronted by an on-disk TSV cache, and are
rolled up into 14-column daily summaries, then into reporting-period
summaries. Pressure is treated as hPa, visibility as km, dew point and heat
index as degrees C.
"""

from __future__ import annotations

import math
import os
import tempfile
import threading
import time
from collections import Counter
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Callable, Iterable, Protocol

MPH_TO_KPH = 1.609344

OBSERVATION_COLUMNS = (
    "timestamp",
    "temp_c",
    "phrase",
    "wind_mph",
    "wind_deg",
    "wind_dir",
    "pressure",
    "dew_point_c",
    "heat_index_c",
    "visibility_km",
    "cloud_cover",
    "uv_index",
)

DAILY_SUMMARY_COLUMNS = (
    "Date",
    "Average Temperature (C)",
    "Average Temperature (F)",
    "Most Repeated Weather Phrase",
    "Average Wind Speed (mph)",
    "Average Wind Speed (kph)",
    "Average Wind Degree",
    "Most Repeated Wind Direction",
    "Average Pressure",
    "Average Dew Point",
    "Average Heat Index",
    "Average Visibility",
    "Most Repeated Cloud Cover",
    "Average UV Index",
)

# observation fields averaged directly (F and kph are derived from these)
_MEAN_FIELDS = (
    "temp_c",
    "wind_mph",
    "wind_deg",
    "pressure",
    "dew_point_c",
    "heat_index_c",
    "visibility_km",
    "uv_index",
)


class EmptyInputError(ValueError):
    pass


class DateMismatchError(ValueError):
    pass


class NegativeSpeedError(ValueError):
    pass


class OutOfRangeDayError(ValueError):
    pass


class ObservationFormatError(ValueError):
    """A raw observation TSV row violates the column contract."""


class ProviderError(RuntimeError):
    """Transient provider failure; fetch retries these."""


class ProviderUnavailableError(RuntimeError):
    """Provider failed after retries and the cache has no entry."""


class EmptyDayError(RuntimeError):
    """The day has zero observations (cached as such to avoid refetching)."""


@dataclass(frozen=True)
class StationKey:
    key: str

    def __post_init__(self):
        if not self.key:
            raise ValueError("station key must be non-empty")


@dataclass(frozen=True)
class WeatherObservation:
    """One raw observation; numeric fields may be missing (None)."""

    timestamp: datetime
    temp_c: float | None
    phrase: str
    wind_mph: float | None
    wind_deg: float | None
    wind_dir: str
    pressure: float | None
    dew_point_c: float | None
    heat_index_c: float | None
    visibility_km: float | None
    cloud_cover: str
    uv_index: float | None


@dataclass(frozen=True)
class DailyWeatherSummary:
    date: date
    avg_temp_c: float
    avg_temp_f: float
    top_phrase: str
    avg_wind_mph: float
    avg_wind_kph: float
    avg_wind_deg: float
    top_wind_dir: str
    avg_pressure: float
    avg_dew_point: float
    avg_heat_index: float
    avg_visibility: float
    top_cloud_cover: str
    avg_uv_index: float


@dataclass(frozen=True)
class PeriodWeatherSummary:
    period_start: date
    period_end: date
    avg_temp_c: float
    avg_temp_f: float
    top_phrase: str
    avg_wind_mph: float
    avg_wind_kph: float
    avg_wind_deg: float
    top_wind_dir: str
    avg_pressure: float
    avg_dew_point: float
    avg_heat_index: float
    avg_visibility: float
    top_cloud_cover: str
    avg_uv_index: float
    day_count: int


class ObservationProvider(Protocol):
    def fetch(self, station: StationKey, day: date) -> list[WeatherObservation]:
        """Return all raw observations for the station-local day."""


def celsius_to_fahrenheit(c: float) -> float:
    return c * 9.0 / 5.0 + 32.0


def mph_to_kph(v: float) -> float:
    if v < 0:
        raise NegativeSpeedError(f"negative speed {v}")
    return v * MPH_TO_KPH


def mode_categorical(values: list[str]) -> str:
    """Most frequent value; ties broken by the lexicographically smallest."""
    if not values:
        raise EmptyInputError("mode of empty list")
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def _field_mean(obs: list[WeatherObservation], name: str) -> float:
    vals = [getattr(o, name) for o in obs if getattr(o, name) is not None]
    if not vals:
        raise EmptyInputError(f"no values present for field {name!r}")
    return sum(vals) / len(vals)


def aggregate_day(obs: list[WeatherObservation], day: date) -> DailyWeatherSummary:
    """Collapse one station-local day of observations into the daily summary.

    Numeric fields are field-wise arithmetic means over present values;
    categorical fields are modes; F and kph are derived from the C/mph means.
    """
    if not obs:
        raise EmptyInputError("no observations")
    for o in obs:
        if o.timestamp.date() != day:
            raise DateMismatchError(f"observation at {o.timestamp} is not on {day}")
    means = {name: _field_mean(obs, name) for name in _MEAN_FIELDS}
    return DailyWeatherSummary(
        date=day,
        avg_temp_c=means["temp_c"],
        avg_temp_f=celsius_to_fahrenheit(means["temp_c"]),
        top_phrase=mode_categorical([o.phrase for o in obs]),
        avg_wind_mph=means["wind_mph"],
        avg_wind_kph=mph_to_kph(means["wind_mph"]),
        avg_wind_deg=means["wind_deg"],
        top_wind_dir=mode_categorical([o.wind_dir for o in obs]),
        avg_pressure=means["pressure"],
        avg_dew_point=means["dew_point_c"],
        avg_heat_index=means["heat_index_c"],
        avg_visibility=means["visibility_km"],
        top_cloud_cover=mode_categorical([o.cloud_cover for o in obs]),
        avg_uv_index=means["uv_index"],
    )


_PERIOD_MEAN_FIELDS = (
    "avg_temp_c",
    "avg_wind_mph",
    "avg_wind_deg",
    "avg_pressure",
    "avg_dew_point",
    "avg_heat_index",
    "avg_visibility",
    "avg_uv_index",
)


def aggregate_period(
    days: list[DailyWeatherSummary], period_start: date, period_end: date
) -> PeriodWeatherSummary:
    """Roll daily summaries up to a reporting period, each day weighted equally."""
    if not days:
        raise EmptyInputError("no daily summaries")
    for d in days:
        if not (period_start <= d.date <= period_end):
            raise OutOfRangeDayError(f"day {d.date} outside [{period_start}, {period_end}]")
    means = {name: sum(getattr(d, name) for d in days) / len(days) for name in _PERIOD_MEAN_FIELDS}
    return PeriodWeatherSummary(
        period_start=period_start,
        period_end=period_end,
        avg_temp_c=means["avg_temp_c"],
        avg_temp_f=celsius_to_fahrenheit(means["avg_temp_c"]),
        top_phrase=mode_categorical([d.top_phrase for d in days]),
        avg_wind_mph=means["avg_wind_mph"],
        avg_wind_kph=mph_to_kph(means["avg_wind_mph"]),
        avg_wind_deg=means["avg_wind_deg"],
        top_wind_dir=mode_categorical([d.top_wind_dir for d in days]),
        avg_pressure=means["avg_pressure"],
        avg_dew_point=means["avg_dew_point"],
        avg_heat_index=means["avg_heat_index"],
        avg_visibility=means["avg_visibility"],
        top_cloud_cover=mode_categorical([d.top_cloud_cover for d in days]),
        avg_uv_index=means["avg_uv_index"],
        day_count=len(days),
    )


# ---------------------------------------------------------------------------
# raw observation TSV (fixture and cache format)

_NUMERIC_BOUNDS_CHECKS = {
    "wind_mph": lambda v: v >= 0,
    "wind_deg": lambda v: 0 <= v < 360,
    "visibility_km": lambda v: v >= 0,
    "uv_index": lambda v: v >= 0,
}


def _parse_optional_float(token: str, name: str, lineno: int) -> float | None:
    if token == "":
        return None
    try:
        value = float(token)
    except ValueError as exc:
        raise ObservationFormatError(f"line {lineno}: bad {name} {token!r}") from exc
    if not math.isfinite(value):
        raise ObservationFormatError(f"line {lineno}: non-finite {name}")
    check = _NUMERIC_BOUNDS_CHECKS.get(name)
    if check is not None and not check(value):
        raise ObservationFormatError(f"line {lineno}: {name} out of range: {value}")
    return value


def parse_observations_tsv(text: str) -> list[WeatherObservation]:
    lines = text.splitlines()
    if not lines or lines[0] != "\t".join(OBSERVATION_COLUMNS):
        raise ObservationFormatError("bad or missing observation header")
    obs: list[WeatherObservation] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(OBSERVATION_COLUMNS):
            raise ObservationFormatError(
                f"line {lineno}: expected {len(OBSERVATION_COLUMNS)} columns, got {len(cells)}"
            )
        try:
            ts = datetime.fromisoformat(cells[0])
        except ValueError as exc:
            raise ObservationFormatError(f"line {lineno}: bad timestamp {cells[0]!r}") from exc
        numeric = {
            name: _parse_optional_float(cells[i], name, lineno)
            for i, name in enumerate(OBSERVATION_COLUMNS)
            if name not in ("timestamp", "phrase", "wind_dir", "cloud_cover")
        }
        obs.append(
            WeatherObservation(
                timestamp=ts,
                temp_c=numeric["temp_c"],
                phrase=cells[2],
                wind_mph=numeric["wind_mph"],
                wind_deg=numeric["wind_deg"],
                wind_dir=cells[5],
                pressure=numeric["pressure"],
                dew_point_c=numeric["dew_point_c"],
                heat_index_c=numeric["heat_index_c"],
                visibility_km=numeric["visibility_km"],
                cloud_cover=cells[10],
                uv_index=numeric["uv_index"],
            )
        )
    return obs


def _fmt_optional(v: float | None) -> str:
    return "" if v is None else repr(v)


def serialize_observations_tsv(obs: Iterable[WeatherObservation]) -> str:
    lines = ["\t".join(OBSERVATION_COLUMNS)]
    for o in obs:
        lines.append(
            "\t".join(
                (
                    o.timestamp.isoformat(),
                    _fmt_optional(o.temp_c),
                    o.phrase,
                    _fmt_optional(o.wind_mph),
                    _fmt_optional(o.wind_deg),
                    o.wind_dir,
                    _fmt_optional(o.pressure),
                    _fmt_optional(o.dew_point_c),
                    _fmt_optional(o.heat_index_c),
                    _fmt_optional(o.visibility_km),
                    o.cloud_cover,
                    _fmt_optional(o.uv_index),
                )
            )
        )
    return "\n".join(lines) + "\n"


def read_observations_file(path: str | Path) -> list[WeatherObservation]:
    return parse_observations_tsv(Path(path).read_text(encoding="utf-8"))


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write-then-rename so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_daily_summaries(path: str | Path, summaries: Iterable[DailyWeatherSummary]) -> None:
    """Emit the 14-column daily summary TSV."""
    lines = ["\t".join(DAILY_SUMMARY_COLUMNS)]
    for s in summaries:
        lines.append(
            "\t".join(
                (
                    s.date.isoformat(),
                    repr(s.avg_temp_c),
                    repr(s.avg_temp_f),
                    s.top_phrase,
                    repr(s.avg_wind_mph),
                    repr(s.avg_wind_kph),
                    repr(s.avg_wind_deg),
                    s.top_wind_dir,
                    repr(s.avg_pressure),
                    repr(s.avg_dew_point),
                    repr(s.avg_heat_index),
                    repr(s.avg_visibility),
                    s.top_cloud_cover,
                    repr(s.avg_uv_index),
                )
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# provider-backed fetch with on-disk cache

class RateLimiter:
    """Caps calls per second; thread-safe, injectable clock for tests."""

    def __init__(
        self,
        max_per_second: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_per_second <= 0:
            raise ValueError("max_per_second must be positive")
        self._interval = 1.0 / max_per_second
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def wait(self) -> None:
        with self._lock:
            now = self._clock()
            delay = self._next_allowed - now
            if delay > 0:
                self._sleep(delay)
                now = self._next_allowed
            self._next_allowed = max(now, self._next_allowed) + self._interval


class FixtureProvider:
    """Provider reading per-day TSV files from a directory tree.

    Layout mirrors the cache: <root>/<station>/<YYYY-MM-DD>.tsv.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.calls = 0

    def fetch(self, station: StationKey, day: date) -> list[WeatherObservation]:
        self.calls += 1
        path = self.root / station.key / f"{day.isoformat()}.tsv"
        if not path.exists():
            raise ProviderError(f"no fixture for {station.key} on {day}")
        return read_observations_file(path)


def cache_path_for(cache_dir: str | Path, station: StationKey, day: date) -> Path:
    return Path(cache_dir) / station.key / f"{day.isoformat()}.tsv"


_cache_locks: dict[tuple[str, date], threading.Lock] = {}
_cache_locks_guard = threading.Lock()


def _lock_for(station: StationKey, day: date) -> threading.Lock:
    with _cache_locks_guard:
        return _cache_locks.setdefault((station.key, day), threading.Lock())


def fetch_observations(
    provider: ObservationProvider,
    station: StationKey,
    day: date,
    cache_dir: str | Path,
    *,
    backoff: tuple[float, ...] = (1.0, 2.0, 4.0),
    sleep: Callable[[float], None] = time.sleep,
    limiter: RateLimiter | None = None,
) -> list[WeatherObservation]:
    """Return the day's observations, cache-first.

    On a cache miss the provider is asked, retrying transient failures with
    exponential backoff; a successful answer (even an empty one) is written
    to the cache before returning. Empty days raise EmptyDayError whether
    fresh or cached.
    """
    path = cache_path_for(cache_dir, station, day)
    if path.exists():
        obs = read_observations_file(path)
        if not obs:
            raise EmptyDayError(f"{station.key} {day}: cached as empty")
        return obs

    last_err: Exception | None = None
    obs = None
    for delay in (0.0,) + backoff:
        if delay:
            sleep(delay)
        if limiter is not None:
            limiter.wait()
        try:
            obs = provider.fetch(station, day)
            break
        except ProviderError as exc:
            last_err = exc
    if obs is None:
        raise ProviderUnavailableError(
            f"{station.key} {day}: provider failed after retries and cache is cold"
        ) from last_err

    with _lock_for(station, day):
        if not path.exists():
            atomic_write_text(path, serialize_observations_tsv(obs))
    if not obs:
        raise EmptyDayError(f"{station.key} {day}: provider returned zero observations")
    return obs


def summaries_for_periods(
    daily: dict[date, DailyWeatherSummary],
    periods: Iterable[tuple[date, date]],
) -> dict[tuple[date, date], PeriodWeatherSummary]:
    """Aggregate daily summaries over each distinct (start, end) period.

    Every day of a period must be present in `daily`; missing days raise
    EmptyInputError naming the period and date.
    """
    out: dict[tuple[date, date], PeriodWeatherSummary] = {}
    for start, end in periods:
        if (start, end) in out:
            continue
        days = []
        cur = start
        while cur <= end:
            summary = daily.get(cur)
            if summary is None:
                raise EmptyInputError(f"no daily weather for {cur} in period {start}..{end}")
            days.append(summary)
            cur = cur + timedelta(days=1)
        out[(start, end)] = aggregate_period(days, start, end)
    return out
