"""Parsers for the disease case-count CSV and the line-structured
symptom/demographics record files, plus the merge and dataset sanity checks.

Row-level problems are collected into a ValidationReport rather than raised,
so one bad row cannot discard a large file. Only a wrong header aborts.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, TextIO

from .embeddings import normalize_key

DISEASE_HEADER = "disease,period_start,period_end,region,value,value_type"
VALUE_TYPES = ("cases", "deaths", "rate_per_100k")

SYMPTOM_KEYS = (
    "code",
    "name",
    "symptoms",
    "description",
    "test_procedure",
    "medication_desc",
    "medications",
    "symptom_desc",
)
DEMOGRAPHICS_KEYS = (
    "name",
    "risk_years",
    "less_risk_years",
    "high_risk_race_ethnicity",
    "high_risk_gender",
    "less_risk_race_ethnicity",
    "less_risk_gender",
)

_ISO_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


class MissingHeaderError(ValueError):
    """First line of a disease CSV does not match the canonical header."""


class DuplicateKeyError(ValueError):
    """Two demographics records share the same normalized name."""


@dataclass(frozen=True)
class DiseaseRecord:
    """One reporting-period observation of a disease."""

    disease_name: str
    period_start: date
    period_end: date
    region: str
    value: float
    value_type: str


@dataclass(frozen=True)
class SymptomProfile:
    code: str
    name: str
    symptoms: tuple[str, ...] = ()
    description: str = ""
    test_procedure: str = ""
    medication_desc: str = ""
    medications: tuple[str, ...] = ()
    symptom_desc: str = ""


@dataclass(frozen=True)
class DemographicsRecord:
    name: str
    risk_years: str = ""
    less_risk_years: str = ""
    high_risk_race_ethnicity: str = ""
    high_risk_gender: str = ""
    less_risk_race_ethnicity: str = ""
    less_risk_gender: str = ""


@dataclass(frozen=True)
class MergedHealthRecord:
    profile: SymptomProfile
    demographics: DemographicsRecord | None = None


@dataclass
class ValidationReport:
    """Accepted-row count plus per-line errors and warnings (1-based lines)."""

    row_count: int = 0
    error_list: list[tuple[int, str]] = field(default_factory=list)
    warning_list: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.error_list


def _as_lines(content: str | TextIO) -> list[str]:
    if isinstance(content, str):
        text = content
    else:
        text = content.read()
    return text.splitlines()


def parse_disease_table(content: str | TextIO) -> tuple[list[DiseaseRecord], ValidationReport]:
    """Parse the disease CSV; bad rows become errors, never aborts past the header."""
    lines = _as_lines(content)
    report = ValidationReport()
    if not lines or lines[0] != DISEASE_HEADER:
        got = lines[0] if lines else "<empty file>"
        raise MissingHeaderError(f"expected header {DISEASE_HEADER!r}, got {got!r}")

    records: list[DiseaseRecord] = []
    reader = csv.reader(lines[1:])
    for offset, row in enumerate(reader):
        lineno = offset + 2
        if not row:
            continue
        if len(row) != 6:
            report.error_list.append((lineno, f"expected 6 fields, got {len(row)}"))
            continue
        raw_name, raw_start, raw_end, region, raw_value, value_type = row
        name = normalize_key(raw_name)
        if not name:
            report.error_list.append((lineno, "empty disease name"))
            continue
        try:
            start = _parse_iso_date(raw_start)
            end = _parse_iso_date(raw_end)
        except ValueError as exc:
            report.error_list.append((lineno, f"bad date: {exc}"))
            continue
        if start > end:
            report.error_list.append((lineno, "period_start after period_end"))
            continue
        try:
            value = float(raw_value)
        except ValueError:
            report.error_list.append((lineno, f"bad value {raw_value!r}"))
            continue
        if not math.isfinite(value):
            report.error_list.append((lineno, "non-finite value"))
            continue
        if value < 0:
            report.error_list.append((lineno, "negative value"))
            continue
        if value_type not in VALUE_TYPES:
            report.error_list.append((lineno, f"unknown value_type {value_type!r}"))
            continue
        records.append(DiseaseRecord(name, start, end, region, value, value_type))
        report.row_count += 1
    return records, report


def serialize_disease_table(records: Iterable[DiseaseRecord]) -> str:
    """Render records back to the canonical CSV (LF line endings)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    out.write(DISEASE_HEADER + "\n")
    for rec in records:
        writer.writerow(
            [
                rec.disease_name,
                rec.period_start.isoformat(),
                rec.period_end.isoformat(),
                rec.region,
                repr(rec.value),
                rec.value_type,
            ]
        )
    return out.getvalue()


def _parse_iso_date(text: str) -> date:
    # fromisoformat accepts more than YYYY-MM-DD on newer interpreters
    if not _ISO_DATE_RE.match(text):
        raise ValueError(f"{text!r} is not YYYY-MM-DD")
    return date.fromisoformat(text)


def _iter_record_blocks(lines: list[str]):
    """Yield (first_lineno, [(lineno, line), ...]) for blank-line-separated blocks."""
    block: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        if line.strip():
            block.append((lineno, line))
        elif block:
            yield block[0][0], block
            block = []
    if block:
        yield block[0][0], block


def _parse_record_file(
    content: str | TextIO,
    known_keys: tuple[str, ...],
    required_keys: tuple[str, ...],
) -> tuple[list[dict[str, str]], list[int], ValidationReport]:
    """Shared `key: value` record parser.

    Returns raw per-record dicts (known keys only), their first line numbers,
    and the report. Records with malformed lines or missing required keys are
    rejected; unknown keys only warn.
    """
    report = ValidationReport()
    parsed: list[dict[str, str]] = []
    first_lines: list[int] = []
    for first_lineno, block in _iter_record_blocks(_as_lines(content)):
        fields: dict[str, str] = {}
        bad = False
        for lineno, line in block:
            key, sep, value = line.partition(":")
            if not sep:
                report.error_list.append((lineno, f"malformed line {line.strip()!r}, expected 'key: value'"))
                bad = True
                continue
            key = key.strip()
            value = value.strip()
            if key not in known_keys:
                report.warning_list.append((lineno, f"unknown key {key!r}"))
                continue
            if key in fields:
                report.warning_list.append((lineno, f"duplicate key {key!r}, keeping last"))
            fields[key] = value
        if bad:
            continue
        missing = [k for k in required_keys if not fields.get(k, "").strip()]
        if missing:
            report.error_list.append((first_lineno, f"missing required key: {missing[0]}"))
            continue
        parsed.append(fields)
        first_lines.append(first_lineno)
        report.row_count += 1
    return parsed, first_lines, report


def _split_list(value: str, normalize: bool) -> tuple[str, ...]:
    items = []
    for part in value.split(","):
        item = normalize_key(part) if normalize else part.strip()
        if item:
            items.append(item)
    return tuple(items)


def parse_symptom_records(content: str | TextIO) -> tuple[list[SymptomProfile], ValidationReport]:
    """Parse blank-line-separated symptom records into profiles."""
    raw, first_lines, report = _parse_record_file(content, SYMPTOM_KEYS, ("code", "name"))
    profiles: list[SymptomProfile] = []
    for fields, first_lineno in zip(raw, first_lines):
        name = normalize_key(fields["name"])
        if not name:
            report.error_list.append((first_lineno, "name empty after normalization"))
            report.row_count -= 1
            continue
        profiles.append(
            SymptomProfile(
                code=fields["code"],
                name=name,
                symptoms=_split_list(fields.get("symptoms", ""), normalize=True),
                description=fields.get("description", ""),
                test_procedure=fields.get("test_procedure", ""),
                medication_desc=fields.get("medication_desc", ""),
                medications=_split_list(fields.get("medications", ""), normalize=False),
                symptom_desc=fields.get("symptom_desc", ""),
            )
        )
    return profiles, report


def parse_demographics_records(
    content: str | TextIO,
) -> tuple[list[DemographicsRecord], ValidationReport]:
    """Parse blank-line-separated demographics records."""
    raw, first_lines, report = _parse_record_file(content, DEMOGRAPHICS_KEYS, ("name",))
    records: list[DemographicsRecord] = []
    for fields, first_lineno in zip(raw, first_lines):
        name = normalize_key(fields["name"])
        if not name:
            report.error_list.append((first_lineno, "name empty after normalization"))
            report.row_count -= 1
            continue
        records.append(
            DemographicsRecord(
                name=name,
                risk_years=fields.get("risk_years", ""),
                less_risk_years=fields.get("less_risk_years", ""),
                high_risk_race_ethnicity=fields.get("high_risk_race_ethnicity", ""),
                high_risk_gender=fields.get("high_risk_gender", ""),
                less_risk_race_ethnicity=fields.get("less_risk_race_ethnicity", ""),
                less_risk_gender=fields.get("less_risk_gender", ""),
            )
        )
    return records, report


def merge_demographics(
    profiles: list[SymptomProfile],
    demo: list[DemographicsRecord],
) -> tuple[list[MergedHealthRecord], list[str]]:
    """Left-join demographics onto profiles by normalized name.

    Every profile appears exactly once; demographics rows that match no
    profile are reported back as warnings.
    """
    by_name: dict[str, DemographicsRecord] = {}
    for rec in demo:
        if rec.name in by_name:
            raise DuplicateKeyError(f"duplicate demographics name {rec.name!r}")
        by_name[rec.name] = rec

    merged = [MergedHealthRecord(p, by_name.get(p.name)) for p in profiles]
    profile_names = {p.name for p in profiles}
    warnings = [
        f"demographics row {name!r} matches no symptom profile"
        for name in by_name
        if name not in profile_names
    ]
    return merged, warnings


def validate_dataset(records: list[DiseaseRecord]) -> ValidationReport:
    """Report-only sanity scan: period overlaps, coverage gaps, mixed units."""
    report = ValidationReport(row_count=len(records))

    by_series: dict[tuple[str, str], list[tuple[DiseaseRecord, int]]] = {}
    for idx, rec in enumerate(records, start=1):
        by_series.setdefault((rec.disease_name, rec.region), []).append((rec, idx))

    for (disease, region), group in sorted(by_series.items()):
        group.sort(key=lambda pair: (pair[0].period_start, pair[0].period_end))
        for (prev, _), (cur, cur_idx) in zip(group, group[1:]):
            if cur.period_start <= prev.period_end:
                report.warning_list.append(
                    (
                        cur_idx,
                        f"{disease} ({region}): period starting {cur.period_start} "
                        f"overlaps period ending {prev.period_end}",
                    )
                )
            elif cur.period_start > prev.period_end + timedelta(days=1):
                gap_start = prev.period_end + timedelta(days=1)
                gap_end = cur.period_start - timedelta(days=1)
                report.warning_list.append(
                    (
                        cur_idx,
                        f"{disease} ({region}): coverage gap from {gap_start} to {gap_end}",
                    )
                )

    first_type: dict[str, tuple[str, int]] = {}
    flagged: set[str] = set()
    for idx, rec in enumerate(records, start=1):
        seen = first_type.setdefault(rec.disease_name, (rec.value_type, idx))
        if rec.value_type != seen[0] and rec.disease_name not in flagged:
            flagged.add(rec.disease_name)
            report.warning_list.append(
                (
                    idx,
                    f"{rec.disease_name}: mixed value_type "
                    f"({seen[0]} first seen, now {rec.value_type})",
                )
            )
    return report
