from datetime import date, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from outbreaknet.ingest import (
    DemographicsRecord,
    DiseaseRecord,
    DuplicateKeyError,
    MissingHeaderError,
    SymptomProfile,
    merge_demographics,
    parse_demographics_records,
    parse_disease_table,
    parse_symptom_records,
    serialize_disease_table,
    validate_dataset,
)

HEADER = "disease,period_start,period_end,region,value,value_type"


class TestParseDiseaseTable:
    def test_single_row(self):
        records, report = parse_disease_table(
            HEADER + "\ninfluenza,2019-01-01,2019-01-31,IN,1200,cases\n"
        )
        assert report.row_count == 1 and not report.error_list
        rec = records[0]
        assert rec == DiseaseRecord(
            "influenza", date(2019, 1, 1), date(2019, 1, 31), "IN", 1200.0, "cases"
        )

    def test_header_only(self):
        records, report = parse_disease_table(HEADER + "\n")
        assert records == [] and report.row_count == 0

    def test_negative_value_collected_not_fatal(self):
        records, report = parse_disease_table(
            HEADER
            + "\ninfluenza,2019-01-01,2019-01-31,IN,-5,cases\n"
            + "cholera,2019-01-01,2019-01-31,IN,3,cases\n"
        )
        assert report.row_count == 1
        assert len(records) == 1 and records[0].disease_name == "cholera"
        assert report.error_list == [(2, "negative value")]

    def test_missing_header_raises(self):
        with pytest.raises(MissingHeaderError):
            parse_disease_table("name,start\nx,y\n")

    def test_empty_input_raises_missing_header(self):
        with pytest.raises(MissingHeaderError):
            parse_disease_table("")

    @pytest.mark.parametrize(
        "row,fragment",
        [
            ("influenza,2019-13-01,2019-01-31,IN,1,cases", "bad date"),
            ("influenza,20190101,2019-01-31,IN,1,cases", "bad date"),
            ("influenza,2019-02-01,2019-01-31,IN,1,cases", "period_start after"),
            ("influenza,2019-01-01,2019-01-31,IN,abc,cases", "bad value"),
            ("influenza,2019-01-01,2019-01-31,IN,inf,cases", "non-finite"),
            ("influenza,2019-01-01,2019-01-31,IN,1,frequencies", "unknown value_type"),
            ("influenza,2019-01-01,2019-01-31,IN,1", "expected 6 fields"),
            (" ,2019-01-01,2019-01-31,IN,1,cases", "empty disease name"),
        ],
    )
    def test_bad_rows_become_errors(self, row, fragment):
        records, report = parse_disease_table(HEADER + "\n" + row + "\n")
        assert records == []
        assert len(report.error_list) == 1
        lineno, message = report.error_list[0]
        assert lineno == 2
        assert fragment in message

    def test_crlf_accepted(self):
        records, report = parse_disease_table(
            HEADER + "\r\ninfluenza,2019-01-01,2019-01-31,IN,12,deaths\r\n"
        )
        assert report.row_count == 1
        assert records[0].value_type == "deaths"

    def test_name_normalized(self):
        records, _ = parse_disease_table(
            HEADER + "\n  COVID-19 ,2020-01-01,2020-01-31,IN,5,cases\n"
        )
        assert records[0].disease_name == "covid-19"

    def test_line_numbers_point_into_original_input(self):
        content = HEADER + "\na,2019-01-01,2019-01-31,IN,1,cases\nbad line\n"
        _, report = parse_disease_table(content)
        assert report.error_list[0][0] == 3


_names = st.sampled_from(["influenza", "cholera", "dengue fever", "covid-19"])
_dates = st.dates(min_value=date(1950, 1, 1), max_value=date(2024, 12, 31))
_values = st.floats(min_value=0, max_value=1e12, allow_nan=False, allow_infinity=False)


@st.composite
def disease_records(draw):
    start = draw(_dates)
    return DiseaseRecord(
        disease_name=draw(_names),
        period_start=start,
        period_end=start + timedelta(days=draw(st.integers(0, 400))),
        region=draw(st.sampled_from(["IN", "IN-DL", "IN-MH"])),
        value=draw(_values),
        value_type=draw(st.sampled_from(["cases", "deaths", "rate_per_100k"])),
    )


class TestRoundTrip:
    @given(st.lists(disease_records(), max_size=20))
    @settings(max_examples=50)
    def test_serialize_parse_identity(self, records):
        text = serialize_disease_table(records)
        parsed, report = parse_disease_table(text)
        assert not report.error_list
        assert parsed == records

    @given(st.lists(disease_records(), max_size=10))
    @settings(max_examples=25)
    def test_write_read_write_byte_identical(self, records):
        first = serialize_disease_table(records)
        parsed, _ = parse_disease_table(first)
        assert serialize_disease_table(parsed) == first


SYMPTOM_RECORD = """code: D001
name: Influenza
symptoms: fever, cough
description: an acute respiratory infection
test_procedure: swab
medication_desc: rest and fluids
medications: oseltamivir
symptom_desc: fever then cough
"""


class TestParseSymptomRecords:
    def test_basic_record(self):
        profiles, report = parse_symptom_records(SYMPTOM_RECORD)
        assert report.row_count == 1 and not report.error_list
        p = profiles[0]
        assert p.code == "D001"
        assert p.name == "influenza"
        assert p.symptoms == ("fever", "cough")

    def test_empty_input(self):
        profiles, report = parse_symptom_records("")
        assert profiles == [] and report.row_count == 0

    def test_missing_name_errors_at_first_line(self):
        content = "\n\ncode: D002\nsymptoms: rash\n"
        profiles, report = parse_symptom_records(content)
        assert profiles == []
        assert report.error_list == [(3, "missing required key: name")]

    def test_line_without_colon_rejects_record(self):
        content = "code: D001\nname: x\njust some words\n"
        profiles, report = parse_symptom_records(content)
        assert profiles == []
        assert report.error_list[0][0] == 3

    def test_unknown_key_is_warning_only(self):
        content = "code: D001\nname: x\ncolour: blue\n"
        profiles, report = parse_symptom_records(content)
        assert len(profiles) == 1
        assert any("unknown key" in msg for _, msg in report.warning_list)

    def test_multiple_records_blank_line_separated(self):
        content = "code: A\nname: a\n\n\ncode: B\nname: b\n"
        profiles, report = parse_symptom_records(content)
        assert [p.name for p in profiles] == ["a", "b"]
        assert report.row_count == 2

    def test_symptoms_normalized_and_no_empties(self):
        content = "code: A\nname: a\nsymptoms:  High  Fever ,, cough ,\n"
        profiles, _ = parse_symptom_records(content)
        assert profiles[0].symptoms == ("high fever", "cough")


class TestParseDemographics:
    def test_basic(self):
        content = "name: Influenza\nrisk_years: 0-5\nhigh_risk_gender: all\n"
        records, report = parse_demographics_records(content)
        assert report.row_count == 1
        rec = records[0]
        assert rec.name == "influenza"
        assert rec.risk_years == "0-5"
        assert rec.less_risk_years == ""  # unknown fields stored as empty text

    def test_missing_name(self):
        records, report = parse_demographics_records("risk_years: 0-5\n")
        assert records == []
        assert "missing required key" in report.error_list[0][1]


class TestMergeDemographics:
    def test_matching_join(self):
        profiles = [SymptomProfile(code="A", name="influenza")]
        demo = [DemographicsRecord(name="influenza", risk_years="0-5")]
        merged, warnings = merge_demographics(profiles, demo)
        assert len(merged) == 1
        assert merged[0].demographics is demo[0]
        assert warnings == []

    def test_left_join_keeps_unmatched_profile(self):
        profiles = [SymptomProfile(code="A", name="cholera")]
        demo = [DemographicsRecord(name="typhoid")]
        merged, warnings = merge_demographics(profiles, demo)
        assert len(merged) == 1
        assert merged[0].demographics is None
        assert len(warnings) == 1 and "typhoid" in warnings[0]

    def test_duplicate_demographics_name(self):
        with pytest.raises(DuplicateKeyError):
            merge_demographics([], [DemographicsRecord(name="typhoid")] * 2)

    @given(st.lists(_names, max_size=8), st.lists(_names, unique=True, max_size=4))
    def test_output_length_equals_profile_count(self, profile_names, demo_names):
        profiles = [SymptomProfile(code="X", name=n) for n in profile_names]
        demo = [DemographicsRecord(name=n) for n in demo_names]
        merged, _ = merge_demographics(profiles, demo)
        assert len(merged) == len(profiles)


def _yearly(name, year, value=10.0):
    return DiseaseRecord(name, date(year, 1, 1), date(year, 12, 31), "IN", value, "cases")


class TestValidateDataset:
    def test_identical_periods_flag_one_overlap(self):
        records = [_yearly("influenza", 2019), _yearly("influenza", 2019)]
        report = validate_dataset(records)
        overlaps = [m for _, m in report.warning_list if "overlaps" in m]
        assert len(overlaps) == 1

    def test_empty_list(self):
        report = validate_dataset([])
        assert report.row_count == 0 and report.warning_list == []

    def test_gap_scan_matches_oracle(self):
        # cholera yearly 1950-2020 with 1960 missing
        years = [y for y in range(1950, 2021) if y != 1960]
        records = [_yearly("cholera", y) for y in years]
        report = validate_dataset(records)
        gaps = [m for _, m in report.warning_list if "gap" in m]

        # independent oracle: scan sorted year pairs for non-adjacent successors
        expected_gaps = [
            (a, b) for a, b in zip(years, years[1:]) if b - a > 1
        ]
        assert len(gaps) == len(expected_gaps) == 1
        assert "1960-01-01" in gaps[0] and "1960-12-31" in gaps[0]

    def test_mixed_value_type_flagged_once(self):
        records = [
            _yearly("typhoid", 2001),
            DiseaseRecord("typhoid", date(2002, 1, 1), date(2002, 12, 31), "IN", 1.0, "rate_per_100k"),
            DiseaseRecord("typhoid", date(2003, 1, 1), date(2003, 12, 31), "IN", 1.0, "rate_per_100k"),
        ]
        report = validate_dataset(records)
        mixed = [m for _, m in report.warning_list if "mixed value_type" in m]
        assert len(mixed) == 1

    def test_contiguous_series_is_clean(self):
        records = [_yearly("cholera", y) for y in range(1950, 2021)]
        assert validate_dataset(records).warning_list == []

    def test_different_regions_do_not_overlap(self):
        a = DiseaseRecord("flu", date(2019, 1, 1), date(2019, 12, 31), "IN-DL", 1.0, "cases")
        b = DiseaseRecord("flu", date(2019, 1, 1), date(2019, 12, 31), "IN-MH", 1.0, "cases")
        report = validate_dataset([a, b])
        assert not [m for _, m in report.warning_list if "overlaps" in m]
