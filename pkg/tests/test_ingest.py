import datetime as dt
import logging
from pathlib import Path

import numpy as np
import pytest

from raincast.ingest import (
    BadDate,
    CitySeries,
    CsvSchema,
    EmptySelection,
    MalformedLine,
    MissingColumn,
    NonMonotonicYears,
    RowArity,
    UnparseableField,
    build_city_series,
    load_csv_series,
    parse_ghcn_dly,
    parse_index_table,
    serialize_ghcn_dly,
)

FIXTURE = Path(__file__).parent / "data" / "sample.dly"
STATION = "USW00099901"


@pytest.fixture(scope="module")
def records():
    return parse_ghcn_dly(FIXTURE.read_text())


class TestParseGhcn:
    def test_unsupported_elements_skipped(self, records):
        assert all(r.element in ("PRCP", "TMAX", "TMIN") for r in records)
        assert len(records) == 7

    def test_value_and_flag_semantics(self, records):
        jan_prcp = next(r for r in records if r.element == "PRCP" and r.month == 1
                        and r.station_id == STATION)
        assert jan_prcp.day_values[0] == 132
        assert jan_prcp.effective_value(0) == 132
        assert jan_prcp.day_values[1] is None  # -9999 sentinel
        # raw value survives, quality flag masks interpretation
        assert jan_prcp.day_values[2] == 55
        assert jan_prcp.flags[2] == " G "
        assert jan_prcp.effective_value(2) is None
        # nonblank measurement/source flags with blank quality flag are kept
        assert jan_prcp.flags[4] == "T S"
        assert jan_prcp.effective_value(4) == 77

    def test_exactly_31_slots(self, records):
        assert all(len(r.day_values) == 31 and len(r.flags) == 31 for r in records)

    def test_round_trip_identity(self, records):
        assert parse_ghcn_dly(serialize_ghcn_dly(records)) == records

    def test_malformed_line(self):
        with pytest.raises(MalformedLine):
            parse_ghcn_dly("USW0009990", )

    def test_unparseable_field(self):
        text = FIXTURE.read_text()
        line = text.splitlines()[0]
        corrupted = line[:21] + "abcde" + line[26:]
        with pytest.raises(UnparseableField) as exc:
            parse_ghcn_dly(corrupted)
        assert exc.value.col == 22

    def test_bytes_input(self):
        assert parse_ghcn_dly(FIXTURE.read_bytes()) == parse_ghcn_dly(FIXTURE.read_text())

    def test_zero_padded_value_field(self):
        # " 0132" style fields parse to the same integer as "  132"
        line = f"{'USW00012345':<11}202101PRCP" + " 0132   " + "-9999   " * 30
        assert len(line) == 269
        rec = parse_ghcn_dly(line)[0]
        assert rec.day_values[0] == 132
        assert rec.effective_value(0) == 132


class TestBuildCitySeries:
    def test_units_and_alignment(self, records):
        series = build_city_series(
            records, "Testville", STATION, dt.date(2021, 1, 1), dt.date(2021, 2, 28)
        )
        assert len(series) == 59
        assert series.prcp[0] == 132 / 10  # tenths of mm -> mm
        assert np.isnan(series.prcp[1])
        assert np.isnan(series.prcp[2])  # quality-flagged
        assert series.tmax[0] == 15.0

    def test_contradiction_masks_both(self, records, caplog):
        with caplog.at_level(logging.WARNING):
            series = build_city_series(
                records, "Testville", STATION, dt.date(2021, 1, 1), dt.date(2021, 1, 31)
            )
        assert np.isnan(series.tmin[6]) and np.isnan(series.tmax[6])
        assert any("tmin" in r.message for r in caplog.records)

    def test_day_beyond_month_length_ignored(self, records):
        series = build_city_series(
            records, "Testville", STATION, dt.date(2021, 2, 1), dt.date(2021, 3, 5)
        )
        # the bogus Feb-31 TMAX slot never lands on a calendar day
        assert np.isnan(series.tmax[28:]).all()

    def test_days_without_records_missing(self, records):
        series = build_city_series(
            records, "Testville", STATION, dt.date(2020, 12, 25), dt.date(2021, 1, 5)
        )
        before = slice(0, 7)  # Dec 25-31 has no records at all
        assert np.isnan(series.tmin[before]).all()
        assert np.isnan(series.tmax[before]).all()
        assert np.isnan(series.prcp[before]).all()

    def test_empty_selection(self, records):
        with pytest.raises(EmptySelection):
            build_city_series(records, "Nowhere", "USW00000000",
                              dt.date(2021, 1, 1), dt.date(2021, 1, 31))


class TestIndexTable:
    def test_layout(self):
        text = "2023 " + " ".join(str(i / 10) for i in range(1, 13)) + "\n"
        ts = parse_index_table(text, "Nino3.4")
        assert len(ts.months) == 12
        assert ts.months[0] == dt.date(2023, 1, 1)
        assert ts.months[-1] == dt.date(2023, 12, 1)
        assert ts.values[0] == 0.1

    def test_sentinel_missing(self):
        text = "2023 -99.99 " + " ".join("1.0" for _ in range(11))
        ts = parse_index_table(text, "PDO")
        assert np.isnan(ts.values[0])
        assert ts.values[1] == 1.0

    def test_row_arity(self):
        with pytest.raises(RowArity):
            parse_index_table("2023 1 2 3\n", "NAO")

    def test_non_monotonic_years(self):
        row = " ".join("1.0" for _ in range(12))
        with pytest.raises(NonMonotonicYears):
            parse_index_table(f"2023 {row}\n2022 {row}\n", "NAO")

    def test_header_lines_skipped_and_gap_filled(self):
        row = " ".join("1.0" for _ in range(12))
        text = f"YEAR JAN ... DEC\n2020 {row}\n2022 {row}\n"
        ts = parse_index_table(text, "PDO")
        assert len(ts.months) == 36
        assert np.isnan(ts.values[12:24]).all()
        assert ts.value_for(dt.date(2022, 5, 1)) == 1.0

    def test_length_multiple_of_rows(self):
        row = " ".join(str(i) for i in range(12))
        ts = parse_index_table(f"2001 {row}\n2002 {row}\n2003 {row}\n", "NAO")
        assert len(ts.months) == 36


class TestCsvSeries:
    SCHEMA = CsvSchema(date="d", tmin="lo", tmax="hi", prcp="rain")

    def test_basic(self):
        text = "d,lo,hi,rain\n2021-01-01,1.0,5.0,2.5\n2021-01-03,2.0,6.0,0.0\n"
        series = load_csv_series(text, "CsvTown", self.SCHEMA)
        assert len(series) == 3  # span covered, gap masked
        assert series.prcp[0] == 2.5
        assert np.isnan(series.prcp[1])
        assert series.tmax[2] == 6.0

    def test_empty_cell_missing(self):
        text = "d,lo,hi,rain\n2021-01-01,1.0,,2.5\n2021-01-02,1.0,4.0,1.0\n"
        series = load_csv_series(text, "CsvTown", self.SCHEMA)
        assert np.isnan(series.tmax[0])

    def test_inches_converted(self):
        schema = CsvSchema(date="d", tmin="lo", tmax="hi", prcp="rain", prcp_unit="inches")
        text = "d,lo,hi,rain\n2021-01-01,1.0,5.0,1.0\n2021-01-02,1.0,5.0,0.5\n"
        series = load_csv_series(text, "CsvTown", schema)
        assert series.prcp[0] == pytest.approx(25.4)
        assert series.prcp[1] == pytest.approx(12.7)

    def test_missing_column(self):
        with pytest.raises(MissingColumn):
            load_csv_series("d,lo,hi\n2021-01-01,1,2\n", "CsvTown", self.SCHEMA)

    def test_bad_date(self):
        with pytest.raises(BadDate) as exc:
            load_csv_series("d,lo,hi,rain\nnot-a-date,1,2,0\n", "CsvTown", self.SCHEMA)
        assert exc.value.row_no == 2

    def test_negative_precipitation_masked(self, caplog):
        text = "d,lo,hi,rain\n2021-01-01,1.0,5.0,-2.5\n2021-01-02,1.0,5.0,1.0\n"
        with caplog.at_level(logging.WARNING):
            series = load_csv_series(text, "CsvTown", self.SCHEMA)
        assert np.isnan(series.prcp[0])
        assert series.prcp[1] == 1.0
        assert any("negative prcp" in r.message for r in caplog.records)


class TestCitySeries:
    def test_contiguity_enforced(self):
        with pytest.raises(ValueError):
            CitySeries(
                "X",
                [dt.date(2021, 1, 1), dt.date(2021, 1, 3)],
                np.zeros(2), np.ones(2), np.zeros(2),
            )

    def test_json_round_trip(self, records):
        series = build_city_series(
            records, "Testville", STATION, dt.date(2021, 1, 1), dt.date(2021, 2, 28)
        )
        back = CitySeries.from_json(series.to_json())
        assert back.city == series.city
        assert back.dates == series.dates
        np.testing.assert_array_equal(back.prcp, series.prcp)
        np.testing.assert_array_equal(back.tmin, series.tmin)

    def test_unit_conversion_exact_for_integers(self, records):
        # converted value is exactly source/10, no further rounding
        series = build_city_series(
            records, "Testville", STATION, dt.date(2021, 1, 1), dt.date(2021, 1, 31)
        )
        jan_prcp = next(r for r in records if r.element == "PRCP" and r.month == 1
                        and r.station_id == STATION)
        for day_index in range(31):
            raw = jan_prcp.effective_value(day_index)
            if raw is not None:
                assert series.prcp[day_index] == raw / 10
