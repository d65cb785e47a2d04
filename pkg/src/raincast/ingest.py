"""Raw climate data ingestion.

Parses three local file formats into calendar-aligned typed series:

* GHCN-daily ``.dly`` fixed-width station files. Layout per line:
  station id cols 1-11, year 12-15, month 16-17, element 18-21, then
  31 repetitions of [5-char integer value, MFLAG, QFLAG, SFLAG], so a
  full line is 269 characters. Values are integers in source units
  (tenths of mm for PRCP, tenths of degC for TMAX/TMIN); -9999 marks a
  missing day.
* Whitespace-delimited monthly teleconnection index tables, one row per
  year: ``year v1 ... v12``.
* CSV daily series with a caller-declared column schema.

All rainfall is converted to mm and all temperatures to degC. Missing
data is masked with NaN, never dropped: every CitySeries covers a
contiguous daily range.
"""

from __future__ import annotations

import calendar
import datetime as dt
import io
import json
import logging
from csv import DictReader
from dataclasses import dataclass, field

import numpy as np

from .errors import RaincastError

log = logging.getLogger(__name__)

SUPPORTED_ELEMENTS = ("PRCP", "TMAX", "TMIN")
_MISSING_VALUE = -9999
_LINE_LEN = 21 + 31 * 8  # 269
_MM_PER_INCH = 25.4

SERIES_CACHE_VERSION = 1


class IngestError(RaincastError):
    """Base class for ingestion failures."""


class MalformedLine(IngestError):
    def __init__(self, line_no: int, detail: str = "line shorter than fixed layout"):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


class UnparseableField(IngestError):
    def __init__(self, line_no: int, col: int, text: str):
        super().__init__(f"line {line_no}, col {col}: unparseable value field {text!r}")
        self.line_no = line_no
        self.col = col


class EmptySelection(IngestError):
    def __init__(self, station_id: str):
        super().__init__(f"no records for station {station_id!r}")
        self.station_id = station_id


class RowArity(IngestError):
    def __init__(self, year: int, n_tokens: int):
        super().__init__(f"index row for {year} has {n_tokens} tokens, expected 13")
        self.year = year


class NonMonotonicYears(IngestError):
    def __init__(self, prev_year: int, year: int):
        super().__init__(f"index years not increasing: {prev_year} then {year}")


class MissingColumn(IngestError):
    def __init__(self, name: str):
        super().__init__(f"CSV is missing required column {name!r}")
        self.name = name


class BadDate(IngestError):
    def __init__(self, row_no: int, text: str):
        super().__init__(f"CSV row {row_no}: unparseable date {text!r}")
        self.row_no = row_no


@dataclass(frozen=True)
class GhcnRecord:
    """One (station, year, month, element) line of a .dly file.

    ``day_values`` holds the raw source-unit integers (None where the file
    said -9999) and ``flags`` the verbatim MFLAG/QFLAG/SFLAG triplets, so a
    parsed record can be serialized back without loss. Only the quality
    flag affects interpretation: a nonblank QFLAG masks the day's value.
    """

    station_id: str
    year: int
    month: int
    element: str
    day_values: tuple[int | None, ...]  # 31 slots, raw source units
    flags: tuple[str, ...]  # 31 three-char MQS strings

    def quality_flag(self, day_index: int) -> str:
        return self.flags[day_index][1]

    def effective_value(self, day_index: int) -> int | None:
        """Raw value for day_index (0-based), or None if missing or QC-flagged."""
        value = self.day_values[day_index]
        if value is None or self.quality_flag(day_index) != " ":
            return None
        return value


@dataclass
class CitySeries:
    """Contiguous daily tmin/tmax (degC) and prcp (mm) for one city.

    Missing values are NaN; the date axis has no gaps.
    """

    city: str
    dates: list[dt.date]
    tmin: np.ndarray
    tmax: np.ndarray
    prcp: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.dates)
        for name in ("tmin", "tmax", "prcp"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if arr.shape != (n,):
                raise ValueError(f"{name} length {arr.shape} != {n} dates")
        if n and (self.dates[-1] - self.dates[0]).days != n - 1:
            raise ValueError("dates are not a contiguous daily range")
        both = ~np.isnan(self.tmin) & ~np.isnan(self.tmax)
        if np.any(self.tmin[both] > self.tmax[both]):
            raise ValueError("tmin > tmax for a present pair")
        present_prcp = self.prcp[~np.isnan(self.prcp)]
        if np.any(present_prcp < 0):
            raise ValueError("negative precipitation present")

    def __len__(self) -> int:
        return len(self.dates)

    def to_timeseries(self):
        from .series import TimeSeries

        values = np.column_stack([self.tmin, self.tmax, self.prcp])
        return TimeSeries(
            frequency="daily",
            stamps=list(self.dates),
            feature_names=("tmin", "tmax", "prcp"),
            values=values,
        )

    def to_json(self) -> str:
        def col(arr: np.ndarray) -> list:
            return [None if np.isnan(v) else float(v) for v in arr]

        payload = {
            "format_version": SERIES_CACHE_VERSION,
            "city": self.city,
            "start": self.dates[0].isoformat() if self.dates else None,
            "n_days": len(self.dates),
            "units": {"tmin": "degC", "tmax": "degC", "prcp": "mm"},
            "tmin": col(self.tmin),
            "tmax": col(self.tmax),
            "prcp": col(self.prcp),
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CitySeries":
        payload = json.loads(text)
        if payload.get("format_version") != SERIES_CACHE_VERSION:
            raise IngestError(
                f"unsupported series cache version {payload.get('format_version')!r}"
            )
        start = dt.date.fromisoformat(payload["start"])
        dates = [start + dt.timedelta(days=i) for i in range(payload["n_days"])]

        def arr(key: str) -> np.ndarray:
            return np.array(
                [np.nan if v is None else v for v in payload[key]], dtype=np.float64
            )

        return cls(payload["city"], dates, arr("tmin"), arr("tmax"), arr("prcp"))


@dataclass
class TeleconnectionSeries:
    """Monthly values of one large-scale climate index (Nino3.4, PDO, NAO)."""

    index_name: str
    months: list[dt.date]  # first-of-month stamps, contiguous
    values: np.ndarray  # NaN where missing

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        for prev, cur in zip(self.months, self.months[1:]):
            if _next_month(prev) != cur:
                raise ValueError("months are not contiguous")

    def value_for(self, month: dt.date) -> float:
        stamp = month.replace(day=1)
        if not self.months or stamp < self.months[0] or stamp > self.months[-1]:
            raise IngestError(f"{self.index_name}: no value for {stamp.isoformat()}")
        idx = (stamp.year - self.months[0].year) * 12 + stamp.month - self.months[0].month
        return float(self.values[idx])


def _next_month(d: dt.date) -> dt.date:
    return dt.date(d.year + (d.month == 12), d.month % 12 + 1, 1)


def _as_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("ascii")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("ascii") if isinstance(data, bytes) else data


def parse_ghcn_dly(source) -> list[GhcnRecord]:
    """Parse .dly fixed-width content into records.

    ``source`` may be str, bytes, or a file-like object. Elements other
    than PRCP/TMAX/TMIN are skipped. Raises MalformedLine for nonempty
    short lines and UnparseableField for non-numeric value fields.
    """
    records = []
    for line_no, line in enumerate(io.StringIO(_as_text(source)), start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        if len(line) < _LINE_LEN:
            raise MalformedLine(line_no)
        element = line[17:21].strip()
        if element not in SUPPORTED_ELEMENTS:
            continue
        station_id = line[0:11]
        year = int(line[11:15])
        month = int(line[15:17])
        day_values: list[int | None] = []
        flags: list[str] = []
        for day in range(31):
            col = 21 + day * 8
            text = line[col : col + 5]
            try:
                value = int(text)
            except ValueError:
                raise UnparseableField(line_no, col + 1, text) from None
            day_values.append(None if value == _MISSING_VALUE else value)
            flags.append(line[col + 5 : col + 8])
        records.append(
            GhcnRecord(station_id, year, month, element, tuple(day_values), tuple(flags))
        )
    return records


def serialize_ghcn_dly(records: list[GhcnRecord]) -> str:
    """Render records back to the fixed-width layout (round-trips with parse)."""
    lines = []
    for rec in records:
        parts = [f"{rec.station_id:<11.11}{rec.year:04d}{rec.month:02d}{rec.element:<4.4}"]
        for value, flag in zip(rec.day_values, rec.flags):
            raw = _MISSING_VALUE if value is None else value
            parts.append(f"{raw:5d}{flag:<3.3}")
        lines.append("".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def build_city_series(
    records: list[GhcnRecord],
    city: str,
    station_id: str,
    start: dt.date,
    end: dt.date,
) -> CitySeries:
    """Assemble a calendar-aligned CitySeries from one station's records.

    Source units are converted (tenths -> whole: /10). Days in range with
    no record stay NaN. A surviving tmin > tmax pair is a data
    contradiction: both values are masked and the violation logged.
    """
    if end < start:
        raise ValueError("empty date range")
    n = (end - start).days + 1
    columns = {el: np.full(n, np.nan) for el in SUPPORTED_ELEMENTS}

    matched = False
    for rec in records:
        if rec.station_id != station_id:
            continue
        matched = True
        days_in_month = calendar.monthrange(rec.year, rec.month)[1]
        for day_index in range(days_in_month):
            value = rec.effective_value(day_index)
            if value is None:
                continue
            day = dt.date(rec.year, rec.month, day_index + 1)
            if day < start or day > end:
                continue
            columns[rec.element][(day - start).days] = value / 10.0
    if not matched:
        raise EmptySelection(station_id)

    dates = [start + dt.timedelta(days=i) for i in range(n)]
    tmin, tmax, prcp = columns["TMIN"], columns["TMAX"], columns["PRCP"]
    _mask_contradictions(city, dates, tmin, tmax, prcp)
    return CitySeries(city, dates, tmin, tmax, prcp)


def _mask_contradictions(
    city: str,
    dates: list[dt.date],
    tmin: np.ndarray,
    tmax: np.ndarray,
    prcp: np.ndarray,
) -> None:
    """Mask physically impossible values in place, logging each one."""
    bad = ~np.isnan(tmin) & ~np.isnan(tmax) & (tmin > tmax)
    for i in np.flatnonzero(bad):
        log.warning(
            "%s %s: tmin %.1f > tmax %.1f, masking both",
            city,
            dates[i].isoformat(),
            tmin[i],
            tmax[i],
        )
    tmin[bad] = np.nan
    tmax[bad] = np.nan
    neg = ~np.isnan(prcp) & (prcp < 0)
    for i in np.flatnonzero(neg):
        log.warning(
            "%s %s: negative prcp %.1f mm, masking", city, dates[i].isoformat(), prcp[i]
        )
    prcp[neg] = np.nan


def parse_index_table(
    source,
    index_name: str,
    missing_sentinels: tuple[float, ...] = (-99.99, -9.90),
) -> TeleconnectionSeries:
    """Parse a ``year v1 ... v12`` monthly index table.

    Sentinel values map to missing. Header or comment lines (first token
    not a 4-digit year) are skipped. Skipped years inside the covered
    span are filled with missing months to keep the axis contiguous.
    """
    rows: list[tuple[int, list[float]]] = []
    for line in _as_text(source).splitlines():
        tokens = line.split()
        if not tokens:
            continue
        if not (len(tokens[0]) == 4 and tokens[0].isdigit()):
            continue
        year = int(tokens[0])
        if len(tokens) != 13:
            raise RowArity(year, len(tokens))
        if rows and year <= rows[-1][0]:
            raise NonMonotonicYears(rows[-1][0], year)
        values = []
        for token in tokens[1:]:
            v = float(token)
            if any(abs(v - s) < 1e-9 for s in missing_sentinels):
                v = np.nan
            values.append(v)
        rows.append((year, values))
    if not rows:
        raise IngestError("index table has no data rows")

    first_year, last_year = rows[0][0], rows[-1][0]
    by_year = dict(rows)
    months: list[dt.date] = []
    values: list[float] = []
    for year in range(first_year, last_year + 1):
        row = by_year.get(year, [np.nan] * 12)
        for month, v in enumerate(row, start=1):
            months.append(dt.date(year, month, 1))
            values.append(v)
    return TeleconnectionSeries(index_name, months, np.array(values))


@dataclass
class CsvSchema:
    """Column mapping and units for a daily CSV source."""

    date: str
    tmin: str
    tmax: str
    prcp: str
    prcp_unit: str = "mm"  # mm | inches | tenths_mm
    temp_unit: str = "degC"  # degC | tenths_degC | degF
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        known = {"date", "tmin", "tmax", "prcp", "prcp_unit", "temp_unit"}
        kwargs = {k: v for k, v in d.items() if k in known}
        extra = {k: v for k, v in d.items() if k not in known}
        return cls(**kwargs, extra=extra)


_PRCP_FACTORS = {"mm": 1.0, "inches": _MM_PER_INCH, "tenths_mm": 0.1}


def _convert_temp(value: float, unit: str) -> float:
    if unit == "degC":
        return value
    if unit == "tenths_degC":
        return value / 10.0
    if unit == "degF":
        return (value - 32.0) * 5.0 / 9.0
    raise IngestError(f"unsupported temperature unit {unit!r}")


def load_csv_series(source, city: str, schema: CsvSchema) -> CitySeries:
    """Load a daily CSV into a CitySeries under the declared schema.

    Rows may arrive unordered; the output spans min..max date with gaps
    masked. Empty cells are missing.
    """
    if schema.prcp_unit not in _PRCP_FACTORS:
        raise IngestError(f"unsupported precipitation unit {schema.prcp_unit!r}")
    reader = DictReader(io.StringIO(_as_text(source)))
    header = reader.fieldnames or []
    for col in (schema.date, schema.tmin, schema.tmax, schema.prcp):
        if col not in header:
            raise MissingColumn(col)

    parsed: list[tuple[dt.date, float, float, float]] = []
    for row_no, row in enumerate(reader, start=2):  # row 1 is the header
        try:
            day = dt.date.fromisoformat(row[schema.date].strip())
        except (ValueError, AttributeError):
            raise BadDate(row_no, row.get(schema.date, "")) from None

        def cell(col: str) -> float:
            text = (row[col] or "").strip()
            return float(text) if text else np.nan

        tmin = _convert_temp(cell(schema.tmin), schema.temp_unit)
        tmax = _convert_temp(cell(schema.tmax), schema.temp_unit)
        prcp = cell(schema.prcp) * _PRCP_FACTORS[schema.prcp_unit]
        parsed.append((day, tmin, tmax, prcp))
    if not parsed:
        raise IngestError("CSV has no data rows")

    start = min(p[0] for p in parsed)
    end = max(p[0] for p in parsed)
    n = (end - start).days + 1
    tmin = np.full(n, np.nan)
    tmax = np.full(n, np.nan)
    prcp = np.full(n, np.nan)
    for day, lo, hi, rain in parsed:
        i = (day - start).days
        tmin[i], tmax[i], prcp[i] = lo, hi, rain
    dates = [start + dt.timedelta(days=i) for i in range(n)]
    _mask_contradictions(city, dates, tmin, tmax, prcp)
    return CitySeries(city, dates, tmin, tmax, prcp)
