"""Model-ready dataset construction.

Turns a CitySeries into supervised (window, horizon) pairs:
daily -> monthly aggregation, per-feature min-max scaling fitted on the
training span only, stride-1 sliding windows that never cross a masked
value, and a chronological 80/20 split.
"""

from __future__ import annotations

import calendar
import datetime as dt
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import RaincastError
from .ingest import CitySeries

log = logging.getLogger(__name__)


class SeriesError(RaincastError):
    pass


class ArityMismatch(SeriesError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected {expected} features, got {got}")


class TooShort(SeriesError):
    def __init__(self, length: int, needed: int):
        super().__init__(f"series length {length} < window + horizon = {needed}")


@dataclass
class TimeSeries:
    """Rectangular multi-feature series at daily or monthly frequency.

    Monthly stamps are first-of-month dates. NaN marks a missing value;
    the mask is derived, never stored separately.
    """

    frequency: str  # "daily" | "monthly"
    stamps: list[dt.date]
    feature_names: tuple[str, ...]
    values: np.ndarray  # (n, F)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.feature_names = tuple(self.feature_names)
        if self.frequency not in ("daily", "monthly"):
            raise ValueError(f"bad frequency {self.frequency!r}")
        n, f = len(self.stamps), len(self.feature_names)
        if self.values.shape != (n, f):
            raise ValueError(f"values shape {self.values.shape} != ({n}, {f})")
        step = (
            (lambda a, b: (b - a).days == 1)
            if self.frequency == "daily"
            else (lambda a, b: (b.year - a.year) * 12 + b.month - a.month == 1)
        )
        for a, b in zip(self.stamps, self.stamps[1:]):
            if not step(a, b):
                raise ValueError(f"stamps not contiguous at {a} -> {b}")

    def __len__(self) -> int:
        return len(self.stamps)

    @property
    def mask(self) -> np.ndarray:
        """True where a value is present."""
        return ~np.isnan(self.values)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise SeriesError(f"unknown feature {name!r}") from None

    def feature(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_index(name)]

    def index_of(self, stamp: dt.date) -> int:
        if self.frequency == "daily":
            i = (stamp - self.stamps[0]).days
        else:
            first = self.stamps[0]
            i = (stamp.year - first.year) * 12 + stamp.month - first.month
        if i < 0 or i >= len(self.stamps):
            raise SeriesError(f"stamp {stamp} outside series range")
        return i

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(
            self.frequency, self.stamps[start:stop], self.feature_names,
            self.values[start:stop],
        )


def aggregate_monthly(series: CitySeries, min_valid_fraction: float = 0.8) -> TimeSeries:
    """Aggregate a daily CitySeries to calendar months.

    Precipitation is the sum of present daily mm rescaled by
    days_in_month / present_days (an unbiased month total under
    missingness); temperatures are means of present dailies. A month is
    masked per feature when its present fraction falls below
    ``min_valid_fraction``.
    """
    if not 0 < min_valid_fraction <= 1:
        raise ValueError("min_valid_fraction must be in (0, 1]")
    if not len(series):
        raise SeriesError("empty series")

    daily = series.to_timeseries()
    first, last = series.dates[0], series.dates[-1]
    stamps: list[dt.date] = []
    rows: list[list[float]] = []
    month = dt.date(first.year, first.month, 1)
    while month <= last:
        days_in_month = calendar.monthrange(month.year, month.month)[1]
        lo = max(0, (month - first).days)
        hi = min(len(series), (dt.date(month.year, month.month, days_in_month) - first).days + 1)
        block = daily.values[lo:hi]
        row = []
        for j, name in enumerate(daily.feature_names):
            col = block[:, j]
            present = col[~np.isnan(col)]
            if len(present) == 0 or len(present) / days_in_month < min_valid_fraction:
                row.append(np.nan)
            elif name == "prcp":
                row.append(present.sum() * days_in_month / len(present))
            else:
                row.append(present.mean())
        stamps.append(month)
        rows.append(row)
        month = dt.date(month.year + (month.month == 12), month.month % 12 + 1, 1)
    return TimeSeries("monthly", stamps, daily.feature_names, np.array(rows))


@dataclass
class Scaler:
    """Per-feature min-max map to [0, 1], fitted on training data only.

    Degenerate features (constant, or fewer than two present values in
    the fit span) transform to 0.0 and invert back to their min.
    """

    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray
    fitted_on: tuple[dt.date, dt.date]
    degenerate: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.feature_names = tuple(self.feature_names)
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if np.any(self.maxs < self.mins):
            raise ValueError("max < min")

    def _check_arity(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != len(self.feature_names):
            raise ArityMismatch(len(self.feature_names), values.shape[-1])
        return values

    def transform(self, values: np.ndarray) -> np.ndarray:
        """(x - min) / (max - min) along the last axis. NaN passes through."""
        values = self._check_arity(values)
        span = self.maxs - self.mins
        safe = np.where(span == 0, 1.0, span)
        out = (values - self.mins) / safe
        return np.where(span == 0, np.where(np.isnan(values), np.nan, 0.0), out)

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        values = self._check_arity(values)
        return self.mins + values * (self.maxs - self.mins)

    def transform_feature(self, name: str, values: np.ndarray) -> np.ndarray:
        return self._feature_op(name, values, inverse=False)

    def inverse_transform_feature(self, name: str, values: np.ndarray) -> np.ndarray:
        return self._feature_op(name, values, inverse=True)

    def _feature_op(self, name: str, values, inverse: bool) -> np.ndarray:
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise ArityMismatch(len(self.feature_names), -1) from None
        values = np.asarray(values, dtype=np.float64)
        span = self.maxs[j] - self.mins[j]
        if inverse:
            return self.mins[j] + values * span
        if span == 0:
            return np.where(np.isnan(values), np.nan, 0.0)
        return (values - self.mins[j]) / span

    def transform_series(self, ts: TimeSeries) -> TimeSeries:
        return TimeSeries(ts.frequency, ts.stamps, ts.feature_names, self.transform(ts.values))

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mins": [float(v) for v in self.mins],
            "maxs": [float(v) for v in self.maxs],
            "fitted_on": [self.fitted_on[0].isoformat(), self.fitted_on[1].isoformat()],
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(
            tuple(d["feature_names"]),
            np.array(d["mins"]),
            np.array(d["maxs"]),
            (dt.date.fromisoformat(d["fitted_on"][0]), dt.date.fromisoformat(d["fitted_on"][1])),
            tuple(d.get("degenerate", ())),
        )


def fit_scaler(ts: TimeSeries, span: tuple[dt.date, dt.date]) -> Scaler:
    """Fit per-feature min/max over present values inside ``span`` (inclusive).

    Features without a usable range are downgraded to the degenerate rule
    with a logged warning rather than failing the pipeline.
    """
    lo = ts.index_of(span[0])
    hi = ts.index_of(span[1]) + 1
    block = ts.values[lo:hi]
    mins, maxs, degenerate = [], [], []
    for j, name in enumerate(ts.feature_names):
        present = block[:, j][~np.isnan(block[:, j])]
        if len(present) < 2 or present.min() == present.max():
            value = float(present[0]) if len(present) else 0.0
            mins.append(value)
            maxs.append(value)
            degenerate.append(name)
            log.warning("feature %r is degenerate over the fit span; maps to 0.0", name)
        else:
            mins.append(float(present.min()))
            maxs.append(float(present.max()))
    return Scaler(ts.feature_names, np.array(mins), np.array(maxs), span, tuple(degenerate))


@dataclass
class WindowedDataset:
    """Supervised (input window, horizon target) pairs, chronologically ordered.

    ``origin_stamps[k]`` is the stamp immediately after window k's input
    span, i.e. the stamp of its first target step.
    """

    inputs: np.ndarray  # (N, L, F), scaled
    targets: np.ndarray  # (N, H), scaled
    origin_stamps: list[dt.date]
    feature_names: tuple[str, ...]
    target_feature: str
    scaler: Scaler | None = None

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if len(self.inputs) != len(self.targets) or len(self.inputs) != len(self.origin_stamps):
            raise ValueError("inputs, targets, and origin_stamps disagree on N")

    def __len__(self) -> int:
        return len(self.origin_stamps)


def valid_window_origins(ts: TimeSeries, input_len: int, horizon: int) -> list[int]:
    """Start indices whose full input+horizon span has no masked value."""
    needed = input_len + horizon
    if len(ts) < needed:
        raise TooShort(len(ts), needed)
    ok = ~np.isnan(ts.values).any(axis=1)
    # window at i is valid iff ok[i : i + needed] is all True
    run = np.convolve(ok.astype(np.int64), np.ones(needed, dtype=np.int64), mode="valid")
    return [int(i) for i in np.flatnonzero(run == needed)]


def make_windows(
    ts: TimeSeries,
    input_len: int,
    horizon: int,
    target_feature: str,
    scaler: Scaler | None = None,
) -> WindowedDataset:
    """Build stride-1 windows over a (scaled) series.

    Inputs carry every feature, targets only ``target_feature``. Windows
    whose span touches a masked value are dropped.
    """
    origins = valid_window_origins(ts, input_len, horizon)
    tf = ts.feature_index(target_feature)
    inputs = np.empty((len(origins), input_len, len(ts.feature_names)))
    targets = np.empty((len(origins), horizon))
    stamps = []
    for k, i in enumerate(origins):
        inputs[k] = ts.values[i : i + input_len]
        targets[k] = ts.values[i + input_len : i + input_len + horizon, tf]
        stamps.append(ts.stamps[i + input_len])
    return WindowedDataset(inputs, targets, stamps, ts.feature_names, target_feature, scaler)


def chrono_split(
    ds: WindowedDataset, train_frac: float = 0.8
) -> tuple[WindowedDataset, WindowedDataset]:
    """First floor(train_frac * N) windows to train, remainder to validation."""
    if not len(ds):
        raise SeriesError("cannot split an empty dataset")
    n_train = math.floor(train_frac * len(ds))
    if n_train == 0:
        log.warning("chrono_split: 0 training windows (N=%d, frac=%.2f)", len(ds), train_frac)

    def take(a: int, b: int) -> WindowedDataset:
        return WindowedDataset(
            ds.inputs[a:b], ds.targets[a:b], ds.origin_stamps[a:b],
            ds.feature_names, ds.target_feature, ds.scaler,
        )

    return take(0, n_train), take(n_train, len(ds))


def training_span(
    ts: TimeSeries, input_len: int, horizon: int, train_frac: float = 0.8
) -> tuple[dt.date, dt.date]:
    """Stamp span the training windows of a chronological split will touch.

    Used to fit the scaler before scaling and windowing, so that min/max
    never see validation data. Falls back to the first window's span when
    the split would leave the training side empty.
    """
    origins = valid_window_origins(ts, input_len, horizon)
    if not origins:
        raise TooShort(len(ts), input_len + horizon)
    n_train = math.floor(train_frac * len(origins))
    last_origin = origins[max(n_train - 1, 0)]
    return ts.stamps[0], ts.stamps[last_origin + input_len + horizon - 1]
