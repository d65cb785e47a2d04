"""Historical-average baseline and calendar-position variability.

The baseline for a target stamp is the mean of the same calendar
position (day-of-year or month) over the last ``window_years`` complete
calendar years before the cutoff date. The per-position sample standard
deviation doubles as the uncertainty signal that gates forecast fusion.
"""

from __future__ import annotations

import calendar
import datetime as dt
import logging
from dataclasses import dataclass

import numpy as np

from .errors import RaincastError
from .series import TimeSeries

log = logging.getLogger(__name__)


class ClimatologyError(RaincastError):
    pass


class InsufficientHistory(ClimatologyError):
    def __init__(self, have: int):
        super().__init__(f"need data in at least 2 window years, have {have}")


class MissingEntry(ClimatologyError):
    def __init__(self, key: str):
        super().__init__(f"climatology entry {key!r} has no supporting years")
        self.key = key


# Calendar keys in leap-year order: ("MM-DD", ...) for daily, ("01".."12") monthly.
_DAILY_KEYS = tuple(
    f"{m:02d}-{d:02d}"
    for m in range(1, 13)
    for d in range(1, calendar.monthrange(2000, m)[1] + 1)
)
_MONTHLY_KEYS = tuple(f"{m:02d}" for m in range(1, 13))
_DAILY_INDEX = {k: i for i, k in enumerate(_DAILY_KEYS)}


@dataclass
class Climatology:
    """Per calendar position mean/std/support of one feature, in mm.

    Daily climatologies have 366 entries (Feb 29 averaged over leap years
    only); monthly ones have 12. Entries with zero support hold NaN.
    """

    frequency: str
    as_of: dt.date
    window_years: int
    feature: str
    mean: np.ndarray
    std: np.ndarray
    support: np.ndarray

    @property
    def keys(self) -> tuple[str, ...]:
        return _DAILY_KEYS if self.frequency == "daily" else _MONTHLY_KEYS

    @property
    def first_year(self) -> int:
        return self.as_of.year - self.window_years

    @property
    def last_year(self) -> int:
        return self.as_of.year - 1

    def entry_index(self, stamp: dt.date) -> int:
        if self.frequency == "daily":
            return _DAILY_INDEX[f"{stamp.month:02d}-{stamp.day:02d}"]
        return stamp.month - 1

    def values_for(self, period: list[dt.date]) -> np.ndarray:
        out = np.empty(len(period))
        for i, stamp in enumerate(period):
            j = self.entry_index(stamp)
            if self.support[j] == 0 or np.isnan(self.mean[j]):
                raise MissingEntry(self.keys[j])
            out[i] = self.mean[j]
        return out

    def stds_for(self, period: list[dt.date]) -> np.ndarray:
        out = np.empty(len(period))
        for i, stamp in enumerate(period):
            j = self.entry_index(stamp)
            if self.support[j] == 0:
                raise MissingEntry(self.keys[j])
            out[i] = self.std[j]
        return out

    def to_csv(self) -> str:
        lines = ["entry,mean,std,support"]
        for i, key in enumerate(self.keys):
            mean = "" if np.isnan(self.mean[i]) else repr(float(self.mean[i]))
            std = "" if np.isnan(self.std[i]) else repr(float(self.std[i]))
            lines.append(f"{key},{mean},{std},{int(self.support[i])}")
        return "\n".join(lines) + "\n"


def build_climatology(
    ts: TimeSeries,
    as_of: dt.date,
    window_years: int = 30,
    feature: str = "prcp",
) -> Climatology:
    """Build a climatology from the last ``window_years`` complete years.

    The window is the calendar years strictly before ``as_of``'s year
    (as_of 2023-09-30 with a 30-year window covers 1993..2022). Entries
    average present values only; std is the n-1 sample deviation, forced
    to 0 with a warning where only one year contributes.
    """
    first_year = as_of.year - window_years
    last_year = as_of.year - 1
    values = ts.feature(feature)

    keys = _DAILY_KEYS if ts.frequency == "daily" else _MONTHLY_KEYS
    buckets: list[list[float]] = [[] for _ in keys]
    contributing_years: set[int] = set()
    for stamp, value in zip(ts.stamps, values):
        if stamp.year < first_year or stamp.year > last_year or np.isnan(value):
            continue
        if ts.frequency == "daily":
            idx = _DAILY_INDEX[f"{stamp.month:02d}-{stamp.day:02d}"]
        else:
            idx = stamp.month - 1
        buckets[idx].append(float(value))
        contributing_years.add(stamp.year)
    if len(contributing_years) < 2:
        raise InsufficientHistory(len(contributing_years))

    mean = np.full(len(keys), np.nan)
    std = np.full(len(keys), np.nan)
    support = np.zeros(len(keys), dtype=np.int64)
    for i, bucket in enumerate(buckets):
        support[i] = len(bucket)
        if not bucket:
            continue
        arr = np.array(bucket)
        mean[i] = arr.mean()
        if len(bucket) == 1:
            log.warning("climatology entry %s has a single supporting year; std -> 0", keys[i])
            std[i] = 0.0
        else:
            std[i] = arr.std(ddof=1)
    return Climatology(ts.frequency, as_of, window_years, feature, mean, std, support)


def baseline_forecast(clim: Climatology, period: list[dt.date]) -> np.ndarray:
    """Map each target stamp to its climatological mean."""
    if clim.frequency == "monthly" and any(p.day != 1 for p in period):
        raise ClimatologyError("monthly climatology queried with non-monthly stamps")
    return clim.values_for(period)
