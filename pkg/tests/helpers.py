"""Small builders shared across test modules."""

import datetime as dt

import numpy as np

from raincast.series import TimeSeries


def make_ts(values, frequency="daily", start=dt.date(2020, 1, 1), names=None):
    """TimeSeries from an (n, F) array-like; NaN encodes missing."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, np.newaxis]
    n, f = values.shape
    names = tuple(names or [f"f{i}" for i in range(f)])
    if frequency == "daily":
        stamps = [start + dt.timedelta(days=i) for i in range(n)]
    else:
        stamps = []
        month = dt.date(start.year, start.month, 1)
        for _ in range(n):
            stamps.append(month)
            month = dt.date(month.year + (month.month == 12), month.month % 12 + 1, 1)
    return TimeSeries(frequency, stamps, names, values)
