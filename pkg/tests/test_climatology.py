import datetime as dt
import logging

import numpy as np
import pytest

from helpers import make_ts
from raincast.climatology import (
    InsufficientHistory,
    MissingEntry,
    baseline_forecast,
    build_climatology,
)

AS_OF = dt.date(2023, 9, 30)


def daily_ts(start_year, end_year, value_fn):
    start = dt.date(start_year, 1, 1)
    end = dt.date(end_year, 12, 31)
    n = (end - start).days + 1
    dates = [start + dt.timedelta(days=i) for i in range(n)]
    values = np.array([value_fn(d) for d in dates], dtype=np.float64)
    return make_ts(values, "daily", start, names=("prcp",))


def monthly_ts(start_year, end_year, value_fn):
    values = []
    for year in range(start_year, end_year + 1):
        values.extend(value_fn(year, m) for m in range(1, 13))
    return make_ts(np.array(values), "monthly", dt.date(start_year, 1, 1), names=("prcp",))


class TestBuildDaily:
    def test_constant_series(self):
        ts = daily_ts(2018, 2022, lambda d: 3.0)
        clim = build_climatology(ts, AS_OF, window_years=30)
        covered = clim.support > 0
        assert covered.any()
        assert np.all(clim.mean[covered] == 3.0)
        assert np.all(clim.std[covered] == 0.0)

    def test_window_is_last_30_complete_years(self):
        # values encode the year so window membership is visible
        ts = daily_ts(1990, 2023, lambda d: float(d.year))
        clim = build_climatology(ts, AS_OF, window_years=30)
        jan1 = clim.entry_index(dt.date(2001, 1, 1))
        assert clim.support[jan1] == 30
        assert clim.mean[jan1] == pytest.approx(np.mean(np.arange(1993, 2023)))
        assert clim.first_year == 1993 and clim.last_year == 2022

    def test_feb29_leap_years_only(self):
        ts = daily_ts(2013, 2022, lambda d: 1.0)
        clim = build_climatology(ts, AS_OF, window_years=10)
        feb29 = clim.entry_index(dt.date(2020, 2, 29))
        feb28 = clim.entry_index(dt.date(2021, 2, 28))
        assert clim.support[feb29] == 2  # only 2016 and 2020 are leap years in window
        assert clim.support[feb28] == 10

    def test_single_support_std_zero(self, caplog):
        # only 2022 has Feb data in this window, but two years contribute overall
        def value_fn(d):
            if d.month == 2 and d.year != 2022:
                return np.nan
            return 2.0

        ts = daily_ts(2021, 2022, value_fn)
        with caplog.at_level(logging.WARNING):
            clim = build_climatology(ts, AS_OF, window_years=30)
        feb1 = clim.entry_index(dt.date(2022, 2, 1))
        assert clim.support[feb1] == 1
        assert clim.std[feb1] == 0.0

    def test_insufficient_history(self):
        ts = daily_ts(2022, 2022, lambda d: 1.0)
        with pytest.raises(InsufficientHistory):
            build_climatology(ts, AS_OF, window_years=30)


class TestBuildMonthly:
    def test_two_year_mean_and_sample_std(self):
        ts = monthly_ts(2021, 2022, lambda y, m: 10.0 if y == 2021 else 20.0)
        clim = build_climatology(ts, AS_OF, window_years=30)
        jan = clim.entry_index(dt.date(2023, 1, 1))
        assert clim.mean[jan] == 15.0
        assert clim.std[jan] == pytest.approx(np.sqrt(50.0))  # ~7.0711
        assert clim.support[jan] == 2

    def test_mean_invariant_when_adding_mean_year(self):
        base = monthly_ts(2020, 2021, lambda y, m: 10.0 if y == 2020 else 20.0)
        extended = monthly_ts(2019, 2021, lambda y, m: {2019: 15.0, 2020: 10.0, 2021: 20.0}[y])
        c1 = build_climatology(base, AS_OF, 30)
        c2 = build_climatology(extended, AS_OF, 30)
        assert np.allclose(c2.mean, c1.mean)
        assert np.all(c2.std <= c1.std + 1e-12)

    def test_out_of_window_years_ignored(self):
        inside = monthly_ts(1993, 2022, lambda y, m: float(m))
        padded = monthly_ts(1980, 2023, lambda y, m: float(m) if 1993 <= y <= 2022 else 999.0)
        c1 = build_climatology(inside, AS_OF, 30)
        c2 = build_climatology(padded, AS_OF, 30)
        np.testing.assert_array_equal(c1.mean, c2.mean)
        np.testing.assert_array_equal(c1.support, c2.support)


class TestBaselineForecast:
    def test_daily_october_window(self):
        ts = daily_ts(2018, 2022, lambda d: float(d.timetuple().tm_yday % 50))
        clim = build_climatology(ts, AS_OF, window_years=5)
        period = [dt.date(2023, 10, 1) + dt.timedelta(days=i) for i in range(15)]
        values = baseline_forecast(clim, period)
        assert len(values) == 15
        # Oct 1 is day-of-year 274 in non-leap years; check against direct average
        expected = np.mean(
            [float(dt.date(y, 10, 1).timetuple().tm_yday % 50) for y in range(2018, 2023)]
        )
        assert values[0] == pytest.approx(expected)

    def test_monthly_period(self):
        ts = monthly_ts(2020, 2022, lambda y, m: float(m))
        clim = build_climatology(ts, AS_OF, window_years=30)
        period = [dt.date(2023, 10, 1), dt.date(2023, 11, 1), dt.date(2023, 12, 1),
                  dt.date(2024, 1, 1)]
        np.testing.assert_allclose(baseline_forecast(clim, period), [10.0, 11.0, 12.0, 1.0])

    def test_constant_climatology_constant_forecast(self):
        ts = monthly_ts(2020, 2022, lambda y, m: 4.0)
        clim = build_climatology(ts, AS_OF, window_years=30)
        period = [dt.date(2023, 10 + i, 1) for i in range(3)]
        assert set(baseline_forecast(clim, period)) == {4.0}

    def test_missing_entry(self):
        def value_fn(y, m):
            return np.nan if m == 10 else 1.0

        ts = monthly_ts(2020, 2022, value_fn)
        clim = build_climatology(ts, AS_OF, window_years=30)
        with pytest.raises(MissingEntry):
            baseline_forecast(clim, [dt.date(2023, 10, 1)])

    def test_idempotent(self):
        ts = monthly_ts(2020, 2022, lambda y, m: float(m * y % 7))
        clim = build_climatology(ts, AS_OF, window_years=30)
        period = [dt.date(2023, 10, 1), dt.date(2023, 11, 1)]
        first = baseline_forecast(clim, period)
        second = baseline_forecast(clim, period)
        np.testing.assert_array_equal(first, second)


class TestExport:
    def test_csv_shape(self):
        ts = monthly_ts(2020, 2022, lambda y, m: float(m))
        clim = build_climatology(ts, AS_OF, window_years=30)
        lines = clim.to_csv().strip().splitlines()
        assert lines[0] == "entry,mean,std,support"
        assert len(lines) == 13

    def test_daily_has_366_entries(self):
        ts = daily_ts(2018, 2022, lambda d: 1.0)
        clim = build_climatology(ts, AS_OF, window_years=30)
        assert len(clim.keys) == 366
        assert len(clim.to_csv().strip().splitlines()) == 367
