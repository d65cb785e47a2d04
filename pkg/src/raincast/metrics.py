"""Forecast verification metrics.

Implemented functions:
    rmse: root mean square error (population 1/n normalization).
    pearson: product-moment correlation, "undefined" on zero variance.
    nse: Nash-Sutcliffe model efficiency coefficient.
    metric_report / summarize: per-city reports and cross-city means.

Undefined is a first-class outcome here (returned as None), distinct
from an error: a constant forecast, e.g. a flat daily climatology, must
not poison a cross-city summary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RaincastError


class MetricError(RaincastError):
    pass


class LengthMismatch(MetricError):
    def __init__(self, n_pred: int, n_obs: int):
        super().__init__(f"length mismatch: pred {n_pred} vs obs {n_obs}")


class Empty(MetricError):
    def __init__(self):
        super().__init__("empty input")


class ConstantObservations(MetricError):
    def __init__(self):
        super().__init__("observations are constant; NSE is undefined")


@dataclass
class MetricReport:
    """One (forecast, observation) comparison.

    pearson and nse are None when mathematically undefined.
    """

    rmse: float
    pearson: float | None
    nse: float | None
    n: int

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "pearson": self.pearson, "nse": self.nse, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(d["rmse"], d["pearson"], d["nse"], d["n"])


def _pair(pred, obs) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape:
        raise LengthMismatch(pred.size, obs.size)
    return pred, obs


def rmse(pred, obs) -> float:
    """Root mean square error, sqrt(mean((pred - obs)^2))."""
    pred, obs = _pair(pred, obs)
    if pred.size == 0:
        raise Empty()
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def pearson(pred, obs) -> float | None:
    """Pearson's correlation coefficient.

    Returns None (undefined) when either side has zero variance. The
    covariance and variances share the same 1/n normalization, so the
    constant cancels.
    """
    pred, obs = _pair(pred, obs)
    if pred.size == 0:
        raise Empty()
    dp = pred - pred.mean()
    do = obs - obs.mean()
    denom = np.sqrt(np.sum(dp**2) * np.sum(do**2))
    if denom == 0:
        return None
    return float(np.sum(dp * do) / denom)


def nse(pred, obs) -> float:
    """Nash-Sutcliffe efficiency: 1 - sum((obs-pred)^2) / sum((obs-mean(obs))^2).

    1 is a perfect forecast; 0 matches the observation mean. Raises
    ConstantObservations when the denominator is zero.
    """
    pred, obs = _pair(pred, obs)
    if pred.size == 0:
        raise Empty()
    denom = np.sum((obs - obs.mean()) ** 2)
    if denom == 0:
        raise ConstantObservations()
    return float(1.0 - np.sum((obs - pred) ** 2) / denom)


def metric_report(pred, obs) -> MetricReport:
    """Compute all three metrics, downgrading undefined cases to None."""
    pred, obs = _pair(pred, obs)
    try:
        efficiency: float | None = nse(pred, obs)
    except ConstantObservations:
        efficiency = None
    return MetricReport(rmse(pred, obs), pearson(pred, obs), efficiency, int(pred.size))


@dataclass
class MetricSummary:
    """Unweighted cross-city means; undefined entries excluded and counted."""

    rmse: float
    pearson: float | None
    nse: float | None
    n_cities: int
    excluded: dict

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "pearson": self.pearson,
            "nse": self.nse,
            "n_cities": self.n_cities,
            "excluded": dict(self.excluded),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSummary":
        return cls(d["rmse"], d["pearson"], d["nse"], d["n_cities"], dict(d["excluded"]))


def summarize(per_city: dict[str, MetricReport]) -> MetricSummary:
    """Average MetricReports across cities."""
    if not per_city:
        raise Empty()
    reports = list(per_city.values())
    excluded = {"pearson": 0, "nse": 0}

    def mean_of(values: list[float | None], key: str) -> float | None:
        defined = [v for v in values if v is not None]
        excluded[key] = len(values) - len(defined)
        return float(np.mean(defined)) if defined else None

    mean_rmse = float(np.mean([r.rmse for r in reports]))
    mean_pearson = mean_of([r.pearson for r in reports], "pearson")
    mean_nse = mean_of([r.nse for r in reports], "nse")
    return MetricSummary(mean_rmse, mean_pearson, mean_nse, len(reports), excluded)


def pooled_report(pred_by_city: dict[str, np.ndarray], obs_by_city: dict[str, np.ndarray]) -> MetricReport:
    """Alternative summary mode: concatenate all cities, then score once."""
    cities = sorted(pred_by_city)
    if not cities:
        raise Empty()
    pred = np.concatenate([np.asarray(pred_by_city[c], dtype=np.float64) for c in cities])
    obs = np.concatenate([np.asarray(obs_by_city[c], dtype=np.float64) for c in cities])
    return metric_report(pred, obs)
