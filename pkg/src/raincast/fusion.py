"""Uncertainty-gated combination of expert forecasts with a fallback.

Steps whose historical variability is low form "confidence regions"
where the expert model is trusted outright; elsewhere the forecast
falls back to a conservative source (climatology by default). The hard
policy switches per step; the soft policy blends with an exponential
weight in the uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RaincastError


class FusionError(RaincastError):
    pass


class EmptyStds(FusionError):
    def __init__(self):
        super().__init__("no uncertainty values supplied")


class LengthMismatch(FusionError):
    def __init__(self, detail: str):
        super().__init__(detail)


@dataclass
class FusionConfig:
    policy: str = "hard"  # hard | soft
    threshold_mode: str = "quantile"  # absolute | quantile
    tau: float | None = None  # mm; absolute threshold, reused as the soft scale
    quantile: float = 0.5
    fallback_source: str = "Baseline"

    def __post_init__(self) -> None:
        if self.policy not in ("hard", "soft"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.threshold_mode not in ("absolute", "quantile"):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.threshold_mode == "absolute":
            if self.tau is None or self.tau <= 0:
                raise ValueError("absolute mode needs tau > 0")
        elif not 0 < self.quantile < 1:
            raise ValueError("quantile must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "threshold_mode": self.threshold_mode,
            "tau": self.tau,
            "quantile": self.quantile,
            "fallback_source": self.fallback_source,
        }


@dataclass
class FusionResult:
    values: np.ndarray  # fused per-step mm, clamped at 0
    tau: float
    weights: np.ndarray  # per-step weight on the expert forecast


def resolve_threshold(stds, cfg: FusionConfig) -> float:
    """Absolute mode returns tau as configured; quantile mode takes the
    linearly interpolated q-th order statistic of the supplied stds."""
    stds = np.asarray(stds, dtype=np.float64)
    if stds.size == 0:
        raise EmptyStds()
    if np.any(stds < 0):
        raise FusionError("negative uncertainty value")
    if cfg.threshold_mode == "absolute":
        return float(cfg.tau)
    return float(np.quantile(stds, cfg.quantile))


def fuse(em, fallback, stds, cfg: FusionConfig) -> FusionResult:
    """Combine expert and fallback forecasts elementwise.

    hard: take the expert step where std <= tau, the fallback otherwise.
    soft: w = exp(-std / tau); output = w * em + (1 - w) * fallback.
    Output is clamped at zero either way.
    """
    em = np.asarray(em, dtype=np.float64)
    fallback = np.asarray(fallback, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    if not (em.shape == fallback.shape == stds.shape):
        raise LengthMismatch(
            f"em {em.shape}, fallback {fallback.shape}, stds {stds.shape}"
        )
    if not (np.isfinite(em).all() and np.isfinite(fallback).all() and np.isfinite(stds).all()):
        raise FusionError("non-finite input")
    tau = resolve_threshold(stds, cfg)
    if cfg.policy == "hard":
        weights = (stds <= tau).astype(np.float64)
    else:
        weights = np.exp(-stds / tau)
    fused = weights * em + (1.0 - weights) * fallback
    return FusionResult(np.maximum(fused, 0.0), tau, weights)


def fusion_trace(
    em, fallback, stds, result: FusionResult
) -> list[dict]:
    """Per-step record of every fusion choice, for the run output."""
    rows = []
    for i in range(len(result.values)):
        rows.append(
            {
                "step": i,
                "em": float(em[i]),
                "fallback": float(fallback[i]),
                "std": float(stds[i]),
                "tau": result.tau,
                "weight": float(result.weights[i]),
                "fused": float(result.values[i]),
            }
        )
    return rows
