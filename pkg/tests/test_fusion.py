import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raincast.fusion import (
    EmptyStds,
    FusionConfig,
    FusionError,
    LengthMismatch,
    fuse,
    fusion_trace,
    resolve_threshold,
)


class TestResolveThreshold:
    def test_median_interpolated(self):
        cfg = FusionConfig(threshold_mode="quantile", quantile=0.5)
        assert resolve_threshold([1.0, 2.0, 3.0, 4.0], cfg) == pytest.approx(2.5)

    def test_absolute_ignores_stds(self):
        cfg = FusionConfig(threshold_mode="absolute", tau=1.0)
        assert resolve_threshold([5.0, 50.0], cfg) == 1.0

    def test_all_equal(self):
        for q in (0.1, 0.5, 0.9):
            cfg = FusionConfig(threshold_mode="quantile", quantile=q)
            assert resolve_threshold([3.0, 3.0, 3.0], cfg) == 3.0

    def test_empty(self):
        with pytest.raises(EmptyStds):
            resolve_threshold([], FusionConfig())


class TestHardPolicy:
    def test_all_below_gives_em(self):
        cfg = FusionConfig(policy="hard", threshold_mode="absolute", tau=10.0)
        em = np.array([1.0, 2.0, 3.0])
        result = fuse(em, np.zeros(3), np.array([1.0, 2.0, 3.0]), cfg)
        np.testing.assert_array_equal(result.values, em)

    def test_all_above_gives_fallback(self):
        cfg = FusionConfig(policy="hard", threshold_mode="absolute", tau=0.5)
        fallback = np.array([4.0, 5.0, 6.0])
        result = fuse(np.ones(3), fallback, np.array([1.0, 2.0, 3.0]), cfg)
        np.testing.assert_array_equal(result.values, fallback)

    def test_elementwise_membership(self):
        rng = np.random.default_rng(0)
        cfg = FusionConfig(policy="hard", threshold_mode="quantile", quantile=0.5)
        em = rng.uniform(0, 10, 12)
        fb = rng.uniform(0, 10, 12)
        stds = rng.uniform(0, 5, 12)
        result = fuse(em, fb, stds, cfg)
        for i, v in enumerate(result.values):
            assert v == em[i] or v == fb[i]

    def test_tiny_tau_with_positive_stds(self):
        cfg = FusionConfig(policy="hard", threshold_mode="absolute", tau=1e-12)
        fb = np.array([1.0, 2.0])
        result = fuse(np.array([9.0, 9.0]), fb, np.array([0.5, 0.7]), cfg)
        np.testing.assert_array_equal(result.values, fb)


class TestSoftPolicy:
    def test_blend_at_tau(self):
        cfg = FusionConfig(policy="soft", threshold_mode="absolute", tau=2.0)
        result = fuse([10.0], [0.0], [2.0], cfg)
        assert result.values[0] == pytest.approx(10.0 * math.exp(-1.0), rel=1e-12)

    def test_monotone_toward_fallback(self):
        cfg = FusionConfig(policy="soft", threshold_mode="absolute", tau=1.5)
        outputs = [
            fuse([10.0], [2.0], [s], cfg).values[0] for s in np.linspace(0, 10, 25)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(outputs, outputs[1:]))
        assert outputs[0] == pytest.approx(10.0, rel=1e-6)

    def test_huge_tau_approaches_em(self):
        cfg = FusionConfig(policy="soft", threshold_mode="absolute", tau=1e9)
        result = fuse([7.0], [0.0], [3.0], cfg)
        assert result.values[0] == pytest.approx(7.0, rel=1e-6)

    def test_clamped_at_zero(self):
        cfg = FusionConfig(policy="soft", threshold_mode="absolute", tau=1.0)
        result = fuse([-5.0], [-1.0], [1.0], cfg)
        assert result.values[0] == 0.0


class TestValidation:
    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            fuse([1.0], [1.0, 2.0], [0.1, 0.2], FusionConfig())

    def test_non_finite(self):
        with pytest.raises(FusionError):
            fuse([np.nan], [1.0], [0.1], FusionConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FusionConfig(policy="maybe")
        with pytest.raises(ValueError):
            FusionConfig(threshold_mode="absolute", tau=0.0)
        with pytest.raises(ValueError):
            FusionConfig(threshold_mode="quantile", quantile=1.5)


@settings(max_examples=200, deadline=None)
@given(
    data=st.data(),
    n=st.integers(min_value=1, max_value=20),
    policy=st.sampled_from(["hard", "soft"]),
)
def test_between_inputs_before_clamp(data, n, policy):
    floats = st.floats(min_value=0.0, max_value=100.0, allow_nan=False)
    em = data.draw(st.lists(floats, min_size=n, max_size=n))
    fb = data.draw(st.lists(floats, min_size=n, max_size=n))
    stds = data.draw(st.lists(floats, min_size=n, max_size=n))
    tau = data.draw(st.floats(min_value=1e-3, max_value=1e3))
    cfg = FusionConfig(policy=policy, threshold_mode="absolute", tau=tau)
    result = fuse(em, fb, stds, cfg)
    for i in range(n):
        lo, hi = min(em[i], fb[i]), max(em[i], fb[i])
        assert lo - 1e-9 <= result.values[i] <= hi + 1e-9


def test_trace_rows():
    cfg = FusionConfig(policy="hard", threshold_mode="absolute", tau=1.0)
    em, fb, stds = [3.0, 4.0], [1.0, 1.0], [0.5, 2.0]
    result = fuse(em, fb, stds, cfg)
    rows = fusion_trace(em, fb, stds, result)
    assert rows[0] == {
        "step": 0, "em": 3.0, "fallback": 1.0, "std": 0.5,
        "tau": 1.0, "weight": 1.0, "fused": 3.0,
    }
    assert rows[1]["fused"] == 1.0 and rows[1]["weight"] == 0.0
