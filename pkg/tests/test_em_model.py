import datetime as dt
import json

import numpy as np
import pytest

from oracles import scalar_lstm_forward
from raincast.checkpoint import (
    CheckpointError,
    DimMismatch,
    VersionMismatch,
    load_checkpoint,
    save_checkpoint,
)
from raincast.em_model import (
    NonFiniteLoss,
    ShapeMismatch,
    finite_difference_grads,
    forward,
    grad_check,
    init_model,
    loss_and_grads,
    predict,
    relative_errors,
)
from raincast.series import Scaler
from raincast.training import (
    AdamState,
    TrainConfig,
    adam_step,
    clip_gradients,
    evaluate_mse,
    global_norm,
    train,
)
from helpers import make_ts
from raincast.series import chrono_split, make_windows

TOY = dict(n_features=3, hidden=8, horizon=2, seed=11)


def toy_model(seed=11):
    return init_model(3, 8, 2, seed)


def toy_batch(seed=0, batch=4, steps=8):
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(-1, 1, size=(batch, steps, 3))
    targets = rng.uniform(-1, 1, size=(batch, 2))
    return inputs, targets


def zero_model():
    m = toy_model()
    for _, arr in m.param_items():
        arr[:] = 0.0
    return m


class TestInit:
    def test_same_seed_identical(self):
        a, b = init_model(3, 16, 4, seed=5), init_model(3, 16, 4, seed=5)
        for (name, pa), (_, pb) in zip(a.param_items(), b.param_items()):
            np.testing.assert_array_equal(pa, pb, err_msg=name)

    def test_different_seed_differs(self):
        a, b = init_model(3, 16, 4, seed=5), init_model(3, 16, 4, seed=6)
        assert any(
            not np.array_equal(pa, pb)
            for (_, pa), (_, pb) in zip(a.param_items(), b.param_items())
        )

    def test_xavier_bounds(self):
        m = init_model(4, 32, 3, seed=1)
        checks = [
            (m.layer1.w_i, 4 + 32),
            (m.layer1.u_o, 32 + 32),
            (m.layer2.w_g, 32 + 32),
            (m.head_w, 32 + 3),
        ]
        for arr, fan_sum in checks:
            limit = np.sqrt(6.0 / fan_sum)
            assert np.all(np.abs(arr) <= limit)

    def test_biases(self):
        m = init_model(3, 8, 2, seed=1)
        for layer in (m.layer1, m.layer2):
            np.testing.assert_array_equal(layer.b_f, np.ones(8))
            np.testing.assert_array_equal(layer.b_i, np.zeros(8))
            np.testing.assert_array_equal(layer.b_g, np.zeros(8))
            np.testing.assert_array_equal(layer.b_o, np.zeros(8))
        np.testing.assert_array_equal(m.head_b, np.zeros(2))


class TestForward:
    def test_zero_params_zero_output(self):
        inputs, _ = toy_batch()
        preds = forward(zero_model(), inputs)
        np.testing.assert_array_equal(preds, np.zeros((4, 2)))

    def test_batch_permutation(self):
        m = toy_model()
        inputs, _ = toy_batch()
        perm = np.array([2, 0, 3, 1])
        np.testing.assert_allclose(
            forward(m, inputs[perm]), forward(m, inputs)[perm], rtol=0, atol=0
        )

    def test_matches_scalar_oracle(self):
        m = toy_model()
        inputs, _ = toy_batch()
        oracle = np.array(scalar_lstm_forward(m, inputs))
        np.testing.assert_allclose(forward(m, inputs), oracle, rtol=0, atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            forward(toy_model(), np.zeros((2, 8, 5)))

    def test_states_finite_for_bounded_inputs(self):
        m = init_model(3, 16, 15, seed=3)
        rng = np.random.default_rng(0)
        inputs = rng.uniform(-10, 10, size=(8, 60, 3))
        preds, cache = forward(m, inputs, keep_cache=True)
        assert np.isfinite(preds).all()
        assert np.isfinite(cache["c2_last"]).all()
        assert np.isfinite(cache["h_last"]).all()


class TestGradients:
    def test_perfect_fit_zero_grads(self):
        m = toy_model()
        inputs, _ = toy_batch()
        targets = forward(m, inputs)
        loss, grads = loss_and_grads(m, inputs, targets)
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads.values())

    def test_loss_batch_order_invariant(self):
        m = toy_model()
        inputs, targets = toy_batch()
        perm = np.array([3, 1, 0, 2])
        loss_a, _ = loss_and_grads(m, inputs, targets)
        loss_b, _ = loss_and_grads(m, inputs[perm], targets[perm])
        assert loss_a == pytest.approx(loss_b, rel=1e-15)

    def test_matches_finite_differences(self):
        m = toy_model()
        inputs, targets = toy_batch()
        assert grad_check(m, inputs, targets, eps=1e-5) < 1e-4

    def test_corrupted_forget_gradient_detected(self):
        m = toy_model()
        inputs, targets = toy_batch()
        _, analytic = loss_and_grads(m, inputs, targets)
        numeric = finite_difference_grads(m, inputs, targets)
        analytic["layer1.w_f"] = analytic["layer1.w_f"] * 1.5 + 1e-3
        assert max(relative_errors(analytic, numeric).values()) > 1e-2

    def test_zero_model_grad_check_finite(self):
        inputs, targets = toy_batch()
        err = grad_check(zero_model(), inputs, targets)
        assert np.isfinite(err)

    def test_non_finite_raises(self):
        m = toy_model()
        m.head_w[0, 0] = np.inf
        inputs, targets = toy_batch()
        with pytest.raises(NonFiniteLoss):
            loss_and_grads(m, inputs, targets)


class TestAdam:
    def test_zero_grads_no_change(self):
        m = toy_model()
        before = {name: arr.copy() for name, arr in m.param_items()}
        state = AdamState.for_model(m)
        adam_step(m, m.zero_grads(), state, TrainConfig())
        assert state.t == 1
        for name, arr in m.param_items():
            np.testing.assert_array_equal(arr, before[name])

    def test_first_step_is_signed_lr(self):
        m = toy_model()
        cfg = TrainConfig(learning_rate=1e-3, grad_clip_norm=100.0)
        state = AdamState.for_model(m)
        grads = {name: np.full_like(arr, 0.37) for name, arr in m.param_items()}
        assert global_norm(grads) <= cfg.grad_clip_norm  # no clipping interference
        before = {name: arr.copy() for name, arr in m.param_items()}
        adam_step(m, grads, state, cfg)
        for name, arr in m.param_items():
            np.testing.assert_allclose(before[name] - arr, 1e-3, rtol=1e-6)

    def test_global_norm_clipping(self):
        m = toy_model()
        grads = {name: np.zeros_like(arr) for name, arr in m.param_items()}
        grads["head_w"][0, 0] = 30.0
        grads["head_b"][0] = 40.0  # global norm 50
        assert global_norm(grads) == pytest.approx(50.0)
        clip_gradients(grads, 5.0)
        assert grads["head_w"][0, 0] == pytest.approx(3.0)
        assert grads["head_b"][0] == pytest.approx(4.0)


def tiny_dataset(n=40, input_len=6, horizon=2, seed=1):
    rng = np.random.default_rng(seed)
    values = np.column_stack(
        [
            np.sin(np.arange(n + 8) / 3.0),
            np.cos(np.arange(n + 8) / 5.0),
            rng.uniform(0, 1, size=n + 8),
        ]
    )
    ts = make_ts(values, names=("tmin", "tmax", "prcp"))
    ds = make_windows(ts, input_len, horizon, "prcp")
    return chrono_split(ds, 0.8)


class TestTrain:
    CFG = TrainConfig(epochs=5, batch_size=8, seed=9)

    def test_deterministic_history(self):
        outcomes = []
        for _ in range(2):
            train_ds, val_ds = tiny_dataset()
            model = init_model(3, 8, 2, seed=4)
            best, history = train(model, train_ds, val_ds, self.CFG)
            outcomes.append((best, history))
        (best_a, hist_a), (best_b, hist_b) = outcomes
        assert [(h.train_mse, h.val_mse) for h in hist_a] == [
            (h.train_mse, h.val_mse) for h in hist_b
        ]
        for (name, pa), (_, pb) in zip(best_a.param_items(), best_b.param_items()):
            np.testing.assert_array_equal(pa, pb, err_msg=name)

    def test_history_length(self):
        train_ds, val_ds = tiny_dataset()
        _, history = train(init_model(3, 8, 2, seed=4), train_ds, val_ds, self.CFG)
        assert [h.epoch for h in history] == [1, 2, 3, 4, 5]

    def test_best_validation_snapshot(self):
        train_ds, val_ds = tiny_dataset()
        best, history = train(init_model(3, 8, 2, seed=4), train_ds, val_ds, self.CFG)
        best_val = min(h.val_mse for h in history)
        assert evaluate_mse(best, val_ds) == pytest.approx(best_val, rel=1e-12)

    def test_poisoned_params_abort_cleanly(self):
        train_ds, val_ds = tiny_dataset()
        model = init_model(3, 8, 2, seed=4)
        model.head_b[0] = np.nan
        best, history = train(model, train_ds, val_ds, self.CFG)
        assert history == []
        assert np.isnan(best.head_b[0])  # snapshot of the initial state

    def test_learns_noiseless_signal(self):
        # deterministic sinusoid: loss should collapse quickly
        n = 80
        t = np.arange(n, dtype=np.float64)
        values = np.column_stack(
            [np.sin(t / 4), np.cos(t / 4), 0.5 + 0.5 * np.sin(t / 4)]
        )
        ts = make_ts(values, names=("tmin", "tmax", "prcp"))
        ds = make_windows(ts, 8, 2, "prcp")
        train_ds, val_ds = chrono_split(ds, 0.8)
        cfg = TrainConfig(epochs=60, batch_size=16, seed=2)
        _, history = train(init_model(3, 12, 2, seed=7), train_ds, val_ds, cfg)
        assert history[-1].val_mse < 0.1 * history[0].val_mse


class TestPredict:
    def scaler(self, prcp_min=0.0, prcp_max=10.0):
        return Scaler(
            ("tmin", "tmax", "prcp"),
            np.array([-10.0, -10.0, prcp_min]),
            np.array([10.0, 10.0, prcp_max]),
            (dt.date(2020, 1, 1), dt.date(2020, 12, 31)),
        )

    def test_inverse_transform_applied(self):
        m = zero_model()
        m.head_b[:] = 0.5
        window = np.zeros((8, 3))
        values = predict(m, window, self.scaler(), "prcp")
        np.testing.assert_allclose(values, [5.0, 5.0])

    def test_precipitation_clamped(self):
        m = zero_model()
        m.head_b[:] = -0.2
        values = predict(m, np.zeros((8, 3)), self.scaler(), "prcp")
        np.testing.assert_array_equal(values, [0.0, 0.0])

    def test_temperature_not_clamped(self):
        m = zero_model()
        m.head_b[:] = -0.2
        values = predict(m, np.zeros((8, 3)), self.scaler(), "tmin")
        np.testing.assert_allclose(values, [-14.0, -14.0])


class TestCheckpoint:
    def make_inputs(self):
        scaler = Scaler(
            ("tmin", "tmax", "prcp"),
            np.array([0.0, 0.0, 0.0]),
            np.array([1.0, 2.0, 3.0]),
            (dt.date(2000, 1, 1), dt.date(2001, 1, 1)),
        )
        span = {"start": "2000-01-01", "end": "2001-01-01", "frequency": "daily"}
        return toy_model(), scaler, span

    def test_round_trip_bit_exact(self, tmp_path):
        model, scaler, span = self.make_inputs()
        state = AdamState.for_model(model)
        state.t = 7
        state.m["head_b"][0] = 0.123456789123456789
        path = tmp_path / "ckpt.json"
        save_checkpoint(
            model, state, TrainConfig(), path,
            scaler=scaler, feature_names=("tmin", "tmax", "prcp"),
            target_feature="prcp", data_span=span,
        )
        bundle = load_checkpoint(path)
        for (name, pa), (_, pb) in zip(model.param_items(), bundle.model.param_items()):
            np.testing.assert_array_equal(pa, pb, err_msg=name)
        assert bundle.adam.t == 7
        np.testing.assert_array_equal(bundle.adam.m["head_b"], state.m["head_b"])
        assert bundle.scaler.feature_names == scaler.feature_names
        np.testing.assert_array_equal(bundle.scaler.maxs, scaler.maxs)
        assert bundle.data_span == span
        assert bundle.target_feature == "prcp"

    def test_truncated_file_clean_error(self, tmp_path):
        model, scaler, span = self.make_inputs()
        path = tmp_path / "ckpt.json"
        save_checkpoint(model, None, TrainConfig(), path)
        path.write_text(path.read_text()[: len(path.read_text()) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "ckpt.json"
        path.write_text(json.dumps({"format_version": 999}))
        with pytest.raises(VersionMismatch):
            load_checkpoint(path)

    def test_dim_mismatch(self, tmp_path):
        model, _, _ = self.make_inputs()
        path = tmp_path / "ckpt.json"
        save_checkpoint(model, None, TrainConfig(), path)
        payload = json.loads(path.read_text())
        payload["dims"]["hidden"] = 16  # stored arrays are hidden=8
        path.write_text(json.dumps(payload))
        with pytest.raises(DimMismatch):
            load_checkpoint(path)
