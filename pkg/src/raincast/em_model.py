"""The climate expert model: a two-layer LSTM with a dense forecast head.

Everything is plain numpy with explicit backpropagation through time, so
gradients can be audited entry-by-entry against finite differences
(see grad_check). Batches are (B, T, F); the head maps the final hidden
state of layer 2 to all H horizon steps jointly.

Gate equations per layer and step (sigmoid gates, tanh squash):

    i = sig(x W_i' + h W_u_i' + b_i)      f = sig(x W_f' + h U_f' + b_f)
    g = tanh(x W_g' + h U_g' + b_g)       o = sig(x W_o' + h U_o' + b_o)
    c = f * c_prev + i * g                h = o * tanh(c)
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import RaincastError

GATES = ("i", "f", "g", "o")


class ModelError(RaincastError):
    pass


class ShapeMismatch(ModelError):
    def __init__(self, expected, got):
        super().__init__(f"expected shape {expected}, got {got}")


class NonFiniteLoss(ModelError):
    def __init__(self, detail: str = "forward pass produced non-finite values"):
        super().__init__(detail)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Two-sided form avoids overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmLayerParams:
    """Per-gate input weights (hidden, in), recurrent weights (hidden, hidden),
    and biases (hidden,)."""

    w_i: np.ndarray
    u_i: np.ndarray
    b_i: np.ndarray
    w_f: np.ndarray
    u_f: np.ndarray
    b_f: np.ndarray
    w_g: np.ndarray
    u_g: np.ndarray
    b_g: np.ndarray
    w_o: np.ndarray
    u_o: np.ndarray
    b_o: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w_i.shape[1]

    @property
    def hidden(self) -> int:
        return self.w_i.shape[0]

    def items(self) -> list[tuple[str, np.ndarray]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def copy(self) -> "LstmLayerParams":
        return LstmLayerParams(**{name: arr.copy() for name, arr in self.items()})


@dataclass
class EmModel:
    """Two stacked LSTM layers plus a dense head to H horizon steps."""

    layer1: LstmLayerParams
    layer2: LstmLayerParams
    head_w: np.ndarray  # (H, hidden)
    head_b: np.ndarray  # (H,)
    n_features: int
    hidden: int
    horizon: int

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        """Canonical (name, array) pairs; the order fixes optimizer state layout."""
        out = []
        for prefix, layer in (("layer1", self.layer1), ("layer2", self.layer2)):
            out.extend((f"{prefix}.{name}", arr) for name, arr in layer.items())
        out.append(("head_w", self.head_w))
        out.append(("head_b", self.head_b))
        return out

    def get_param(self, name: str) -> np.ndarray:
        if "." in name:
            layer, attr = name.split(".")
            return getattr(getattr(self, layer), attr)
        return getattr(self, name)

    def n_params(self) -> int:
        return sum(arr.size for _, arr in self.param_items())

    def copy(self) -> "EmModel":
        return EmModel(
            self.layer1.copy(),
            self.layer2.copy(),
            self.head_w.copy(),
            self.head_b.copy(),
            self.n_features,
            self.hidden,
            self.horizon,
        )

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.param_items()}


def _xavier(rng: np.random.Generator, rows: int, cols: int, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(rows, cols))


def _init_layer(rng: np.random.Generator, in_dim: int, hidden: int) -> LstmLayerParams:
    kwargs = {}
    for gate in GATES:
        kwargs[f"w_{gate}"] = _xavier(rng, hidden, in_dim, in_dim, hidden)
        kwargs[f"u_{gate}"] = _xavier(rng, hidden, hidden, hidden, hidden)
        # Forget bias of 1 keeps early memory open; other biases start at 0.
        kwargs[f"b_{gate}"] = np.ones(hidden) if gate == "f" else np.zeros(hidden)
    return LstmLayerParams(**kwargs)


def init_model(n_features: int, hidden: int, horizon: int, seed: int) -> EmModel:
    """Seeded Xavier-uniform initialization; same seed gives identical bits."""
    if n_features < 1 or horizon < 1 or hidden < 1:
        raise ValueError("n_features, hidden, and horizon must all be >= 1")
    rng = np.random.default_rng(seed)
    layer1 = _init_layer(rng, n_features, hidden)
    layer2 = _init_layer(rng, hidden, hidden)
    head_w = _xavier(rng, horizon, hidden, hidden, horizon)
    head_b = np.zeros(horizon)
    return EmModel(layer1, layer2, head_w, head_b, n_features, hidden, horizon)


def _layer_forward(p: LstmLayerParams, x_seq: np.ndarray, keep_cache: bool):
    """Run one LSTM layer over (B, T, in); zero initial hidden and cell state."""
    batch, steps, _ = x_seq.shape
    hidden = p.hidden
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    h_seq = np.empty((batch, steps, hidden))
    cache = None
    if keep_cache:
        cache = {
            "x": x_seq,
            "h_prev": np.empty((batch, steps, hidden)),
            "c_prev": np.empty((batch, steps, hidden)),
            "i": np.empty((batch, steps, hidden)),
            "f": np.empty((batch, steps, hidden)),
            "g": np.empty((batch, steps, hidden)),
            "o": np.empty((batch, steps, hidden)),
            "tanh_c": np.empty((batch, steps, hidden)),
        }
    for t in range(steps):
        x = x_seq[:, t]
        i = sigmoid(x @ p.w_i.T + h @ p.u_i.T + p.b_i)
        f = sigmoid(x @ p.w_f.T + h @ p.u_f.T + p.b_f)
        g = np.tanh(x @ p.w_g.T + h @ p.u_g.T + p.b_g)
        o = sigmoid(x @ p.w_o.T + h @ p.u_o.T + p.b_o)
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        if keep_cache:
            cache["h_prev"][:, t] = h
            cache["c_prev"][:, t] = c
            cache["i"][:, t] = i
            cache["f"][:, t] = f
            cache["g"][:, t] = g
            cache["o"][:, t] = o
            cache["tanh_c"][:, t] = tanh_c
        h, c = h_new, c_new
        h_seq[:, t] = h
    return h_seq, c, cache


def forward(m: EmModel, inputs: np.ndarray, keep_cache: bool = False):
    """Batched forward pass: (B, T, F) -> (B, H) predictions in scaled space.

    With keep_cache=True also returns the activations needed for backward.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape[2] != m.n_features:
        raise ShapeMismatch((None, None, m.n_features), inputs.shape)
    h1_seq, _, cache1 = _layer_forward(m.layer1, inputs, keep_cache)
    h2_seq, c2, cache2 = _layer_forward(m.layer2, h1_seq, keep_cache)
    h_last = h2_seq[:, -1]
    preds = h_last @ m.head_w.T + m.head_b
    if not keep_cache:
        return preds
    return preds, {"layer1": cache1, "layer2": cache2, "h_last": h_last, "c2_last": c2}


def _layer_backward(p: LstmLayerParams, cache: dict, dh_seq: np.ndarray):
    """BPTT through one layer.

    dh_seq holds the gradient flowing into each step's output h_t from
    above (the next layer, or the head at the final step). Returns the
    gradient w.r.t. the layer's input sequence plus parameter gradients.
    """
    batch, steps, hidden = dh_seq.shape
    in_dim = p.in_dim
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    dx_seq = np.empty((batch, steps, in_dim))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        i = cache["i"][:, t]
        f = cache["f"][:, t]
        g = cache["g"][:, t]
        o = cache["o"][:, t]
        tanh_c = cache["tanh_c"][:, t]
        c_prev = cache["c_prev"][:, t]
        h_prev = cache["h_prev"][:, t]
        x = cache["x"][:, t]

        dh = dh_seq[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tanh_c**2)
        da_o = dh * tanh_c * o * (1.0 - o)
        da_f = dc * c_prev * f * (1.0 - f)
        da_i = dc * g * i * (1.0 - i)
        da_g = dc * i * (1.0 - g**2)

        grads["w_i"] += da_i.T @ x
        grads["u_i"] += da_i.T @ h_prev
        grads["b_i"] += da_i.sum(axis=0)
        grads["w_f"] += da_f.T @ x
        grads["u_f"] += da_f.T @ h_prev
        grads["b_f"] += da_f.sum(axis=0)
        grads["w_g"] += da_g.T @ x
        grads["u_g"] += da_g.T @ h_prev
        grads["b_g"] += da_g.sum(axis=0)
        grads["w_o"] += da_o.T @ x
        grads["u_o"] += da_o.T @ h_prev
        grads["b_o"] += da_o.sum(axis=0)

        dx_seq[:, t] = da_i @ p.w_i + da_f @ p.w_f + da_g @ p.w_g + da_o @ p.w_o
        dh_next = da_i @ p.u_i + da_f @ p.u_f + da_g @ p.u_g + da_o @ p.u_o
        dc_next = dc * f
    return dx_seq, grads


def mse_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean((preds - targets) ** 2))


def loss_and_grads(
    m: EmModel, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over B x H plus gradients by full BPTT."""
    targets = np.asarray(targets, dtype=np.float64)
    preds, cache = forward(m, inputs, keep_cache=True)
    if preds.shape != targets.shape:
        raise ShapeMismatch(targets.shape, preds.shape)
    if not (np.isfinite(preds).all() and np.isfinite(cache["c2_last"]).all()):
        raise NonFiniteLoss()
    diff = preds - targets
    loss = float(np.mean(diff**2))

    dpred = 2.0 * diff / diff.size
    grads = {
        "head_w": dpred.T @ cache["h_last"],
        "head_b": dpred.sum(axis=0),
    }
    dh2_seq = np.zeros_like(cache["layer2"]["i"])
    dh2_seq[:, -1] = dpred @ m.head_w
    dh1_seq, g2 = _layer_backward(m.layer2, cache["layer2"], dh2_seq)
    _, g1 = _layer_backward(m.layer1, cache["layer1"], dh1_seq)
    grads.update({f"layer2.{k}": v for k, v in g2.items()})
    grads.update({f"layer1.{k}": v for k, v in g1.items()})
    return loss, grads


def predict(m: EmModel, window: np.ndarray, scaler, target_feature: str) -> np.ndarray:
    """Forecast H physical-unit values from one scaled window (T, F).

    The head output is inverse-transformed for the target feature;
    precipitation is clamped at zero, temperatures are not.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[1] != m.n_features:
        raise ShapeMismatch((None, m.n_features), window.shape)
    if np.isnan(window).any():
        raise ModelError("prediction window contains masked values")
    scaled = forward(m, window[np.newaxis])[0]
    physical = scaler.inverse_transform_feature(target_feature, scaled)
    if target_feature == "prcp":
        physical = np.maximum(physical, 0.0)
    return physical


def finite_difference_grads(
    m: EmModel, inputs: np.ndarray, targets: np.ndarray, eps: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central-difference gradient of the MSE loss for every parameter entry.

    Only practical for toy-sized models; the gradient check relies on it.
    """
    targets = np.asarray(targets, dtype=np.float64)
    grads = {}
    for name, arr in m.param_items():
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        num_flat = num.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + eps
            hi = mse_loss(forward(m, inputs), targets)
            flat[k] = original - eps
            lo = mse_loss(forward(m, inputs), targets)
            flat[k] = original
            num_flat[k] = (hi - lo) / (2.0 * eps)
        grads[name] = num
    return grads


def relative_errors(
    analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]
) -> dict[str, float]:
    """Per-parameter max of |a - n| / max(|a|, |n|, 1e-8)."""
    out = {}
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        out[name] = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    return out


def grad_check(m: EmModel, inputs: np.ndarray, targets: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between analytic BPTT and central differences."""
    _, analytic = loss_and_grads(m, inputs, targets)
    numeric = finite_difference_grads(m, inputs, targets, eps)
    errors = relative_errors(analytic, numeric)
    return max(errors.values())
