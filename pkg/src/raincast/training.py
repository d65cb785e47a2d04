"""Expert-model training: Adam with gradient clipping, seeded shuffling,
and best-validation checkpoint selection."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .em_model import EmModel, NonFiniteLoss, forward, loss_and_grads
from .series import WindowedDataset

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip_norm: float = 5.0
    seed: int = 42

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        for name in ("batch_size", "learning_rate", "eps", "grad_clip_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the model parameters."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_model(cls, model: EmModel) -> "AdamState":
        return cls(m=model.zero_grads(), v=model.zero_grads(), t=0)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale grads in place so their global norm is at most max_norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_step(
    model: EmModel, grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig
) -> None:
    """One bias-corrected Adam update, applied in place after norm clipping."""
    clip_gradients(grads, cfg.grad_clip_norm)
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name, param in model.param_items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        param -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def evaluate_mse(model: EmModel, ds: WindowedDataset, batch_size: int = 256) -> float:
    """MSE over a dataset in scaled space, batched to bound memory."""
    if not len(ds):
        return float("nan")
    total = 0.0
    for lo in range(0, len(ds), batch_size):
        batch = slice(lo, lo + batch_size)
        preds = forward(model, ds.inputs[batch])
        total += float(np.sum((preds - ds.targets[batch]) ** 2))
    return total / (len(ds) * ds.targets.shape[1])


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float


def train(
    model: EmModel,
    train_ds: WindowedDataset,
    val_ds: WindowedDataset,
    cfg: TrainConfig,
) -> tuple[EmModel, list[EpochStats]]:
    """Train in place and return (best model, per-epoch history).

    Each epoch reshuffles with a generator seeded once from cfg.seed, so
    identical (data, config, seed) reproduce the history bit for bit. The
    returned model is the parameter snapshot with the lowest validation
    MSE (lowest training MSE when the validation set is empty). A
    non-finite loss aborts training, keeping the last finite snapshot.
    """
    if not len(train_ds):
        raise ValueError("training dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    n = len(train_ds)
    history: list[EpochStats] = []
    best_model = model.copy()
    best_score = float("inf")
    state = AdamState.for_model(model)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        sq_err_sum = 0.0
        try:
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                loss, grads = loss_and_grads(model, train_ds.inputs[idx], train_ds.targets[idx])
                sq_err_sum += loss * idx.size * train_ds.targets.shape[1]
                adam_step(model, grads, state, cfg)
        except NonFiniteLoss:
            log.warning("epoch %d: non-finite loss, aborting with best snapshot", epoch)
            break
        train_mse = sq_err_sum / (n * train_ds.targets.shape[1])
        val_mse = evaluate_mse(model, val_ds)
        history.append(EpochStats(epoch, train_mse, val_mse))
        score = val_mse if len(val_ds) else train_mse
        if np.isfinite(score) and score < best_score:
            best_score = score
            best_model = model.copy()
    return best_model, history


def history_to_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,train_mse,val_mse"]
    for row in history:
        lines.append(f"{row.epoch},{row.train_mse!r},{row.val_mse!r}")
    return "\n".join(lines) + "\n"
