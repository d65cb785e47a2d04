"""Versioned JSON checkpoints for expert models.

Arrays are stored as flat row-major lists with declared shapes. JSON
float serialization uses Python's shortest round-trip repr, so a
save/load cycle reproduces every parameter bit for bit.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .em_model import EmModel, LstmLayerParams
from .errors import RaincastError
from .series import Scaler
from .training import AdamState, TrainConfig

CHECKPOINT_VERSION = 1


class CheckpointError(RaincastError):
    pass


class VersionMismatch(CheckpointError):
    def __init__(self, found):
        super().__init__(f"unsupported checkpoint version {found!r}")


class DimMismatch(CheckpointError):
    def __init__(self, name: str, expected, got):
        super().__init__(f"{name}: expected shape {expected}, stored {got}")


@dataclass
class CheckpointBundle:
    model: EmModel
    adam: AdamState | None
    config: TrainConfig
    scaler: Scaler | None
    feature_names: tuple[str, ...]
    target_feature: str
    data_span: dict | None  # {"start", "end", "frequency"}
    meta: dict


def _encode_array(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": [float(v) for v in arr.reshape(-1)]}


def _decode_array(name: str, payload: dict, expected_shape: tuple[int, ...]) -> np.ndarray:
    shape = tuple(payload["shape"])
    if shape != expected_shape:
        raise DimMismatch(name, expected_shape, shape)
    data = np.array(payload["data"], dtype=np.float64)
    if data.size != int(np.prod(shape)):
        raise DimMismatch(name, expected_shape, (data.size,))
    return data.reshape(shape)


def _expected_shapes(n_features: int, hidden: int, horizon: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for prefix, in_dim in (("layer1", n_features), ("layer2", hidden)):
        for gate in "ifgo":
            shapes[f"{prefix}.w_{gate}"] = (hidden, in_dim)
            shapes[f"{prefix}.u_{gate}"] = (hidden, hidden)
            shapes[f"{prefix}.b_{gate}"] = (hidden,)
    shapes["head_w"] = (horizon, hidden)
    shapes["head_b"] = (horizon,)
    return shapes


def save_checkpoint(
    model: EmModel,
    adam: AdamState | None,
    config: TrainConfig,
    path,
    *,
    scaler: Scaler | None = None,
    feature_names: tuple[str, ...] = (),
    target_feature: str = "",
    data_span: dict | None = None,
    meta: dict | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "created_at": dt.datetime.now(dt.timezone.utc).isoformat(),
        "dims": {
            "n_features": model.n_features,
            "hidden": model.hidden,
            "horizon": model.horizon,
        },
        "feature_names": list(feature_names),
        "target_feature": target_feature,
        "params": {name: _encode_array(arr) for name, arr in model.param_items()},
        "adam": None
        if adam is None
        else {
            "t": adam.t,
            "m": {name: _encode_array(arr) for name, arr in adam.m.items()},
            "v": {name: _encode_array(arr) for name, arr in adam.v.items()},
        },
        "train_config": config.to_dict(),
        "scaler": scaler.to_dict() if scaler is not None else None,
        "data_span": data_span,
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_checkpoint(path) -> CheckpointBundle:
    try:
        payload = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_VERSION:
        raise VersionMismatch(payload.get("format_version") if isinstance(payload, dict) else None)

    dims = payload["dims"]
    n_features, hidden, horizon = dims["n_features"], dims["hidden"], dims["horizon"]
    shapes = _expected_shapes(n_features, hidden, horizon)
    params = payload["params"]
    missing = set(shapes) - set(params)
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)}")

    def layer(prefix: str) -> LstmLayerParams:
        kwargs = {}
        for gate in "ifgo":
            for kind in ("w", "u", "b"):
                name = f"{prefix}.{kind}_{gate}"
                kwargs[f"{kind}_{gate}"] = _decode_array(name, params[name], shapes[name])
        return LstmLayerParams(**kwargs)

    model = EmModel(
        layer("layer1"),
        layer("layer2"),
        _decode_array("head_w", params["head_w"], shapes["head_w"]),
        _decode_array("head_b", params["head_b"], shapes["head_b"]),
        n_features,
        hidden,
        horizon,
    )

    adam = None
    if payload.get("adam") is not None:
        raw = payload["adam"]
        adam = AdamState(
            m={name: _decode_array(f"adam.m.{name}", raw["m"][name], shapes[name]) for name in shapes},
            v={name: _decode_array(f"adam.v.{name}", raw["v"][name], shapes[name]) for name in shapes},
            t=int(raw["t"]),
        )

    scaler = Scaler.from_dict(payload["scaler"]) if payload.get("scaler") else None
    return CheckpointBundle(
        model=model,
        adam=adam,
        config=TrainConfig.from_dict(payload["train_config"]),
        scaler=scaler,
        feature_names=tuple(payload.get("feature_names", ())),
        target_feature=payload.get("target_feature", ""),
        data_span=payload.get("data_span"),
        meta=payload.get("meta", {}),
    )
