"""Dense feed-forward networks trained with Adamax on mean-squared error."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateColumnError, EmptyDatasetError, InvalidArgumentError, ModelFormatError

RELU = "relu"
SIGMOID = "sigmoid"
HE_NORMAL = "he_normal"
GLOROT_NORMAL = "glorot_normal"

MODEL_FORMAT = "benns-mlp"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Normalizer:
    """Column-wise min-max scaling to [0, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def invert(self, z):
        return np.asarray(z, dtype=float) * (self.hi - self.lo) + self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["lo"], dtype=float), np.array(d["hi"], dtype=float))


def fit_normalizer(samples) -> Normalizer:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DegenerateColumnError("need at least two samples to fit a normalizer")
    lo, hi = x.min(axis=0), x.max(axis=0)
    if (hi <= lo).any():
        raise DegenerateColumnError(f"constant column(s) at {np.flatnonzero(hi <= lo).tolist()}")
    return Normalizer(lo, hi)


@dataclass
class MlpModel:
    """Weights are stored as (fan_in, fan_out) matrices; rows of inputs are samples."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = RELU
    init_scheme: str = HE_NORMAL
    x_norm: Normalizer | None = None
    y_norm: Normalizer | None = None

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MlpModel":
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def with_params(self, params: Sequence[np.ndarray]) -> "MlpModel":
        return replace(self, weights=list(params[0::2]), biases=list(params[1::2]))

    def predict(self, x_raw):
        """Forward pass on raw (unnormalized) inputs, returning raw-scale targets."""
        if self.x_norm is None or self.y_norm is None:
            raise InvalidArgumentError("model has no normalization statistics")
        z = forward(self, self.x_norm.apply(x_raw))
        return self.y_norm.invert(z)


def init_mlp(
    layer_sizes: Sequence[int],
    hidden_activation: str = RELU,
    init_scheme: str = HE_NORMAL,
    seed: int = 0,
) -> MlpModel:
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise InvalidArgumentError(f"need >= 2 layers of size >= 1, got {sizes}")
    if hidden_activation not in (RELU, SIGMOID):
        raise InvalidArgumentError(f"unknown activation {hidden_activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if init_scheme == HE_NORMAL:
            std = np.sqrt(2.0 / fan_in)
        elif init_scheme == GLOROT_NORMAL:
            std = np.sqrt(2.0 / (fan_in + fan_out))
        else:
            raise InvalidArgumentError(f"unknown init scheme {init_scheme!r}")
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, hidden_activation, init_scheme)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == RELU:
        return np.maximum(z, 0.0)
    # numerically safe logistic, 0.5 * (1 + tanh(z / 2)), computed in place
    out = np.multiply(z, 0.5)
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == RELU:
        return (z > 0).astype(float)
    return a * (1.0 - a)


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.layer_sizes[0]:
        raise InvalidArgumentError(
            f"input has {x.shape[-1]} features, model expects {model.layer_sizes[0]}"
        )
    return x, single


def forward(model: MlpModel, x) -> np.ndarray:
    a, single = _as_batch(model, x)
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = z if i == last else _act(model.hidden_activation, z)
    return a[0] if single else a


def _loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    zs, acts = [], [x]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        zs.append(z)
        acts.append(z if i == last else _act(model.hidden_activation, z))

    resid = acts[-1] - y
    n = resid.size
    loss = float(np.sum(resid * resid) / n)
    delta = 2.0 * resid / n
    grads: list[np.ndarray] = [None] * (2 * len(model.weights))  # type: ignore[list-item]
    for i in range(last, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * _act_grad(model.hidden_activation, zs[i - 1], acts[i])
    return loss, grads


def _as_targets(model: MlpModel, y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(n, -1)
    if y.shape != (n, model.layer_sizes[-1]):
        raise InvalidArgumentError(f"targets shape {y.shape} != ({n}, {model.layer_sizes[-1]})")
    return y


def mse(model: MlpModel, x, y) -> float:
    xb, _ = _as_batch(model, x)
    resid = forward(model, xb) - _as_targets(model, y, xb.shape[0])
    return float(np.mean(resid * resid))


def backward(model: MlpModel, x, y) -> list[np.ndarray]:
    """Exact MSE gradients, ordered like ``model.params`` (W0, b0, W1, b1, ...)."""
    xb, _ = _as_batch(model, x)
    if xb.shape[0] == 0:
        raise EmptyDatasetError("empty batch")
    return _loss_and_grads(model, xb, _as_targets(model, y, xb.shape[0]))[1]


@dataclass
class AdamaxState:
    m: list[np.ndarray]
    u: list[np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, model: MlpModel) -> "AdamaxState":
        return cls([np.zeros_like(p) for p in model.params], [np.zeros_like(p) for p in model.params])

    def copy(self) -> "AdamaxState":
        return AdamaxState([m.copy() for m in self.m], [u.copy() for u in self.u], self.t)


def _adamax_inplace(params, grads, state: AdamaxState, lr, beta1, beta2, eps) -> None:
    state.t += 1
    step = lr / (1.0 - beta1**state.t)
    for p, g, m, u in zip(params, grads, state.m, state.u):
        m *= beta1
        m += (1.0 - beta1) * g
        np.maximum(beta2 * u, np.abs(g), out=u)
        p -= step * m / (u + eps)


def adamax_step(
    model: MlpModel,
    grads: Sequence[np.ndarray],
    state: AdamaxState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[MlpModel, AdamaxState]:
    """One Adamax update; inputs are left untouched."""
    if len(grads) != len(state.m) or any(g.shape != m.shape for g, m in zip(grads, state.m)):
        raise InvalidArgumentError("gradient/state shapes do not match")
    new_model = model.copy()
    new_state = state.copy()
    _adamax_inplace(new_model.params, grads, new_state, learning_rate, beta1, beta2, eps)
    return new_model, new_state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int | None = 32  # None = full batch
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    keep_best_val: bool = True  # return the weights of the lowest validation loss epoch

    def __post_init__(self):
        if self.epochs < 1 or self.learning_rate <= 0:
            raise InvalidArgumentError("epochs must be >= 1 and learning rate > 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidArgumentError("batch size must be >= 1")


@dataclass
class TrainHistory:
    """Losses indexed by epoch; entry 0 is measured before the first update."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def train(
    model: MlpModel,
    x,
    y,
    x_val=None,
    y_val=None,
    config: TrainConfig = TrainConfig(),
) -> tuple[MlpModel, TrainHistory]:
    """Shuffled mini-batch Adamax on already-normalized data."""
    x, _ = _as_batch(model, x)
    if x.shape[0] == 0:
        raise EmptyDatasetError("empty training set")
    y = _as_targets(model, y, x.shape[0])
    has_val = x_val is not None and len(x_val) > 0
    if has_val:
        x_val, _ = _as_batch(model, x_val)
        y_val = _as_targets(model, y_val, x_val.shape[0])

    model = model.copy()
    params = model.params
    state = AdamaxState.fresh(model)
    rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    bs = n if config.batch_size is None else min(config.batch_size, n)

    history = TrainHistory([mse(model, x, y)], [mse(model, x_val, y_val)] if has_val else [])
    best = None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, grads = _loss_and_grads(model, x[idx], y[idx])
            total += loss * idx.size
            _adamax_inplace(params, grads, state, config.learning_rate, config.beta1, config.beta2, config.eps)
        history.train_loss.append(total / n)
        if has_val:
            history.val_loss.append(mse(model, x_val, y_val))
            if config.keep_best_val and (best is None or history.val_loss[-1] < history.val_loss[history.best_epoch]):
                best = [p.copy() for p in params]
                history.best_epoch = epoch
    if best is not None:
        for p, b in zip(params, best):
            p[...] = b
    return model, history


def save_model(model: MlpModel, path: str | Path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "hidden_activation": model.hidden_activation,
        "output_activation": "linear",
        "init_scheme": model.init_scheme,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "x_norm": model.x_norm.to_dict() if model.x_norm else None,
        "y_norm": model.y_norm.to_dict() if model.y_norm else None,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path: str | Path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a model file ({exc})") from None
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"{path}: expected {MODEL_FORMAT} v{MODEL_VERSION}, "
            f"found {doc.get('format')} v{doc.get('version')}"
        )
    sizes = tuple(doc["layer_sizes"])
    weights = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(doc["weights"], sizes[:-1], sizes[1:])]
    biases = [np.array(b, dtype=float) for b in doc["biases"]]
    return MlpModel(
        sizes,
        weights,
        biases,
        doc["hidden_activation"],
        doc["init_scheme"],
        Normalizer.from_dict(doc["x_norm"]) if doc["x_norm"] else None,
        Normalizer.from_dict(doc["y_norm"]) if doc["y_norm"] else None,
    )
