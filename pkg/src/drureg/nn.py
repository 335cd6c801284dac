"""Minimal dense feed-forward networks with reverse-mode gradients and Adam.

Two small networks are trained jointly: a predictor producing z = h(x) and an
optional auxiliary network producing the non-negative threshold a = alpha(x)
that the robust losses need. Everything is plain numpy and deterministic
given seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ParameterError, ShapeError
from .losses import LossSpec, MetaInfo, loss_gradients, loss_value

_ACTIVATIONS = ("relu", "identity", "softplus")


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.input_width < 1 or self.output_width < 1:
            raise ParameterError("layer widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")


@dataclass
class MLP:
    """Dense network: per-layer weight matrices (in, out) and bias vectors."""

    layers: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0

    def __post_init__(self) -> None:
        for k in range(len(self.layers) - 1):
            if self.layers[k].output_width != self.layers[k + 1].input_width:
                raise ShapeError(f"layer {k} output width does not chain into layer {k + 1}")
        for k, spec in enumerate(self.layers):
            if self.weights[k].shape != (spec.input_width, spec.output_width):
                raise ShapeError(f"weight matrix {k} has shape {self.weights[k].shape}")
            if self.biases[k].shape != (spec.output_width,):
                raise ShapeError(f"bias vector {k} has shape {self.biases[k].shape}")
            if not np.isfinite(self.weights[k]).all() or not np.isfinite(self.biases[k]).all():
                raise NumericError(f"non-finite parameters in layer {k}")

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    def copy(self) -> "MLP":
        return MLP(self.layers, [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.seed)

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"input_width": s.input_width, "output_width": s.output_width,
                 "activation": s.activation}
                for s in self.layers
            ],
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MLP":
        layers = tuple(LayerSpec(**entry) for entry in payload["layers"])
        weights = [np.array(w, dtype=float) for w in payload["weights"]]
        biases = [np.array(b, dtype=float) for b in payload["biases"]]
        return cls(layers, weights, biases, int(payload.get("seed", 0)))


def mlp_architecture(input_width: int, hidden_width: int = 4,
                     output_activation: str = "identity") -> tuple[LayerSpec, ...]:
    """Default three-layer stack: input -> hidden -> hidden -> 1."""
    return (
        LayerSpec(input_width, hidden_width, "relu"),
        LayerSpec(hidden_width, hidden_width, "relu"),
        LayerSpec(hidden_width, 1, output_activation),
    )


def init_mlp(layers: tuple[LayerSpec, ...], seed: int) -> MLP:
    """Seeded uniform init on +-sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in layers:
        limit = np.sqrt(6.0 / (spec.input_width + spec.output_width))
        weights.append(rng.uniform(-limit, limit, size=(spec.input_width, spec.output_width)))
        biases.append(np.zeros(spec.output_width))
    return MLP(layers, weights, biases, seed)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "softplus":
        return np.logaddexp(0.0, z)
    return z


def _activate_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "softplus":
        return 1.0 / (1.0 + np.exp(-z))
    return np.ones_like(z)


def _forward_cached(net: MLP, X: np.ndarray):
    """Forward pass over a batch, keeping per-layer inputs and pre-activations."""
    a = X
    inputs, preacts = [], []
    for k, spec in enumerate(net.layers):
        inputs.append(a)
        z = a @ net.weights[k] + net.biases[k]
        preacts.append(z)
        a = _activate(spec.activation, z)
    return a, inputs, preacts


def forward(net: MLP, x) -> float:
    """Evaluate the network on one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != net.input_width:
        raise ShapeError(f"expected input of width {net.input_width}, got shape {x.shape}")
    out = forward_batch(net, x[None, :])
    return float(out[0])


def forward_batch(net: MLP, X: np.ndarray) -> np.ndarray:
    """Evaluate the network on an (n, input_width) matrix; returns (n,)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_width:
        raise ShapeError(f"expected (n, {net.input_width}) features, got shape {X.shape}")
    out, _, preacts = _forward_cached(net, X)
    for k, z in enumerate(preacts):
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite activation in layer {k}")
    return out[:, 0]


def _backprop(net: MLP, inputs, preacts, dloss_dout: np.ndarray):
    delta = dloss_dout[:, None]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        z = preacts[k]
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite pre-activation in layer {k}")
        delta = delta * _activate_grad(net.layers[k].activation, z)
        grads[k] = (inputs[k].T @ delta, delta.sum(axis=0))
        if k > 0:
            delta = delta @ net.weights[k].T
    return grads


def backward(net: MLP, X: np.ndarray, dloss_dout: np.ndarray):
    """Parameter gradients of sum_i dloss_dout[i] * net(x_i).

    Returns [(dW_0, db_0), ...] matching the layer order; chain-rule through
    the cached forward pass. relu contributes zero gradient at its kink.
    """
    X = np.asarray(X, dtype=float)
    dloss_dout = np.asarray(dloss_dout, dtype=float)
    if not np.isfinite(dloss_dout).all():
        raise NumericError("non-finite loss gradient")
    _, inputs, preacts = _forward_cached(net, X)
    return _backprop(net, inputs, preacts, dloss_dout)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 20
    patience: int = 3
    batch_size: int = 12
    learning_rate: float = 0.01
    validation_fraction: float = 0.1
    improvement_tolerance: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 0 or self.patience < 0 or self.batch_size < 1:
            raise ConfigError("max_epochs/patience must be >= 0 and batch_size >= 1")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ConfigError("validation_fraction must be in (0, 1)")
        if self.learning_rate <= 0.0 or self.improvement_tolerance <= 0.0:
            raise ConfigError("learning_rate and improvement_tolerance must be positive")


@dataclass
class TrainReport:
    epochs_run: int
    train_loss_trace: list[float]
    val_loss_trace: list[float]
    stopped_early: bool

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "train_loss_trace": self.train_loss_trace,
            "val_loss_trace": self.val_loss_trace,
            "stopped_early": self.stopped_early,
        }


@dataclass
class TrainedModel:
    """Immutable snapshot of the trained network pair and its loss."""

    h: MLP
    alpha: MLP | None
    loss: LossSpec

    def predict(self, X: np.ndarray) -> np.ndarray:
        return forward_batch(self.h, X)

    def predict_alpha(self, X: np.ndarray) -> np.ndarray:
        if self.alpha is None:
            return np.zeros(np.asarray(X).shape[0])
        return forward_batch(self.alpha, X)

    def to_json(self) -> str:
        payload = {
            "format_version": 1,
            "loss": _loss_spec_to_dict(self.loss),
            "h": self.h.to_dict(),
            "alpha": self.alpha.to_dict() if self.alpha is not None else None,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        payload = json.loads(text)
        if payload.get("format_version") != 1:
            raise ConfigError(f"unsupported model format {payload.get('format_version')!r}")
        alpha = payload["alpha"]
        return cls(
            h=MLP.from_dict(payload["h"]),
            alpha=MLP.from_dict(alpha) if alpha is not None else None,
            loss=_loss_spec_from_dict(payload["loss"]),
        )


def _loss_spec_to_dict(spec: LossSpec) -> dict:
    out = {"kind": spec.kind}
    if spec.meta is not None:
        out["gamma"] = spec.meta.gamma
        out["direction"] = spec.meta.direction
    if spec.pinball_p is not None:
        out["pinball_p"] = spec.pinball_p
    return out


def _loss_spec_from_dict(payload: dict) -> LossSpec:
    meta = None
    if "gamma" in payload:
        meta = MetaInfo(gamma=float(payload["gamma"]), direction=int(payload["direction"]))
    return LossSpec(kind=payload["kind"], meta=meta, pinball_p=payload.get("pinball_p"))


class _Adam:
    """Per-parameter Adam state for one network."""

    def __init__(self, net: MLP, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        self.t = 0

    def step(self, net: MLP, grads) -> None:
        cfg = self.cfg
        self.t += 1
        corr1 = 1.0 - cfg.adam_beta1 ** self.t
        corr2 = 1.0 - cfg.adam_beta2 ** self.t
        for k, (dw, db) in enumerate(grads):
            mw, mb = self.m[k]
            vw, vb = self.v[k]
            mw *= cfg.adam_beta1
            mw += (1.0 - cfg.adam_beta1) * dw
            mb *= cfg.adam_beta1
            mb += (1.0 - cfg.adam_beta1) * db
            vw *= cfg.adam_beta2
            vw += (1.0 - cfg.adam_beta2) * dw * dw
            vb *= cfg.adam_beta2
            vb += (1.0 - cfg.adam_beta2) * db * db
            net.weights[k] -= cfg.learning_rate * (mw / corr1) / (np.sqrt(vw / corr2) + cfg.adam_epsilon)
            net.biases[k] -= cfg.learning_rate * (mb / corr1) / (np.sqrt(vb / corr2) + cfg.adam_epsilon)


def train(h: MLP, alpha: MLP | None, features: np.ndarray, targets: np.ndarray,
          loss: LossSpec, cfg: TrainConfig) -> tuple[TrainedModel, TrainReport]:
    """Joint mini-batch Adam training of h (and alpha when the loss needs it).

    The data are split 1 - validation_fraction / validation_fraction with a
    seeded shuffle. Training stops at max_epochs, or early once the
    validation loss has failed to improve on its best by more than
    improvement_tolerance for `patience` consecutive epochs; the returned
    weights are those of the best-validation epoch.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or features.shape[0] != targets.shape[0]:
        raise ShapeError("features must be (n, d) aligned with targets (n,)")
    if features.shape[0] == 0:
        raise ConfigError("training data is empty")
    if loss.needs_alpha and alpha is None:
        raise ConfigError(f"loss kind {loss.kind!r} requires an alpha network")
    if not loss.needs_alpha and alpha is not None:
        raise ConfigError(f"loss kind {loss.kind!r} does not take an alpha network")

    n = features.shape[0]
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    n_val = int(round(n * cfg.validation_fraction))
    n_val = min(max(n_val, 1), n - 1) if n > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        raise ConfigError("training split is empty")
    if cfg.batch_size > train_idx.size:
        raise ConfigError(
            f"batch_size {cfg.batch_size} exceeds training-set size {train_idx.size}")
    X_train, y_train = features[train_idx], targets[train_idx]
    X_val, y_val = features[val_idx], targets[val_idx]

    h = h.copy()
    alpha = alpha.copy() if alpha is not None else None
    opt_h = _Adam(h, cfg)
    opt_a = _Adam(alpha, cfg) if alpha is not None else None

    def val_loss() -> float:
        if X_val.shape[0] == 0:
            return float("nan")
        z = forward_batch(h, X_val)
        a = forward_batch(alpha, X_val) if alpha is not None else np.zeros_like(z)
        return float(np.mean(loss_value(loss, z, a, y_val)))

    best_val = np.inf
    best_h, best_alpha = h.copy(), alpha.copy() if alpha is not None else None
    flat_epochs = 0
    stopped_early = False
    train_trace: list[float] = []
    val_trace: list[float] = []

    for _ in range(cfg.max_epochs):
        perm = rng.permutation(train_idx.size)
        epoch_loss = 0.0
        for start in range(0, perm.size, cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            Xb, yb = X_train[batch], y_train[batch]
            out_h, in_h, pre_h = _forward_cached(h, Xb)
            z = out_h[:, 0]
            if alpha is not None:
                out_a, in_a, pre_a = _forward_cached(alpha, Xb)
                a = out_a[:, 0]
            else:
                a = np.zeros_like(z)
            epoch_loss += float(np.sum(loss_value(loss, z, a, yb)))
            dz, da = loss_gradients(loss, z, a, yb)
            scale = 1.0 / batch.size
            opt_h.step(h, _backprop(h, in_h, pre_h, dz * scale))
            if alpha is not None:
                opt_a.step(alpha, _backprop(alpha, in_a, pre_a, da * scale))
        train_trace.append(epoch_loss / perm.size)
        current = val_loss()
        val_trace.append(current)
        if current < best_val:
            best_h = h.copy()
            best_alpha = alpha.copy() if alpha is not None else None
        if current < best_val - cfg.improvement_tolerance:
            flat_epochs = 0
        else:
            flat_epochs += 1
        best_val = min(best_val, current)
        if flat_epochs >= cfg.patience:
            stopped_early = True
            break

    report = TrainReport(
        epochs_run=len(train_trace),
        train_loss_trace=train_trace,
        val_loss_trace=val_trace,
        stopped_early=stopped_early,
    )
    return TrainedModel(h=best_h, alpha=best_alpha, loss=loss), report


def one_hot_encode(levels: np.ndarray, level_counts) -> np.ndarray:
    """One-hot encode a matrix of categorical level indices, column blocks in order."""
    levels = np.asarray(levels)
    level_counts = tuple(int(c) for c in level_counts)
    if levels.ndim != 2 or levels.shape[1] != len(level_counts):
        raise ShapeError(f"expected (n, {len(level_counts)}) level indices, got {levels.shape}")
    n = levels.shape[0]
    out = np.zeros((n, sum(level_counts)))
    offset = 0
    rows = np.arange(n)
    for j, count in enumerate(level_counts):
        col = levels[:, j]
        if (col < 0).any() or (col >= count).any():
            raise ShapeError(f"covariate column {j} has levels outside [0, {count})")
        out[rows, offset + col] = 1.0
        offset += count
    return out
