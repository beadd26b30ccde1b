"""Fully connected regression network trained by mini-batch SGD with momentum."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteLoss, TooFewSamples
from .scaler import Scaler, fit_scaler

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpConfig:
    hidden_layers: tuple[int, ...] = (12, 32)
    activations: tuple[str, ...] | str = "relu"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        self.hidden_layers = tuple(int(w) for w in self.hidden_layers)
        if any(w < 1 for w in self.hidden_layers):
            raise ValueError("hidden layer widths must be >= 1")
        if isinstance(self.activations, str):
            self.activations = (self.activations,) * len(self.hidden_layers)
        self.activations = tuple(self.activations)
        if len(self.activations) != len(self.hidden_layers):
            raise ValueError("one activation per hidden layer is required")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("learning_rate > 0, epochs >= 0 and batch_size >= 1 are required")


def init_params(n_in: int, config: MlpConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """He (ReLU) or Glorot-style (tanh) normal weights, zero biases: ``[W1, b1, W2, b2, ...]``."""
    widths = (n_in,) + config.hidden_layers + (1,)
    acts = config.activations + ("linear",)
    params = []
    for fan_in, fan_out, act in zip(widths[:-1], widths[1:], acts):
        gain = 2.0 if act == "relu" else 1.0
        params.append(rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def _act(z, name):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(z, a, name):
    return (z > 0).astype(z.dtype) if name == "relu" else 1.0 - a * a


def forward(params: list[np.ndarray], X: np.ndarray, activations) -> np.ndarray:
    h = X
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = h @ params[2 * k] + params[2 * k + 1]
        h = _act(z, activations[k]) if k < n_layers - 1 else z
    return h[:, 0]


def loss_and_grad(params: list[np.ndarray], X: np.ndarray, y: np.ndarray,
                  activations) -> tuple[float, list[np.ndarray]]:
    """Mean squared error of the network on ``(X, y)`` and its gradient w.r.t. every parameter."""
    n_layers = len(params) // 2
    hs = [X]
    zs = []
    h = X
    for k in range(n_layers):
        z = h @ params[2 * k] + params[2 * k + 1]
        zs.append(z)
        h = _act(z, activations[k]) if k < n_layers - 1 else z
        hs.append(h)
    r = h[:, 0] - y
    loss = float(np.mean(r * r))
    grads: list[np.ndarray] = [None] * len(params)  # type: ignore[list-item]
    delta = (2.0 / len(y)) * r[:, None]
    for k in range(n_layers - 1, -1, -1):
        grads[2 * k] = hs[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = (delta @ params[2 * k].T) * _act_grad(zs[k - 1], hs[k], activations[k - 1])
    return loss, grads


@dataclass
class MlpFit:
    params: list[np.ndarray]
    scaler: Scaler
    y_mean: float
    y_std: float
    activations: tuple[str, ...]
    loss_history: list[float] = field(default_factory=list)
    final_loss: float = float("nan")

    def predict(self, X) -> np.ndarray:
        Z = self.scaler.apply(X)
        return forward(self.params, Z, self.activations) * self.y_std + self.y_mean


def train_mlp(config: MlpConfig, X, y) -> MlpFit:
    """Fit on raw features ``X`` and labels ``y`` (seconds); both are standardized internally.

    ``final_loss`` is the full-data mean squared error in seconds squared;
    ``loss_history`` holds the mean mini-batch loss of each epoch on the
    standardized target.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(y)}")
    rng = np.random.default_rng(config.seed)
    scaler = fit_scaler(X)
    Z = scaler.apply(X)
    y_mean = float(y.mean())
    y_std = float(y.std()) or 1.0
    t = (y - y_mean) / y_std
    params = init_params(X.shape[1], config, rng)
    velocity = [np.zeros_like(p) for p in params]
    with np.errstate(over="ignore", invalid="ignore"):
        history = _sgd(config, params, velocity, Z, t, rng)
    fit = MlpFit(params, scaler, y_mean, y_std, config.activations, history)
    with np.errstate(over="ignore", invalid="ignore"):
        r = fit.predict(X) - y
        fit.final_loss = float(np.mean(r * r))
    if not np.isfinite(fit.final_loss):
        raise NonFiniteLoss(f"final training loss is {fit.final_loss}")
    return fit


def _sgd(config: MlpConfig, params, velocity, Z, t, rng) -> list[float]:
    """Mini-batch SGD with momentum, updating ``params`` in place; returns the per-epoch loss."""
    history = []
    n = len(t)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            b = order[lo:lo + config.batch_size]
            loss, grads = loss_and_grad(params, Z[b], t[b], config.activations)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} in epoch {epoch + 1} at batch offset {lo}; "
                                    f"learning rate {config.learning_rate} is likely too high")
            total += loss * len(b)
            for p, v, g in zip(params, velocity, grads):
                v *= config.momentum
                v -= config.learning_rate * g
                p += v
        history.append(total / n)
        log.debug("epoch %d: loss %.6g", epoch + 1, history[-1])
    return history
