"""Gaussian radial-basis-function network: k-means centers, ridge output weights."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteLoss, TooFewSamples
from .kmeans import kmeans
from .scaler import Scaler, fit_scaler

PRESET_CENTERS = (10, 15, 25, 35)
SIGMA_FLOOR = 1e-3


@dataclass
class RbfnConfig:
    M: int = 10
    beta_init: float | tuple[float, ...] | None = None   # None: derived from cluster spread
    width_scale: float = 2.0                              # sigma = width_scale * RMS cluster radius
    seed: int = 0
    training: str = "least_squares"                       # or "gradient" (least squares, then SGD)
    ridge: float = 1e-6
    kmeans_iter: int = 50
    epochs: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 256

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.width_scale <= 0:
            raise ValueError("width_scale must be positive")
        if self.training not in ("least_squares", "gradient"):
            raise ValueError(f"unknown training mode {self.training!r}")


@dataclass
class RbfnParams:
    centers: np.ndarray
    beta: np.ndarray
    weights: np.ndarray
    bias: float

    def as_list(self) -> list[np.ndarray]:
        return [self.centers, self.beta, self.weights, np.array([self.bias])]

    @classmethod
    def from_list(cls, p: list[np.ndarray]) -> "RbfnParams":
        return cls(p[0], p[1], p[2], float(p[3][0]))


def design(X: np.ndarray, centers: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Squared distances and activations ``exp(-beta * r^2)`` of every sample to every center."""
    r2 = np.maximum(
        np.sum(X * X, axis=1)[:, None] - 2.0 * X @ centers.T + np.sum(centers * centers, axis=1)[None, :], 0.0)
    return r2, np.exp(-beta[None, :] * r2)


def rbf_output(p: RbfnParams, X: np.ndarray) -> np.ndarray:
    return design(X, p.centers, p.beta)[1] @ p.weights + p.bias


def loss_and_grad(params: list[np.ndarray], X: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean squared error and its gradient w.r.t. ``[centers, beta, weights, bias]``."""
    C, beta, w, b = params
    diff = X[:, None, :] - C[None, :, :]
    r2 = np.einsum("ikf,ikf->ik", diff, diff)
    phi = np.exp(-beta[None, :] * r2)
    r = phi @ w + b[0] - y
    loss = float(np.mean(r * r))
    g = (2.0 / len(y)) * r
    gw = phi.T @ g
    gb = np.array([g.sum()])
    s = g[:, None] * phi * w[None, :]               # dL/dphi_ik * phi_ik
    gbeta = -np.sum(s * r2, axis=0)
    gC = 2.0 * beta[:, None] * np.einsum("ik,ikf->kf", s, diff)
    return loss, [gC, gbeta, gw, gb]


def ridge_weights(phi: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Output weights and bias minimising ``|phi w + b - y|^2 + lam |w|^2`` (bias unpenalised)."""
    A = np.column_stack([phi, np.ones(len(y))])
    reg = np.full(A.shape[1], lam)
    reg[-1] = 0.0
    lhs = A.T @ A + np.diag(reg)
    rhs = A.T @ y
    try:
        theta = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        theta = np.linalg.lstsq(A, y, rcond=None)[0]
    return theta[:-1], float(theta[-1])


@dataclass
class RbfnFit:
    params: RbfnParams
    scaler: Scaler
    final_loss: float = float("nan")
    loss_history: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return rbf_output(self.params, self.scaler.apply(X))


def train_rbfn(config: RbfnConfig, X, y) -> RbfnFit:
    """Centers by seeded k-means on the scaled features, widths from cluster spread, ridge output layer.

    Without ``beta_init`` each center's width is ``width_scale`` times the
    RMS distance of its members, i.e. ``beta = 1 / (2 sigma^2)``.

    With ``training="gradient"`` every parameter is then refined by
    mini-batch SGD with momentum on the mean squared error.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < max(2, config.M):
        raise TooFewSamples(f"need at least max(2, M={config.M}) samples, got {len(y)}")
    scaler = fit_scaler(X)
    Z = scaler.apply(X)
    km = kmeans(Z, config.M, seed=config.seed, max_iter=config.kmeans_iter)
    C = km.centers
    if config.beta_init is None:
        d2 = np.sum((Z - C[km.labels]) ** 2, axis=1)
        rms = np.sqrt(np.bincount(km.labels, weights=d2, minlength=config.M)
                      / np.bincount(km.labels, minlength=config.M))
        sigma = np.maximum(config.width_scale * rms, SIGMA_FLOOR)
        beta = 1.0 / (2.0 * sigma * sigma)
    else:
        beta = np.broadcast_to(np.asarray(config.beta_init, dtype=np.float64), (config.M,)).copy()
        if np.any(beta <= 0):
            raise ValueError("beta_init must be positive")
    _, phi = design(Z, C, beta)
    w, b = ridge_weights(phi, y, config.ridge)
    params = RbfnParams(C, beta, w, b)
    history = []
    if config.training == "gradient":
        rng = np.random.default_rng(config.seed + 1)
        y_scale = float(y.std()) or 1.0
        plist = [C.copy(), beta.copy(), w / y_scale, np.array([b / y_scale])]
        yt = y / y_scale
        vel = [np.zeros_like(p) for p in plist]
        for epoch in range(config.epochs):
            order = rng.permutation(len(y))
            total = 0.0
            for lo in range(0, len(y), config.batch_size):
                idx = order[lo:lo + config.batch_size]
                loss, grads = loss_and_grad(plist, Z[idx], yt[idx])
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"RBFN fine-tuning loss became {loss} in epoch {epoch + 1}")
                total += loss * len(idx)
                for p, v, g in zip(plist, vel, grads):
                    v *= 0.9
                    v -= config.learning_rate * g
                    p += v
                plist[1] = np.maximum(plist[1], 1e-12)
            history.append(total / len(y))
        params = RbfnParams(plist[0], plist[1], plist[2] * y_scale, float(plist[3][0] * y_scale))
    fit = RbfnFit(params, scaler, loss_history=history)
    r = fit.predict(X) - y
    fit.final_loss = float(np.mean(r * r))
    return fit
