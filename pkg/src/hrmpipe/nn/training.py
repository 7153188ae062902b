"""Mini-batch Adam training with best-validation checkpointing and restarts.

The schedule follows a fresh run plus restart runs: whenever the validation
metric stagnates for ``patience`` epochs, weights rewind to the best
checkpoint and training continues with a fresh optimizer state, up to
``restarts`` times. The returned network always carries the best weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceError, GeometryError
from .losses import cross_entropy_loss, irp_loss
from .network import Network


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    restarts: int = 1
    loss: str = "cross-entropy"  # or "weighted-irp"
    loss_lambda: float = 5.0
    loss_y0: float = 15.0
    class_weights: list | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if self.loss not in ("cross-entropy", "weighted-irp"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.loss_lambda < 0 or self.loss_y0 <= 0:
            raise ConfigError("weighted-irp loss needs lambda >= 0 and y0 > 0")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ConfigError("batch_size must be >= 1 and max_epochs >= 0")

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        if d["class_weights"] is not None:
            d["class_weights"] = list(map(float, d["class_weights"]))
        return d


class Adam:
    """Standard Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.v = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = np.asarray(g, dtype=np.float64)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p -= update.astype(p.dtype)


def _batch_loss(net: Network, probs_or_preds, yb, config: TrainConfig):
    if config.loss == "cross-entropy":
        loss, dlogits = cross_entropy_loss(
            probs_or_preds, yb, class_weights=config.class_weights, reduce="mean"
        )
        return loss, dlogits
    preds = probs_or_preds[:, 0]
    loss, dpred = irp_loss(preds, yb, config.loss_lambda, config.loss_y0, reduce="mean")
    return loss, dpred[:, None]


def _valid_metric(net: Network, x, y, config: TrainConfig, batch_size=256):
    """Accuracy for classifiers (higher is better), MAE for regression
    (lower is better). Returns (value, better_is_higher)."""
    if config.loss == "cross-entropy":
        preds = predict_soft(net, x, batch_size=batch_size)
        return float((preds.argmax(axis=1) == np.asarray(y)).mean()), True
    preds = predict_irp(net, x, batch_size=batch_size)
    return float(np.abs(preds - np.asarray(y)).mean()), False


def train(net: Network, train_set, valid_set, config: TrainConfig):
    """Train in place; returns ``(net, history)`` with the best-validation
    weights restored. Raises DivergenceError (carrying the last finite
    checkpoint) if the loss goes non-finite."""
    x_train, y_train = train_set
    x_valid, y_valid = valid_set
    if len(x_train) == 0 or len(x_valid) == 0:
        raise ConfigError("training and validation sets must be non-empty")

    rng = np.random.default_rng(config.seed)
    y_train = np.asarray(y_train)
    n = len(x_train)
    history = []
    best_state = None
    best_metric = None
    stagnant = 0
    restarts_used = 0

    optimizer = Adam(net.param_arrays(), config.lr, config.beta1, config.beta2, config.eps)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            try:
                out = net.forward(xb, training=True)
                loss, dout = _batch_loss(net, out, yb, config)
            except DivergenceError as exc:
                if best_state is not None:
                    net.set_state(best_state)
                raise DivergenceError(
                    f"{exc} (epoch {epoch})", checkpoint=best_state, history=history
                ) from exc
            if not np.isfinite(loss):
                if best_state is not None:
                    net.set_state(best_state)
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}",
                    checkpoint=best_state,
                    history=history,
                )
            net.backward(dout.astype(net.dtype), dout_is_preactivation=True)
            optimizer.step(net.grad_arrays())
            epoch_loss += loss * len(idx)
        epoch_loss /= n

        metric, higher = _valid_metric(net, x_valid, y_valid, config)
        improved = (
            best_metric is None
            or (higher and metric > best_metric)
            or (not higher and metric < best_metric)
        )
        if improved:
            best_metric = metric
            best_state = net.get_state()
            stagnant = 0
        else:
            stagnant += 1
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(epoch_loss),
                "valid_metric": metric,
                "restarts_used": restarts_used,
            }
        )
        if stagnant > config.patience:
            if restarts_used < config.restarts:
                restarts_used += 1
                stagnant = 0
                net.set_state(best_state)
                optimizer = Adam(
                    net.param_arrays(), config.lr, config.beta1, config.beta2, config.eps
                )
            else:
                break

    if best_state is not None:
        net.set_state(best_state)
    return net, history


def predict_soft(net: Network, x, batch_size: int = 256) -> np.ndarray:
    """Class probabilities in inference mode (rows sum to 1)."""
    if not net.head.startswith("classify"):
        raise GeometryError(f"predict_soft needs a classification head, got {net.head!r}")
    return _batched_forward(net, x, batch_size)


def predict_irp(net: Network, x, batch_size: int = 256) -> np.ndarray:
    """Non-negative IRP predictions in mmHg (clamped at zero)."""
    if net.head != "regress-1":
        raise GeometryError(f"predict_irp needs a regression head, got {net.head!r}")
    out = _batched_forward(net, x, batch_size)
    return np.maximum(out[:, 0], 0.0)


def _batched_forward(net: Network, x, batch_size: int) -> np.ndarray:
    outs = [
        net.forward(x[start : start + batch_size], training=False)
        for start in range(0, len(x), batch_size)
    ]
    return np.concatenate(outs, axis=0) if outs else np.zeros((0,) + net.output_shape)
