"""Fully-connected study-level classifier and its width/depth selection sweep.

The 6-layer template is Flatten -> 2 x Dense(50K) -> 3 x Dense(25K) ->
Dense(8, softmax); the 5- and 7-layer variants drop or add one 25K layer.
ANN-1 is the 6-layer, K=1, 14-feature configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn.layers import Dense, Flatten
from .nn.network import Network
from .nn.training import TrainConfig, predict_soft, train


@dataclass(frozen=True)
class AnnConfig:
    layers: int = 6          # dense layer count, 5..7
    width_k: int = 1
    n_features: int = 14     # 13 or 14
    class_weights: bool = False

    def __post_init__(self):
        if self.layers not in (5, 6, 7):
            raise ConfigError(f"dense layer count must be 5, 6, or 7, got {self.layers}")
        if self.width_k < 1:
            raise ConfigError(f"width factor must be >= 1, got {self.width_k}")
        if self.n_features not in (13, 14):
            raise ConfigError(f"feature count must be 13 or 14, got {self.n_features}")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


ANN_1 = AnnConfig(layers=6, width_k=1, n_features=14)

# the ten configurations of the published selection table, in order
SWEEP_CONFIGS = (
    AnnConfig(6, 1, 14, False),
    AnnConfig(6, 2, 14, False),
    AnnConfig(5, 1, 14, False),
    AnnConfig(7, 2, 14, False),
    AnnConfig(6, 1, 14, True),
    AnnConfig(6, 1, 13, False),
    AnnConfig(6, 2, 13, False),
    AnnConfig(5, 1, 13, False),
    AnnConfig(7, 2, 13, False),
    AnnConfig(6, 1, 13, True),
)


def build_study_ann(config: AnnConfig = ANN_1, seed: int = 0, dtype=np.float64) -> Network:
    """Instantiate the dense classifier for ``config``."""
    k = config.width_k
    n_25k = config.layers - 3  # 2, 3, or 4 narrow layers before the head
    layers = [Flatten()]
    layers += [Dense(50 * k, activation="relu") for _ in range(2)]
    layers += [Dense(25 * k, activation="relu") for _ in range(n_25k)]
    layers.append(Dense(8, activation="softmax"))
    return Network(layers, (config.n_features,), head="classify-8", seed=seed, dtype=dtype)


def ann_param_count(config: AnnConfig) -> int:
    """Closed-form parameter count for the architecture."""
    k = config.width_k
    widths = [config.n_features, 50 * k, 50 * k] + [25 * k] * (config.layers - 3) + [8]
    return sum((w_in + 1) * w_out for w_in, w_out in zip(widths[:-1], widths[1:]))


def inverse_frequency_weights(labels, n_classes: int = 8) -> np.ndarray:
    """Per-class weights proportional to 1/frequency, normalized to mean 1."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
    present = inv > 0
    inv[present] *= present.sum() / inv[present].sum()
    return inv


def train_study_ann(
    config: AnnConfig,
    train_set,
    valid_set,
    train_config: TrainConfig | None = None,
    seed: int = 0,
):
    """Build and train one configuration; returns (net, history)."""
    tc = train_config or TrainConfig(
        lr=1e-3, batch_size=32, max_epochs=300, patience=40, restarts=2, seed=seed
    )
    if config.class_weights:
        weights = inverse_frequency_weights(train_set[1])
        tc = TrainConfig(**{**tc.as_dict(), "class_weights": list(weights)})
    net = build_study_ann(config, seed=seed)
    x_train = np.asarray(train_set[0], dtype=np.float64)[:, : config.n_features]
    x_valid = np.asarray(valid_set[0], dtype=np.float64)[:, : config.n_features]
    return train(net, (x_train, train_set[1]), (x_valid, valid_set[1]), tc)


def ann_selection_sweep(
    train_set,
    valid_set,
    configs=SWEEP_CONFIGS,
    train_config: TrainConfig | None = None,
    seed: int = 0,
):
    """Train every configuration and rank by validation accuracy
    (ties toward fewer parameters)."""
    if not configs:
        raise ConfigError("sweep needs at least one configuration")
    results = []
    for config in configs:
        net, history = train_study_ann(config, train_set, valid_set, train_config, seed)
        x_valid = np.asarray(valid_set[0], dtype=np.float64)[:, : config.n_features]
        preds = predict_soft(net, x_valid).argmax(axis=1)
        acc = float((preds == np.asarray(valid_set[1])).mean())
        results.append(
            {
                "config": config,
                "net": net,
                "history": history,
                "valid_accuracy": acc,
                "n_params": ann_param_count(config),
            }
        )
    results.sort(key=lambda r: (-r["valid_accuracy"], r["n_params"]))
    return results
