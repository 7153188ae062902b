"""Builders for the three swallow-level CNNs.

Kernel and stride choices are pinned by the shape-trace tests: with a
36x240x1 input the four shared stages produce 35x79 -> 34x38 -> 33x36 ->
32x34 -> 30x32 -> 14x15 -> 12x13 -> 5x6, and the IRP model adds a fifth
stage ending at 3x4 with a no-op (1,1) pool.
"""

from __future__ import annotations

import numpy as np

from ..data import CHANNELS, WINDOW_COLUMNS
from .layers import BatchNorm, Conv2D, Dense, GlobalAvgPool, MaxPool2D
from .network import Network

INPUT_SHAPE = (CHANNELS, WINDOW_COLUMNS, 1)

# (conv kernel, conv stride, pool kernel, pool stride) per stage
SHARED_STAGES = (
    ((2, 6), (1, 3), (2, 4), (1, 2)),
    ((2, 3), (1, 1), (2, 3), (1, 1)),
    ((3, 3), (1, 1), (3, 3), (2, 2)),
    ((3, 3), (1, 1), (3, 3), (2, 2)),
)
# the published IRP listing shows a final pool whose output equals its
# input; a (1,1) window reproduces that as an identity layer
IRP_STAGE5 = ((3, 3), (1, 1), (1, 1), (1, 1))


def _conv_stack(stages, channels):
    layers = []
    for (kernel, stride, pool, pool_stride), width in zip(stages, channels):
        layers.append(Conv2D(width, kernel, stride, activation="linear", weight_init="he"))
        layers.append(BatchNorm(activation="relu"))
        layers.append(MaxPool2D(pool, pool_stride))
    return layers


def build_swallow_classifier(channel_factor: int, n_classes: int, seed: int = 0,
                             dtype=np.float32) -> Network:
    """Shared classifier template: width factor 1 for swallow type (6-way),
    2 for pressurization (3-way)."""
    c = channel_factor
    layers = _conv_stack(SHARED_STAGES, [8 * c, 16 * c, 32 * c, 64 * c])
    layers.append(GlobalAvgPool())
    layers.append(Dense(64 * c, activation="relu"))
    layers.append(Dense(64 * c, activation="relu"))
    layers.append(Dense(n_classes, activation="softmax"))
    return Network(layers, INPUT_SHAPE, head=f"classify-{n_classes}", seed=seed, dtype=dtype)


def build_swallow_type_net(seed: int = 0, dtype=np.float32) -> Network:
    """Six-way swallow-type CNN (channel factor 1)."""
    return build_swallow_classifier(1, 6, seed=seed, dtype=dtype)


def build_pressurization_net(seed: int = 0, dtype=np.float32) -> Network:
    """Three-way pressurization CNN (channel factor 2)."""
    return build_swallow_classifier(2, 3, seed=seed, dtype=dtype)


def build_irp_net(seed: int = 0, dtype=np.float32) -> Network:
    """IRP regression CNN: five conv stages, single linear output."""
    layers = _conv_stack(SHARED_STAGES + (IRP_STAGE5,), [16, 32, 64, 64, 128])
    layers.append(GlobalAvgPool())
    layers.append(Dense(128, activation="relu"))
    layers.append(Dense(128, activation="relu"))
    layers.append(Dense(1, activation="linear"))
    return Network(layers, INPUT_SHAPE, head="regress-1", seed=seed, dtype=dtype)
