"""Minimal dense/convolutional network engine with manual backpropagation."""

from .layers import BatchNorm, Conv2D, Dense, Flatten, GlobalAvgPool, MaxPool2D
from .losses import cross_entropy_loss, irp_loss, irp_weight, softmax
from .network import Network, load_network, save_network
from .builders import build_irp_net, build_pressurization_net, build_swallow_type_net
from .training import TrainConfig, predict_irp, predict_soft, train

__all__ = [
    "BatchNorm",
    "Conv2D",
    "Dense",
    "Flatten",
    "GlobalAvgPool",
    "MaxPool2D",
    "Network",
    "TrainConfig",
    "build_irp_net",
    "build_pressurization_net",
    "build_swallow_type_net",
    "cross_entropy_loss",
    "irp_loss",
    "irp_weight",
    "load_network",
    "predict_irp",
    "predict_soft",
    "save_network",
    "softmax",
    "train",
]
