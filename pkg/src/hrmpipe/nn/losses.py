"""Loss functions for the swallow-level models."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DataError

PROB_EPS = 1e-12


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim == 0:
        labels = labels[None]
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
        raise DataError(f"labels out of range [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cross_entropy_loss(probs, labels, class_weights=None, reduce="mean"):
    """Cross entropy on softmax outputs.

    Returns ``(loss, grad)`` where the gradient is taken with respect to the
    pre-softmax logits: ``p - onehot`` (scaled by class weight and 1/n under
    mean reduction).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim == 1:
        probs = probs[None, :]
    if labels.ndim == 0:
        labels = labels[None]
    n, k = probs.shape
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise DataError("soft predictions must sum to 1 per row")
    onehot = one_hot(labels, k)
    p_label = np.clip(probs[np.arange(n), labels], PROB_EPS, None)
    losses = -np.log(p_label)
    grad = probs - onehot
    if class_weights is not None:
        w = np.asarray(class_weights, dtype=np.float64)[labels]
        losses = losses * w
        grad = grad * w[:, None]
    if reduce == "mean":
        return float(losses.mean()), grad / n
    return losses, grad


def irp_weight(target, lam: float, y0: float):
    """Target-dependent loss weight, in [1/(lam+1), 1], equal to 1 at y0."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    if y0 <= 0:
        raise ConfigError(f"y0 must be > 0, got {y0}")
    target = np.asarray(target, dtype=np.float64)
    return 1.0 / (lam + 1.0) + (lam / (lam + 1.0)) * np.exp(
        -((target - y0) ** 2) / (2.0 * y0**2)
    )


def irp_loss(pred, target, lam: float = 5.0, y0: float = 15.0, reduce="mean"):
    """Squared error with extra weight near the clinical cut-off ``y0``.

    The weight depends only on the target, so the gradient with respect to
    the prediction is ``weight * 2 * (pred - target)``. With ``lam = 0``
    this is exactly the L2 loss.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    w = irp_weight(target, lam, y0)
    diff = pred - target
    losses = w * diff**2
    grad = w * 2.0 * diff
    if reduce == "mean":
        n = max(losses.size, 1)
        return float(losses.mean()), grad / n
    return losses, grad
