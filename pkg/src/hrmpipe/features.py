"""Aggregation of per-swallow predictions into study-level feature vectors.

The 13 "original" features are four IRP statistics (normalized by the
15 mmHg cut-off), three pressurization fractions, and six swallow-type
fractions; appending the rule-tree label id gives the 14 "augmented"
features. Fractions use hard argmax counts by default so they read as
event probabilities over the study's swallows.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, EmptyStudy
from .labels import SUPINE, StudyDiagnosis
from .rules import StudySummary

IRP_SCALE = 15.0

FEATURE_NAMES_13 = (
    "irp-max-normalized",
    "irp-min-normalized",
    "irp-median-normalized",
    "irp-mean-normalized",
    "pressurization-0-prob",
    "pressurization-1-prob",
    "pressurization-2-prob",
    "type-0-prob",
    "type-1-prob",
    "type-2-prob",
    "type-3-prob",
    "type-4-prob",
    "type-5-prob",
)
FEATURE_NAMES_14 = FEATURE_NAMES_13 + ("rule-label",)


def aggregate(
    type_preds,
    press_preds,
    irp_preds,
    positions=None,
    position_filter: str | None = SUPINE,
    counting: str = "hard",
) -> np.ndarray:
    """Build the 13-entry feature vector for one study.

    ``type_preds`` (n, 6) and ``press_preds`` (n, 3) are per-swallow soft
    probabilities; ``irp_preds`` (n,) is in mmHg. With the default
    ``position_filter`` only supine swallows count; pass ``None`` to use all.
    ``counting="hard"`` turns argmax labels into fractions; ``"soft"``
    averages the probability vectors instead (ablation mode).
    """
    type_preds = np.atleast_2d(np.asarray(type_preds, dtype=np.float64))
    press_preds = np.atleast_2d(np.asarray(press_preds, dtype=np.float64))
    irp_preds = np.asarray(irp_preds, dtype=np.float64).ravel()
    n = type_preds.shape[0]
    if press_preds.shape[0] != n or irp_preds.shape[0] != n:
        raise DataError("per-swallow prediction arrays must have equal length")
    if type_preds.shape[1] != 6 or press_preds.shape[1] != 3:
        raise DataError("expected 6 type and 3 pressurization probabilities per swallow")

    if position_filter is not None:
        if positions is None:
            raise DataError("position_filter requires per-swallow positions")
        mask = np.asarray([p == position_filter for p in positions], dtype=bool)
        type_preds = type_preds[mask]
        press_preds = press_preds[mask]
        irp_preds = irp_preds[mask]
    if type_preds.shape[0] == 0:
        raise EmptyStudy("no swallows left after position filtering")

    if counting == "hard":
        m = type_preds.shape[0]
        type_prob = np.bincount(type_preds.argmax(axis=1), minlength=6) / m
        press_prob = np.bincount(press_preds.argmax(axis=1), minlength=3) / m
    elif counting == "soft":
        type_prob = type_preds.mean(axis=0)
        press_prob = press_preds.mean(axis=0)
    else:
        raise DataError(f"counting must be 'hard' or 'soft', got {counting!r}")

    irp_stats = np.array(
        [irp_preds.max(), irp_preds.min(), np.median(irp_preds), irp_preds.mean()]
    ) / IRP_SCALE
    return np.concatenate([irp_stats, press_prob, type_prob])


def augment(features13: np.ndarray, rule_label: StudyDiagnosis) -> np.ndarray:
    """Append the merged rule label id, yielding the 14-entry vector."""
    features13 = np.asarray(features13, dtype=np.float64).ravel()
    if features13.shape[0] != 13:
        raise DataError(f"expected 13 features, got {features13.shape[0]}")
    return np.concatenate([features13, [float(int(StudyDiagnosis(rule_label)))]])


def summary_from_features(features13: np.ndarray) -> StudySummary:
    """Recover the rule-tree summary from a 13-entry feature vector."""
    features13 = np.asarray(features13, dtype=np.float64).ravel()
    if features13.shape[0] != 13:
        raise DataError(f"expected 13 features, got {features13.shape[0]}")
    return StudySummary(
        irp_median=features13[2] * IRP_SCALE,
        p_type=tuple(features13[7:13]),
        p_press=tuple(features13[4:7]),
    )


def features_to_csv(matrix, path, n_features: int = 14) -> None:
    """Write a feature matrix as CSV with the documented column order."""
    names = FEATURE_NAMES_14 if n_features == 14 else FEATURE_NAMES_13
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.shape[1] != len(names):
        raise DataError(f"feature matrix has {matrix.shape[1]} columns, expected {len(names)}")
    lines = [",".join(names)]
    for row in matrix:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
