"""Evaluation metrics and report export (JSON, CSV, SVG confusion heatmap)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IoError

METRICS_FORMAT = "hrmeval-1"


def confusion_matrix(preds, truth, n_classes: int) -> np.ndarray:
    """K x K counts with rows = truth, columns = prediction."""
    preds = np.asarray(preds, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if preds.shape != truth.shape:
        raise DataError("predictions and truth must have equal length")
    if preds.size and (
        min(preds.min(), truth.min()) < 0 or max(preds.max(), truth.max()) >= n_classes
    ):
        raise DataError(f"labels out of range [0, {n_classes})")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (truth, preds), 1)
    return matrix


def prf1(confusion: np.ndarray) -> dict:
    """Per-class precision/recall/F1/support from a confusion matrix
    (0/0 counts as 0 by convention)."""
    confusion = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(confusion)
    predicted = confusion.sum(axis=0)
    support = confusion.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "support": support.astype(np.int64),
    }


def accuracy(preds, truth) -> float:
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise DataError("predictions and truth must have equal length")
    return float((preds == truth).mean())


def top_k_accuracy(soft_preds, truth, k: int) -> float:
    """Fraction of rows whose true label is among the k most probable
    (probability ties break toward the smaller label id)."""
    soft_preds = np.atleast_2d(np.asarray(soft_preds, dtype=np.float64))
    truth = np.asarray(truth, dtype=np.int64)
    n, n_classes = soft_preds.shape
    if k > n_classes:
        raise ConfigError(f"k={k} exceeds {n_classes} classes")
    if truth.shape[0] != n:
        raise DataError("predictions and truth must have equal length")
    order = np.lexsort((np.tile(np.arange(n_classes), (n, 1)), -soft_preds), axis=1)
    return float((order[:, :k] == truth[:, None]).any(axis=1).mean())


def mae(preds, truth) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if preds.shape != truth.shape:
        raise DataError("predictions and truth must have equal length")
    return float(np.abs(preds - truth).mean())


def classification_report(preds, truth, n_classes: int, class_names=None,
                          soft_preds=None) -> dict:
    """Bundle the standard metrics into the versioned metric schema."""
    cm = confusion_matrix(preds, truth, n_classes)
    scores = prf1(cm)
    names = list(class_names) if class_names else [str(i) for i in range(n_classes)]
    report = {
        "format": METRICS_FORMAT,
        "accuracy": accuracy(preds, truth),
        "confusion": cm.tolist(),
        "class_names": names,
        "per_class": {
            names[i]: {
                "precision": float(scores["precision"][i]),
                "recall": float(scores["recall"][i]),
                "f1": float(scores["f1"][i]),
                "support": int(scores["support"][i]),
            }
            for i in range(n_classes)
        },
    }
    if soft_preds is not None:
        report["top2_accuracy"] = top_k_accuracy(soft_preds, truth, 2)
    return report


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def _svg_heatmap(confusion, class_names) -> str:
    confusion = np.asarray(confusion, dtype=np.float64)
    k = confusion.shape[0]
    cell = 46
    margin = 70
    size = margin + k * cell + 20
    peak = confusion.max() if confusion.max() > 0 else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'font-family="monospace" font-size="11">'
    ]
    for i in range(k):
        for j in range(k):
            shade = confusion[i, j] / peak
            # white -> blue ramp
            rgb = (int(255 * (1 - shade)), int(255 * (1 - 0.6 * shade)), 255)
            x, y = margin + j * cell, margin + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb{rgb}" stroke="#888"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle">'
                f"{int(confusion[i, j])}</text>"
            )
    for i, name in enumerate(class_names):
        parts.append(
            f'<text x="{margin - 6}" y="{margin + i * cell + cell / 2 + 4}" '
            f'text-anchor="end">{name}</text>'
        )
        parts.append(
            f'<text x="{margin + i * cell + cell / 2}" y="{margin - 8}" '
            f'text-anchor="middle">{name}</text>'
        )
    parts.append(f'<text x="6" y="16">rows: truth, columns: prediction</text>')
    parts.append("</svg>")
    return "".join(parts)


def report_export(report: dict, path, fmt: str = "json") -> Path:
    """Write a metric report as json, csv, or an svg confusion heatmap."""
    path = Path(path)
    try:
        if fmt == "json":
            path.write_text(json.dumps(report, sort_keys=True, indent=1))
        elif fmt == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["class", "precision", "recall", "f1", "support"])
                for name, row in report["per_class"].items():
                    writer.writerow(
                        [name, row["precision"], row["recall"], row["f1"], row["support"]]
                    )
                writer.writerow([])
                writer.writerow(["accuracy", report["accuracy"]])
                if "top2_accuracy" in report:
                    writer.writerow(["top2_accuracy", report["top2_accuracy"]])
        elif fmt == "svg-heatmap":
            path.write_text(_svg_heatmap(report["confusion"], report["class_names"]))
        else:
            raise ConfigError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc
    return path
