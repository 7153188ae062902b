"""Precision-weighted averaging of heterogeneous study models.

Each member contributes its soft-probability output weighted, per class, by
the precision score it achieved on a reference dataset; the weighted sum is
renormalized into a distribution. Single-index members (like the rule
model) enter via one-hot encoding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IoError, SchemaError

BLEND_FORMAT = "hrmblend-1"

OUTPUT_KINDS = ("soft-probability", "single-index")


def precision_scores(predictions, truth, n_classes: int = 8, laplace: bool = False) -> np.ndarray:
    """Per-model, per-class precision matrix PS[j][k] = TP / (TP + FP).

    ``predictions`` is (J, n) argmax labels. A class a model never predicts
    scores 0 by convention (no smoothing) unless ``laplace`` adds +1/+K.
    """
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.int64))
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size == 0:
        raise DataError("precision scores need at least one sample")
    if predictions.shape[1] != truth.size:
        raise DataError("predictions and truth must have equal length")
    ps = np.zeros((predictions.shape[0], n_classes))
    for j, preds in enumerate(predictions):
        for k in range(n_classes):
            predicted_k = preds == k
            tp = float(np.logical_and(predicted_k, truth == k).sum())
            denom = float(predicted_k.sum())
            if laplace:
                ps[j, k] = (tp + 1.0) / (denom + n_classes)
            else:
                ps[j, k] = tp / denom if denom > 0 else 0.0
    return ps


def one_hot(label: int, n_classes: int) -> np.ndarray:
    """Convert a single-index output to a soft-probability vector."""
    label = int(label)
    if not (0 <= label < n_classes):
        raise DataError(f"label {label} out of range [0, {n_classes})")
    v = np.zeros(n_classes)
    v[label] = 1.0
    return v


def blend(member_outputs, ps: np.ndarray) -> np.ndarray:
    """Blend one sample: B[k] proportional to sum_j PS[j][k] * M_j[k].

    Falls back to the uniform distribution when every weighted term is zero
    (the normalization constant is undefined there); use :func:`blend_rows`
    to also get the fallback flags.
    """
    blended, _ = blend_rows(np.asarray(member_outputs)[:, None, :], ps)
    return blended[0]


def blend_rows(member_outputs, ps: np.ndarray):
    """Blend a batch: ``member_outputs`` is (J, n, K). Returns (n, K) rows
    plus a boolean flag per row marking uniform fallbacks."""
    outputs = np.asarray(member_outputs, dtype=np.float64)
    ps = np.asarray(ps, dtype=np.float64)
    if outputs.ndim != 3:
        raise SchemaError(f"expected member outputs of shape (J, n, K), got {outputs.shape}")
    j, n, k = outputs.shape
    if ps.shape != (j, k):
        raise SchemaError(f"precision matrix must be ({j}, {k}), got {ps.shape}")
    sums = outputs.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise DataError("member outputs must sum to 1 per row")
    unnormalized = np.einsum("jk,jnk->nk", ps, outputs)
    totals = unnormalized.sum(axis=1)
    flagged = totals == 0.0
    blended = np.empty_like(unnormalized)
    blended[flagged] = 1.0 / k
    safe = ~flagged
    blended[safe] = unnormalized[safe] / totals[safe, None]
    return blended, flagged


def top_k_labels(probs: np.ndarray, k: int) -> np.ndarray:
    """Top-k labels per row by descending probability, ties by ascending id."""
    probs = np.atleast_2d(probs)
    n, n_classes = probs.shape
    order = np.lexsort((np.tile(np.arange(n_classes), (n, 1)), -probs), axis=1)
    return order[:, :k]


@dataclass
class BlendSpec:
    """Members plus their precision matrix, ready to blend new rows."""

    member_names: list
    output_kind: str = "soft-probability"
    precision_source: str = "training"  # or "validation"
    ps: np.ndarray | None = None
    laplace: bool = False

    def __post_init__(self):
        if not self.member_names:
            raise ConfigError("a blend needs at least one member")
        if self.output_kind not in OUTPUT_KINDS:
            raise ConfigError(f"output kind must be one of {OUTPUT_KINDS}")
        if self.precision_source not in ("training", "validation"):
            raise ConfigError("precision source must be 'training' or 'validation'")

    def prepare(self, member_soft: dict) -> np.ndarray:
        """Stack member outputs (n, K) into the (J, n, K) blending tensor,
        applying one-hot conversion in single-index mode."""
        stacked = []
        for name in self.member_names:
            probs = np.asarray(member_soft[name], dtype=np.float64)
            if self.output_kind == "single-index":
                labels = probs.argmax(axis=1)
                hard = np.zeros_like(probs)
                hard[np.arange(len(labels)), labels] = 1.0
                probs = hard
            stacked.append(probs)
        return np.stack(stacked)

    def predict(self, member_soft: dict):
        if self.ps is None:
            raise ConfigError("blend spec has no precision matrix; fit it first")
        return blend_rows(self.prepare(member_soft), self.ps)

    def fit_precision(self, member_soft: dict, truth) -> "BlendSpec":
        outputs = self.prepare(member_soft)
        preds = outputs.argmax(axis=2)
        self.ps = precision_scores(preds, truth, outputs.shape[2], laplace=self.laplace)
        return self


def save_blend(spec: BlendSpec, path) -> Path:
    path = Path(path)
    doc = {
        "format": BLEND_FORMAT,
        "members": list(spec.member_names),
        "output_kind": spec.output_kind,
        "precision_source": spec.precision_source,
        "laplace": spec.laplace,
        "ps": None if spec.ps is None else [[float(v) for v in row] for row in spec.ps],
    }
    try:
        path.write_text(json.dumps(doc, sort_keys=True))
    except OSError as exc:
        raise IoError(f"cannot write blend file {path}: {exc}") from exc
    return path


def load_blend(path) -> BlendSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read blend file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt blend file {path}") from exc
    if doc.get("format") != BLEND_FORMAT:
        raise DataError(f"unsupported blend format {doc.get('format')!r}")
    spec = BlendSpec(
        member_names=doc["members"],
        output_kind=doc["output_kind"],
        precision_source=doc["precision_source"],
        laplace=doc["laplace"],
    )
    if doc["ps"] is not None:
        spec.ps = np.asarray(doc["ps"], dtype=np.float64)
    return spec


def blend_sweep(member_soft_train, train_truth, member_soft_valid, valid_truth,
                combinations=None):
    """Evaluate blends over member combinations and rank them.

    By default multi-member combinations run in both output kinds and each
    member also appears once on its own, mirroring the published selection
    table. Ranking is by top-2 validation accuracy, ties by top-1, then by
    name for determinism.
    """
    names = sorted(member_soft_train)
    if combinations is None:
        multis = []
        for size in (2, 3):
            from itertools import combinations as combos

            multis.extend(combos(names, size))
        combinations = [((name,), ("soft-probability",)) for name in names]
        combinations += [(combo, OUTPUT_KINDS) for combo in multis]

    valid_truth = np.asarray(valid_truth, dtype=np.int64)
    rows = []
    for members, kinds in combinations:
        for kind in kinds:
            spec = BlendSpec(list(members), output_kind=kind)
            spec.fit_precision(member_soft_train, train_truth)
            if len(members) == 1:
                # a single model ranks as itself, without precision re-weighting
                blended = spec.prepare(member_soft_valid)[0]
            else:
                blended, _ = spec.predict(member_soft_valid)
            top2 = top_k_labels(blended, 2)
            top1_acc = float((top2[:, 0] == valid_truth).mean())
            top2_acc = float((top2 == valid_truth[:, None]).any(axis=1).mean())
            rows.append(
                {
                    "members": tuple(members),
                    "output_kind": kind,
                    "valid_top1": top1_acc,
                    "valid_top2": top2_acc,
                    "spec": spec,
                }
            )
    rows.sort(key=lambda r: (-r["valid_top2"], -r["valid_top1"], r["members"], r["output_kind"]))
    return rows
