"""Multiclass gradient-boosted regression trees with an injectable base learner.

Each boosting round fits one tree per class on the softmax gradients
(g = p - onehot) and hessians (h = p (1 - p)) of the running margins. The
initial margins come from an optional pre-trained base learner encoded as
scaled one-hot vectors, so a rule model's predictions can seed the ensemble.
Splits are exact greedy over sorted unique feature values (datasets here are
hundreds of rows, so exactness beats histogram speed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IoError, SchemaError
from .nn.losses import softmax

GBM_FORMAT = "hrmgbm-1"


@dataclass
class GbmConfig:
    max_depth: int = 4
    eta: float = 0.3
    max_rounds: int = 60
    early_stop_patience: int = 10
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    base_margin_scale: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.max_rounds < 0 or self.early_stop_patience < 0:
            raise ConfigError("max_rounds and early_stop_patience must be >= 0")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TreeNode:
    """Internal node (feature/threshold with both children) or leaf (weight)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def predict(self, x_row) -> float:
        node = self
        while not node.is_leaf:
            node = node.left if x_row[node.feature] < node.threshold else node.right
        return node.weight

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"w": self.weight}
        return {
            "f": self.feature,
            "t": self.threshold,
            "l": self.left.to_dict(),
            "r": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "w" in d:
            return cls(weight=d["w"])
        return cls(
            feature=d["f"],
            threshold=d["t"],
            left=cls.from_dict(d["l"]),
            right=cls.from_dict(d["r"]),
        )

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


def _leaf_weight(g_sum, h_sum, reg_lambda):
    return -g_sum / (h_sum + reg_lambda)


def _split_gain(gl, hl, gr, hr, reg_lambda):
    g, h = gl + gr, hl + hr
    return 0.5 * (
        gl * gl / (hl + reg_lambda)
        + gr * gr / (hr + reg_lambda)
        - g * g / (h + reg_lambda)
    )


def _best_split(x, g, h, config: GbmConfig):
    """Best (feature, threshold, gain) over all exact candidate splits.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values; rows go left when value < threshold. Ties keep the first
    (lowest feature index, then lowest threshold) candidate.
    """
    n, d = x.shape
    g_total = g.sum()
    h_total = h.sum()
    best = None
    for feature in range(d):
        order = np.argsort(x[:, feature], kind="stable")
        xs = x[order, feature]
        gs = np.cumsum(g[order])
        hs = np.cumsum(h[order])
        distinct = np.nonzero(np.diff(xs))[0]  # split after position i
        for i in distinct:
            hl = hs[i]
            hr = h_total - hl
            if hl < config.min_child_weight or hr < config.min_child_weight:
                continue
            gl = gs[i]
            gain = _split_gain(gl, hl, g_total - gl, hr, config.reg_lambda) - config.gamma
            if gain > 0 and (best is None or gain > best[2]):
                threshold = 0.5 * (xs[i] + xs[i + 1])
                best = (feature, float(threshold), float(gain))
    return best


def _build_tree(x, g, h, config: GbmConfig, depth=0) -> TreeNode:
    if depth >= config.max_depth or len(x) < 2:
        return TreeNode(weight=float(_leaf_weight(g.sum(), h.sum(), config.reg_lambda)))
    split = _best_split(x, g, h, config)
    if split is None:
        return TreeNode(weight=float(_leaf_weight(g.sum(), h.sum(), config.reg_lambda)))
    feature, threshold, _ = split
    mask = x[:, feature] < threshold
    return TreeNode(
        feature=feature,
        threshold=threshold,
        left=_build_tree(x[mask], g[mask], h[mask], config, depth + 1),
        right=_build_tree(x[~mask], g[~mask], h[~mask], config, depth + 1),
    )


@dataclass
class BoostedModel:
    """Per-round, per-class trees plus the base-margin descriptor."""

    config: GbmConfig
    n_features: int
    n_classes: int
    trees: list = field(default_factory=list)  # trees[round][class] -> TreeNode
    base: str = "none"  # or "rule-model"
    best_round: int = 0  # number of rounds actually used for prediction

    def margins(self, x, base_margins=None, n_rounds=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise SchemaError(
                f"model expects {self.n_features} features, got shape {x.shape}"
            )
        base = self._resolve_base(x, base_margins)
        out = base.copy()
        rounds = self.best_round if n_rounds is None else n_rounds
        for trees_k in self.trees[:rounds]:
            for k, tree in enumerate(trees_k):
                out[:, k] += self.config.eta * np.array(
                    [tree.predict(row) for row in x]
                )
        return out

    def _resolve_base(self, x, base_margins):
        if base_margins is not None:
            base = np.asarray(base_margins, dtype=np.float64)
            if base.shape != (x.shape[0], self.n_classes):
                raise SchemaError(f"base margins must be (n, {self.n_classes})")
            return base
        if self.base == "none":
            return np.zeros((x.shape[0], self.n_classes))
        # rule-model base: with augmented features the rule label is the
        # last column, so margins can be rebuilt from the features alone
        if self.n_features == 14:
            labels = np.rint(x[:, 13]).astype(np.int64)
            return encode_base_margins(
                labels, self.n_classes, self.config.base_margin_scale
            )
        raise SchemaError(
            "model was trained with rule-model base margins; pass base_margins"
        )


def encode_base_margins(labels, n_classes: int, scale: float = 1.0) -> np.ndarray:
    """Scaled one-hot margin rows from single-index base-learner predictions."""
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f"labels out of range [0, {n_classes})")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = scale
    return out


def _xent(margins, labels):
    p = softmax(margins)
    return float(-np.log(np.clip(p[np.arange(len(labels)), labels], 1e-12, None)).mean())


def fit(
    features,
    labels,
    config: GbmConfig | None = None,
    base_margins=None,
    valid_features=None,
    valid_labels=None,
    valid_base_margins=None,
    n_classes: int = 8,
) -> BoostedModel:
    """Fit the boosted ensemble; early-stops on validation cross-entropy.

    ``base_margins`` seeds round zero (a pre-trained base learner's
    predictions); when omitted the initial margins are zero. The returned
    model is truncated to the best validation round when a validation set
    is provided.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError("features must be 2-d with one label per row")
    if not np.isfinite(x).all():
        raise DataError("features contain non-finite values")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise DataError(f"labels out of range [0, {n_classes})")
    config = config or GbmConfig()

    model = BoostedModel(
        config=config,
        n_features=x.shape[1],
        n_classes=n_classes,
        base="none" if base_margins is None else "rule-model",
    )
    n = x.shape[0]
    margins = (
        np.zeros((n, n_classes))
        if base_margins is None
        else np.asarray(base_margins, dtype=np.float64).copy()
    )
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0

    has_valid = valid_features is not None and valid_labels is not None
    if has_valid:
        xv = np.asarray(valid_features, dtype=np.float64)
        yv = np.asarray(valid_labels, dtype=np.int64)
        v_margins = (
            np.zeros((xv.shape[0], n_classes))
            if valid_base_margins is None
            else np.asarray(valid_base_margins, dtype=np.float64).copy()
        )
        best_loss = _xent(v_margins, yv)
        best_round = 0
        stagnant = 0

    for _ in range(config.max_rounds):
        p = softmax(margins)
        round_trees = []
        for k in range(n_classes):
            g = p[:, k] - onehot[:, k]
            h = np.maximum(p[:, k] * (1.0 - p[:, k]), 1e-12)
            tree = _build_tree(x, g, h, config)
            round_trees.append(tree)
            margins[:, k] += config.eta * np.array([tree.predict(row) for row in x])
        model.trees.append(round_trees)
        model.best_round = len(model.trees)

        if has_valid:
            for k, tree in enumerate(round_trees):
                v_margins[:, k] += config.eta * np.array([tree.predict(row) for row in xv])
            loss = _xent(v_margins, yv)
            if loss < best_loss - 1e-12:
                best_loss = loss
                best_round = len(model.trees)
                stagnant = 0
            else:
                stagnant += 1
                if stagnant >= config.early_stop_patience:
                    break

    if has_valid:
        model.best_round = best_round
        model.trees = model.trees[:best_round]
    return model


def predict_soft(model: BoostedModel, features, base_margins=None) -> np.ndarray:
    """Class probabilities: softmax(base margin + eta * sum of trees)."""
    return softmax(model.margins(features, base_margins))


def predict_top(model: BoostedModel, features, k: int = 2, base_margins=None) -> np.ndarray:
    """Top-k labels per row, by descending probability then ascending id."""
    probs = predict_soft(model, features, base_margins)
    n, n_classes = probs.shape
    if k > n_classes:
        raise ConfigError(f"k={k} exceeds {n_classes} classes")
    order = np.lexsort((np.tile(np.arange(n_classes), (n, 1)), -probs), axis=1)
    return order[:, :k]


def save_model(model: BoostedModel, path) -> Path:
    path = Path(path)
    doc = {
        "format": GBM_FORMAT,
        "config": model.config.as_dict(),
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "base": model.base,
        "best_round": model.best_round,
        "trees": [[t.to_dict() for t in round_trees] for round_trees in model.trees],
    }
    try:
        path.write_text(json.dumps(doc, sort_keys=True))
    except OSError as exc:
        raise IoError(f"cannot write model file {path}: {exc}") from exc
    return path


def load_model(path) -> BoostedModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt boosted-model file {path}") from exc
    if doc.get("format") != GBM_FORMAT:
        raise DataError(f"unsupported boosted-model format {doc.get('format')!r}")
    return BoostedModel(
        config=GbmConfig(**doc["config"]),
        n_features=doc["n_features"],
        n_classes=doc["n_classes"],
        base=doc["base"],
        best_round=doc["best_round"],
        trees=[[TreeNode.from_dict(t) for t in rnd] for rnd in doc["trees"]],
    )


# built-in model-selection sweep over depth x base learner x feature set
SWEEP_GRID = tuple(
    {"max_depth": depth, "base": base, "n_features": nf}
    for nf in (14, 13)
    for base in ("none", "rule")
    for depth in (3, 4, 5)
)


def selection_sweep(train, valid, rule_labels, configs=SWEEP_GRID, **config_overrides):
    """Train one model per sweep entry and rank by validation accuracy.

    ``train``/``valid`` are (features14, labels); the 13-feature variants
    drop the last column. Ties break toward fewer parameters: smaller
    depth, then no base learner, then fewer features.
    """
    (x_train, y_train), (x_valid, y_valid) = train, valid
    x_train = np.asarray(x_train, dtype=np.float64)
    x_valid = np.asarray(x_valid, dtype=np.float64)
    train_rules, valid_rules = rule_labels
    results = []
    for entry in configs:
        nf = entry["n_features"]
        cfg = GbmConfig(max_depth=entry["max_depth"], **config_overrides)
        xt, xv = x_train[:, :nf], x_valid[:, :nf]
        if entry["base"] == "rule":
            bm_t = encode_base_margins(train_rules, 8, cfg.base_margin_scale)
            bm_v = encode_base_margins(valid_rules, 8, cfg.base_margin_scale)
        else:
            bm_t = bm_v = None
        model = fit(
            xt, y_train, cfg,
            base_margins=bm_t,
            valid_features=xv, valid_labels=y_valid, valid_base_margins=bm_v,
        )
        preds = predict_soft(model, xv, base_margins=bm_v).argmax(axis=1)
        acc = float((preds == np.asarray(y_valid)).mean())
        results.append({"entry": dict(entry), "model": model, "valid_accuracy": acc})
    results.sort(
        key=lambda r: (
            -r["valid_accuracy"],
            r["entry"]["max_depth"],
            r["entry"]["base"] != "none",
            r["entry"]["n_features"],
        )
    )
    return results
