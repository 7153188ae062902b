"""End-to-end orchestration: synthesize, split, train, blend, evaluate.

``run_pipeline`` executes the stages in dependency order, records every
artifact with a content hash, and is bit-deterministic for a fixed config
and seed. ``predict_study`` runs a single study through a trained bundle.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gbm as gbm_mod
from .blending import BlendSpec, blend_sweep, load_blend, save_blend, top_k_labels
from .data import (
    PressureMatrix,
    StudyRecord,
    save_dataset,
    stratified_split,
    swallow_arrays,
)
from .errors import BundleError, ConfigError, DataError, IoError
from .features import (
    FEATURE_NAMES_14,
    aggregate,
    augment,
    features_to_csv,
    summary_from_features,
)
from .labels import SUPINE, StudyDiagnosis
from .metrics import classification_report, mae as mae_metric, report_export
from .nn.builders import build_irp_net, build_pressurization_net, build_swallow_type_net
from .nn.network import load_network, save_network
from .nn.training import TrainConfig, predict_irp, predict_soft, train
from .rules import NOMINAL_PARAMS, RuleParams, classify_merged, grid_search
from .study_ann import AnnConfig, train_study_ann
from .synth import desk_profile, synth_dataset

CONFIG_FORMAT = "hrmcfg-1"
BUNDLE_FORMAT = "hrmbundle-1"
REPORT_FORMAT = "hrmreport-1"

#: pressure grids are divided by this before entering the CNNs so raw mmHg
#: magnitudes do not inflate first-layer gradients
INPUT_SCALE = 100.0

PIPELINE_DEFAULTS = {
    "format": CONFIG_FORMAT,
    "seed": 7,
    "dataset_dir": "artifacts/dataset",
    "report_dir": "artifacts",
    "synth": {
        "total_studies": 200,
        "noise_sigma": 1.0,
        "class_counts": None,  # optional {label name: count}, overrides total_studies
    },
    "split": {"fractions": [0.70, 0.15, 0.15]},
    "swallow_training": {
        "type": {"lr": 2e-3, "batch_size": 32, "max_epochs": 12, "patience": 3, "restarts": 1},
        "pressurization": {
            "lr": 2e-3, "batch_size": 32, "max_epochs": 12, "patience": 3, "restarts": 1,
        },
        "irp": {
            "lr": 2e-3, "batch_size": 32, "max_epochs": 30, "patience": 5, "restarts": 1,
            "loss_lambda": 5.0, "loss_y0": 15.0,
        },
    },
    "rule": {
        "params": list(NOMINAL_PARAMS),
        "grid_search": False,
        "grid": {"a1": [12.0, 17.0, 0.5], "a2": [0.1, 0.3, 0.01], "a3": [0.4, 0.6, 0.01]},
    },
    "features": {"n_features": 14, "supine_only": True, "counting": "hard"},
    "gbm": {
        "max_depth": 4,
        "eta": 0.3,
        "max_rounds": 60,
        "early_stop_patience": 10,
        "reg_lambda": 1.0,
        "gamma": 0.0,
        "min_child_weight": 1.0,
        "base_learner": "rule",  # or "none"
        "base_margin_scale": 1.0,
        "n_features": 14,
    },
    "ann": {
        "layers": 6,
        "width_k": 1,
        "n_features": 14,
        "class_weights": False,
        "lr": 1e-3,
        "batch_size": 32,
        "max_epochs": 300,
        "patience": 40,
        "restarts": 2,
    },
    "blend": {
        "members": ["gbm", "ann"],
        "output_kind": "soft-probability",
        "precision_source": "training",
        "run_sweep": True,
    },
}


def _merge_config(defaults, overrides, path="config"):
    if overrides is None:
        return json.loads(json.dumps(defaults))
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path} must be a mapping")
    merged = {}
    for key, default in defaults.items():
        if key in overrides and isinstance(default, dict) and default:
            merged[key] = _merge_config(default, overrides[key], f"{path}.{key}")
        elif key in overrides:
            merged[key] = overrides[key]
        else:
            merged[key] = json.loads(json.dumps(default))
    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys under {path}: {unknown}")
    return merged


def load_config(source=None) -> dict:
    """Validate and normalize a pipeline config (dict, path, or None)."""
    if isinstance(source, (str, Path)):
        try:
            source = json.loads(Path(source).read_text())
        except OSError as exc:
            raise IoError(f"cannot read config {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    config = _merge_config(PIPELINE_DEFAULTS, source)
    if config["format"] != CONFIG_FORMAT:
        raise ConfigError(f"unsupported config format {config['format']!r}")
    fractions = config["split"]["fractions"]
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ConfigError("split fractions must be three non-negative values summing to 1")
    if config["features"]["n_features"] not in (13, 14):
        raise ConfigError("features.n_features must be 13 or 14")
    if config["gbm"]["base_learner"] not in ("rule", "none"):
        raise ConfigError("gbm.base_learner must be 'rule' or 'none'")
    return config


# ---------------------------------------------------------------------------
# Trained bundle
# ---------------------------------------------------------------------------


@dataclass
class TrainedBundle:
    """Everything needed to diagnose a new study."""

    type_net: object = None
    pressurization_net: object = None
    irp_net: object = None
    rule_params: RuleParams = RuleParams(*NOMINAL_PARAMS)
    gbm_model: object | None = None
    ann_net: object | None = None
    ann_n_features: int = 14
    blend: BlendSpec | None = None
    feature_config: dict | None = None

    def require_swallow_models(self):
        missing = [
            name
            for name, model in (
                ("type", self.type_net),
                ("pressurization", self.pressurization_net),
                ("irp", self.irp_net),
            )
            if model is None
        ]
        if missing:
            raise BundleError(f"bundle is missing swallow models: {missing}")

    def require_complete(self):
        self.require_swallow_models()
        if self.gbm_model is None and self.ann_net is None:
            raise BundleError("bundle needs at least one study-level model")


def save_bundle(bundle: TrainedBundle, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_network(bundle.type_net, directory / "type.hrmnet")
    save_network(bundle.pressurization_net, directory / "pressurization.hrmnet")
    save_network(bundle.irp_net, directory / "irp.hrmnet")
    if bundle.gbm_model is not None:
        gbm_mod.save_model(bundle.gbm_model, directory / "gbm.json")
    if bundle.ann_net is not None:
        save_network(bundle.ann_net, directory / "ann.hrmnet")
    if bundle.blend is not None:
        save_blend(bundle.blend, directory / "blend.json")
    meta = {
        "format": BUNDLE_FORMAT,
        "rule_params": [bundle.rule_params.a1, bundle.rule_params.a2, bundle.rule_params.a3],
        "ann_n_features": bundle.ann_n_features,
        "feature_config": bundle.feature_config,
        "has_gbm": bundle.gbm_model is not None,
        "has_ann": bundle.ann_net is not None,
        "has_blend": bundle.blend is not None,
    }
    (directory / "bundle.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    return directory


def load_bundle(directory) -> TrainedBundle:
    directory = Path(directory)
    meta_path = directory / "bundle.json"
    if not meta_path.exists():
        raise BundleError(f"no bundle.json in {directory}")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") != BUNDLE_FORMAT:
        raise BundleError(f"unsupported bundle format {meta.get('format')!r}")

    def _net(name):
        path = directory / name
        if not path.exists():
            raise BundleError(f"bundle is missing {name}")
        return load_network(path)

    bundle = TrainedBundle(
        type_net=_net("type.hrmnet"),
        pressurization_net=_net("pressurization.hrmnet"),
        irp_net=_net("irp.hrmnet"),
        rule_params=RuleParams(*meta["rule_params"]),
        ann_n_features=meta.get("ann_n_features", 14),
        feature_config=meta.get("feature_config"),
    )
    if meta.get("has_gbm"):
        bundle.gbm_model = gbm_mod.load_model(directory / "gbm.json")
    if meta.get("has_ann"):
        bundle.ann_net = _net("ann.hrmnet")
    if meta.get("has_blend"):
        bundle.blend = load_blend(directory / "blend.json")
    bundle.require_complete()
    return bundle


# ---------------------------------------------------------------------------
# Swallow-level inference and feature building
# ---------------------------------------------------------------------------


def _swallow_inputs(x_mmhg: np.ndarray) -> np.ndarray:
    return (x_mmhg / INPUT_SCALE).astype(np.float32)


def predict_swallows(bundle: TrainedBundle, matrices: np.ndarray) -> dict:
    """Per-swallow soft predictions for a stack of (n, 36, 240, 1) grids."""
    bundle.require_swallow_models()
    x = _swallow_inputs(matrices)
    return {
        "type_probs": predict_soft(bundle.type_net, x),
        "pressurization_probs": predict_soft(bundle.pressurization_net, x),
        "irp": predict_irp(bundle.irp_net, x),
    }


def study_features_from_predictions(preds: dict, positions, rule_params: RuleParams,
                                    feature_config: dict | None = None):
    """13- and 14-entry features plus the merged rule label for one study."""
    fc = feature_config or {"supine_only": True, "counting": "hard"}
    position_filter = SUPINE if fc.get("supine_only", True) else None
    f13 = aggregate(
        preds["type_probs"],
        preds["pressurization_probs"],
        preds["irp"],
        positions=positions,
        position_filter=position_filter,
        counting=fc.get("counting", "hard"),
    )
    rule_label = classify_merged(summary_from_features(f13), rule_params)
    return f13, augment(f13, rule_label), rule_label


def compute_study_features(studies, bundle: TrainedBundle):
    """Swallow-model inference plus feature aggregation for every study.

    Returns a dict of aligned arrays: features13/features14 (n_studies x d),
    rule_labels, diagnosis labels, study_ids, plus the raw per-swallow
    predictions in study order (15 rows per study).
    """
    all_arrays = swallow_arrays(studies)
    preds = predict_swallows(bundle, all_arrays["x"])
    f13_rows, f14_rows, rule_labels, labels = [], [], [], []
    for i, study in enumerate(studies):
        sl = slice(15 * i, 15 * (i + 1))
        per_study = {
            "type_probs": preds["type_probs"][sl],
            "pressurization_probs": preds["pressurization_probs"][sl],
            "irp": preds["irp"][sl],
        }
        f13, f14, rule_label = study_features_from_predictions(
            per_study, all_arrays["position"][sl], bundle.rule_params, bundle.feature_config
        )
        f13_rows.append(f13)
        f14_rows.append(f14)
        rule_labels.append(int(rule_label))
        labels.append(int(study.diagnosis))
    return {
        "features13": np.array(f13_rows),
        "features14": np.array(f14_rows),
        "rule_labels": np.array(rule_labels, dtype=np.int64),
        "labels": np.array(labels, dtype=np.int64),
        "study_ids": [s.study_id for s in studies],
        "swallow_preds": preds,
        "swallow_arrays": all_arrays,
    }


def _study_model_soft(bundle: TrainedBundle, f13, f14, rule_label):
    """Soft distributions from every study model in the bundle."""
    out = {}
    if bundle.gbm_model is not None:
        nf = bundle.gbm_model.n_features
        x = (f14 if nf == 14 else f13)[None, :]
        margins = None
        if bundle.gbm_model.base == "rule-model":
            margins = gbm_mod.encode_base_margins(
                [int(rule_label)], 8, bundle.gbm_model.config.base_margin_scale
            )
        out["gbm"] = gbm_mod.predict_soft(bundle.gbm_model, x, base_margins=margins)[0]
    if bundle.ann_net is not None:
        x = (f14 if bundle.ann_n_features == 14 else f13)[None, :]
        out["ann"] = predict_soft(bundle.ann_net, x)[0]
    rule_soft = np.zeros(8)
    rule_soft[int(rule_label)] = 1.0
    out["rule"] = rule_soft
    return out


def predict_study(study, bundle: TrainedBundle) -> dict:
    """Diagnose one study; accepts a StudyRecord or a list of
    (PressureMatrix, position) pairs."""
    bundle.require_complete()
    if isinstance(study, StudyRecord):
        matrices = np.stack([s.matrix.values for s in study.swallows])[..., None]
        positions = [s.position for s in study.swallows]
        study_id = study.study_id
    else:
        try:
            pairs = list(study)
            matrices = np.stack(
                [
                    (m.values if isinstance(m, PressureMatrix) else PressureMatrix(m).values)
                    for m, _ in pairs
                ]
            )[..., None]
            positions = [pos for _, pos in pairs]
        except (TypeError, ValueError) as exc:
            raise DataError(f"malformed study input: {exc}") from exc
        study_id = "adhoc"

    preds = predict_swallows(bundle, matrices)
    f13, f14, rule_label = study_features_from_predictions(
        preds, positions, bundle.rule_params, bundle.feature_config
    )
    model_soft = _study_model_soft(bundle, f13, f14, rule_label)

    blended = None
    if bundle.blend is not None:
        member_rows = {name: model_soft[name][None, :] for name in bundle.blend.member_names}
        blended = bundle.blend.predict(member_rows)[0][0]
    final = blended if blended is not None else model_soft.get("gbm", model_soft.get("ann"))
    top2 = top_k_labels(final[None, :], 2)[0]

    return {
        "format": REPORT_FORMAT,
        "study_id": study_id,
        "swallows": [
            {
                "position": positions[i],
                "type_probs": [float(v) for v in preds["type_probs"][i]],
                "type": int(preds["type_probs"][i].argmax()),
                "pressurization_probs": [float(v) for v in preds["pressurization_probs"][i]],
                "pressurization": int(preds["pressurization_probs"][i].argmax()),
                "irp": float(preds["irp"][i]),
            }
            for i in range(len(positions))
        ],
        "features13": [float(v) for v in f13],
        "features14": [float(v) for v in f14],
        "rule_label": StudyDiagnosis(rule_label).name,
        "models": {name: [float(v) for v in dist] for name, dist in model_soft.items()},
        "blended": None if blended is None else [float(v) for v in blended],
        "top1": StudyDiagnosis(int(top2[0])).name,
        "top2": [StudyDiagnosis(int(t)).name for t in top2],
    }


REPORT_REQUIRED_KEYS = {
    "format", "study_id", "swallows", "features13", "features14",
    "rule_label", "models", "blended", "top1", "top2",
}


def validate_report(report: dict) -> None:
    """Structural check of a diagnosis report against the published schema."""
    missing = REPORT_REQUIRED_KEYS - set(report)
    if missing:
        raise DataError(f"report is missing keys: {sorted(missing)}")
    if report["format"] != REPORT_FORMAT:
        raise DataError(f"unsupported report format {report['format']!r}")
    if len(report["features13"]) != 13 or len(report["features14"]) != 14:
        raise DataError("report feature vectors have wrong lengths")
    for swallow in report["swallows"]:
        for key in ("position", "type_probs", "pressurization_probs", "irp"):
            if key not in swallow:
                raise DataError(f"swallow entry missing {key!r}")
    if len(report["top2"]) != 2 or report["top1"] != report["top2"][0]:
        raise DataError("top-2 list must start with the top-1 label")


# ---------------------------------------------------------------------------
# Training helpers shared by the pipeline and the CLI
# ---------------------------------------------------------------------------


def train_swallow_model(kind: str, studies, split, train_params: dict, seed: int):
    """Train one of the three swallow CNNs on the train/validation split."""
    if kind not in ("type", "pressurization", "irp"):
        raise ConfigError(f"unknown swallow model kind {kind!r}")
    arrays = {part: swallow_arrays(studies, split, part) for part in ("train", "validation")}
    kwargs = dict(train_params)
    if kind == "irp":
        tc = TrainConfig(loss="weighted-irp", seed=seed, **kwargs)
        y_train, y_valid = arrays["train"]["irp"], arrays["validation"]["irp"]
        net = build_irp_net(seed=seed)
    else:
        tc = TrainConfig(loss="cross-entropy", seed=seed, **kwargs)
        y_train = arrays["train"][kind]
        y_valid = arrays["validation"][kind]
        net = (
            build_swallow_type_net(seed=seed)
            if kind == "type"
            else build_pressurization_net(seed=seed)
        )
    x_train = _swallow_inputs(arrays["train"]["x"])
    x_valid = _swallow_inputs(arrays["validation"]["x"])
    net, history = train(net, (x_train, y_train), (x_valid, y_valid), tc)
    return net, history, tc


def train_gbm_stage(features14, labels, rule_labels, masks, gbm_config: dict):
    """Fit the boosted model per pipeline config; returns (model, margins)."""
    nf = gbm_config["n_features"]
    cfg_keys = (
        "max_depth", "eta", "max_rounds", "early_stop_patience",
        "reg_lambda", "gamma", "min_child_weight", "base_margin_scale",
    )
    cfg = gbm_mod.GbmConfig(**{k: gbm_config[k] for k in cfg_keys})
    use_base = gbm_config["base_learner"] == "rule"
    feats = np.asarray(features14)[:, :nf]
    bm = (
        gbm_mod.encode_base_margins(rule_labels, 8, cfg.base_margin_scale)
        if use_base
        else None
    )
    model = gbm_mod.fit(
        feats[masks["train"]],
        labels[masks["train"]],
        cfg,
        base_margins=None if bm is None else bm[masks["train"]],
        valid_features=feats[masks["validation"]],
        valid_labels=labels[masks["validation"]],
        valid_base_margins=None if bm is None else bm[masks["validation"]],
    )
    return model, feats, bm


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def run_pipeline(config=None, progress=None) -> dict:
    """Execute every stage; returns the artifact manifest (also written to
    ``report_dir/manifest.json``)."""
    config = load_config(config)
    report_dir = Path(config["report_dir"])
    report_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"format": "hrmmanifest-1", "config": config, "artifacts": {}, "metrics": {}}
    say = progress or (lambda msg: None)

    def _record(path: Path):
        manifest["artifacts"][str(path.relative_to(report_dir))] = _sha256(path)

    seed = int(config["seed"])
    stage = "synth"
    try:
        say("stage synth: generating studies")
        counts = config["synth"]["class_counts"]
        if counts is None:
            class_counts = desk_profile(int(config["synth"]["total_studies"]))
        else:
            class_counts = {StudyDiagnosis[name]: int(n) for name, n in counts.items()}
        studies = synth_dataset(
            class_counts, seed=seed, noise_sigma=config["synth"]["noise_sigma"]
        )

        stage = "split"
        say("stage split: stratified split")
        split = stratified_split(studies, tuple(config["split"]["fractions"]), seed=seed)

        stage = "dataset"
        say("stage dataset: writing dataset directory")
        save_dataset(studies, split, Path(config["dataset_dir"]))

        stage = "swallow-models"
        models_dir = report_dir / "models"
        models_dir.mkdir(parents=True, exist_ok=True)
        bundle = TrainedBundle(
            rule_params=RuleParams(*config["rule"]["params"]),
            feature_config=config["features"],
        )
        for i, kind in enumerate(("type", "pressurization", "irp")):
            say(f"stage swallow-models: training {kind} model")
            net, _, tc = train_swallow_model(
                kind, studies, split, config["swallow_training"][kind], seed + 101 + i
            )
            setattr(bundle, f"{kind}_net" if kind != "pressurization" else "pressurization_net", net)
            path = models_dir / f"{kind}.hrmnet"
            save_network(net, path, train_config=tc.as_dict())
            _record(path)

        stage = "features"
        say("stage features: swallow inference and aggregation")
        fx = compute_study_features(studies, bundle)
        parts = np.array([split.partition_of(sid) for sid in fx["study_ids"]])
        masks = {part: parts == part for part in ("train", "validation", "test")}
        labels = fx["labels"]
        rule_labels = fx["rule_labels"]
        feature_path = report_dir / "features14.csv"
        features_to_csv(fx["features14"], feature_path, n_features=14)
        _record(feature_path)
        index_path = report_dir / "features_index.json"
        index_path.write_text(
            json.dumps(
                {
                    "study_ids": fx["study_ids"],
                    "diagnosis": [int(l) for l in labels],
                    "split": list(parts),
                    "columns": list(FEATURE_NAMES_14),
                },
                sort_keys=True,
            )
        )
        _record(index_path)

        stage = "rule-model"
        say("stage rule-model: evaluating rule tree")
        rule_metrics = {
            part: float((rule_labels[m] == labels[m]).mean()) for part, m in masks.items()
        }
        grid_result = None
        if config["rule"]["grid_search"]:
            summaries = [summary_from_features(f) for f in fx["features13"]]
            grid_result = grid_search(
                (
                    [summaries[i] for i in np.nonzero(masks["train"])[0]],
                    labels[masks["train"]],
                ),
                (
                    [summaries[i] for i in np.nonzero(masks["validation"])[0]],
                    labels[masks["validation"]],
                ),
                {k: tuple(v) for k, v in config["rule"]["grid"].items()},
            )

        stage = "gbm"
        say("stage gbm: training boosted trees")
        gbm_model, feats, bm = train_gbm_stage(
            fx["features14"], labels, rule_labels, masks, config["gbm"]
        )
        bundle.gbm_model = gbm_model
        gbm_path = models_dir / "gbm.json"
        gbm_mod.save_model(gbm_model, gbm_path)
        _record(gbm_path)

        stage = "ann"
        say("stage ann: training dense classifier")
        ann_cfg = AnnConfig(
            layers=config["ann"]["layers"],
            width_k=config["ann"]["width_k"],
            n_features=config["ann"]["n_features"],
            class_weights=config["ann"]["class_weights"],
        )
        ann_tc = TrainConfig(
            lr=config["ann"]["lr"],
            batch_size=config["ann"]["batch_size"],
            max_epochs=config["ann"]["max_epochs"],
            patience=config["ann"]["patience"],
            restarts=config["ann"]["restarts"],
            seed=seed + 104,
        )
        ann_net, _ = train_study_ann(
            ann_cfg,
            (fx["features14"][masks["train"]], labels[masks["train"]]),
            (fx["features14"][masks["validation"]], labels[masks["validation"]]),
            ann_tc,
            seed=seed + 104,
        )
        bundle.ann_net = ann_net
        bundle.ann_n_features = ann_cfg.n_features
        ann_path = models_dir / "ann.hrmnet"
        save_network(ann_net, ann_path, train_config=ann_tc.as_dict())
        _record(ann_path)

        stage = "blend"
        say("stage blend: precision-weighted averaging")
        member_soft = {}
        for part in ("train", "validation", "test"):
            m = masks[part]
            hard = np.zeros((int(m.sum()), 8))
            hard[np.arange(int(m.sum())), rule_labels[m]] = 1.0
            member_soft[part] = {
                "gbm": gbm_mod.predict_soft(
                    gbm_model, feats[m], base_margins=None if bm is None else bm[m]
                ),
                "ann": predict_soft(ann_net, fx["features14"][m][:, : ann_cfg.n_features]),
                "rule": hard,
            }

        sweep_rows = None
        if config["blend"]["run_sweep"]:
            sweep_rows = blend_sweep(
                member_soft["train"], labels[masks["train"]],
                member_soft["validation"], labels[masks["validation"]],
            )
        blend_cfg = config["blend"]
        spec = BlendSpec(
            list(blend_cfg["members"]),
            output_kind=blend_cfg["output_kind"],
            precision_source=blend_cfg["precision_source"],
        )
        ps_part = "train" if blend_cfg["precision_source"] == "training" else "validation"
        spec.fit_precision(member_soft[ps_part], labels[masks[ps_part]])
        bundle.blend = spec
        blend_path = models_dir / "blend.json"
        save_blend(spec, blend_path)
        _record(blend_path)

        stage = "bundle"
        bundle_dir = report_dir / "bundle"
        save_bundle(bundle, bundle_dir)
        _record(bundle_dir / "bundle.json")

        stage = "eval"
        say("stage eval: metrics and reports")
        metrics_doc = {"format": "hrmeval-1", "swallow": {}, "study": {}, "rule": rule_metrics}
        swallow_mask = np.repeat(masks["test"], 15)
        sp = fx["swallow_preds"]
        sa = fx["swallow_arrays"]
        metrics_doc["swallow"]["type_accuracy"] = float(
            (sp["type_probs"][swallow_mask].argmax(axis=1) == sa["type"][swallow_mask]).mean()
        )
        metrics_doc["swallow"]["pressurization_accuracy"] = float(
            (
                sp["pressurization_probs"][swallow_mask].argmax(axis=1)
                == sa["pressurization"][swallow_mask]
            ).mean()
        )
        metrics_doc["swallow"]["irp_mae"] = mae_metric(
            sp["irp"][swallow_mask], sa["irp"][swallow_mask]
        )

        class_names = [d.name for d in StudyDiagnosis]
        study_soft_test = dict(member_soft["test"])
        blended_test, _ = spec.predict(member_soft["test"])
        study_soft_test["blend"] = blended_test
        for name, soft in study_soft_test.items():
            preds_top = top_k_labels(soft, 2)
            report = classification_report(
                preds_top[:, 0], labels[masks["test"]], 8, class_names, soft_preds=soft
            )
            metrics_doc["study"][name] = {
                "test_accuracy": report["accuracy"],
                "test_top2_accuracy": report["top2_accuracy"],
            }
            for fmt, suffix in (("json", "json"), ("csv", "csv"), ("svg-heatmap", "svg")):
                path = report_dir / f"study_{name}_test.{suffix}"
                report_export(report, path, fmt)
                _record(path)
        if grid_result is not None:
            metrics_doc["rule_grid_search"] = {
                "params": [grid_result.params.a1, grid_result.params.a2, grid_result.params.a3],
                "train_accuracy": grid_result.train_accuracy,
                "valid_accuracy": grid_result.valid_accuracy,
                "n_evaluated": grid_result.n_evaluated,
            }
        if sweep_rows is not None:
            metrics_doc["blend_sweep"] = [
                {
                    "members": list(r["members"]),
                    "output_kind": r["output_kind"],
                    "valid_top1": r["valid_top1"],
                    "valid_top2": r["valid_top2"],
                }
                for r in sweep_rows
            ]
        metrics_path = report_dir / "metrics.json"
        metrics_path.write_text(json.dumps(metrics_doc, sort_keys=True, indent=1))
        _record(metrics_path)
        manifest["metrics"] = metrics_doc
    except Exception as exc:  # noqa: BLE001 - abort with stage context
        manifest["failed_stage"] = stage
        (report_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=1, default=str)
        )
        raise

    (report_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    say("pipeline complete")
    return manifest
