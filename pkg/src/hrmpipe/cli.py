"""Command-line entry point.

Subcommands mirror the pipeline stages so each can run standalone against
a dataset directory: synth, split, train-swallow, train-study, rule,
blend, eval, predict, report, and run (the full pipeline). Exit codes:
0 success, 2 config error, 3 data error, 4 training divergence, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import gbm as gbm_mod
from .blending import BlendSpec, blend_sweep, save_blend
from .data import load_dataset, save_dataset, stratified_split
from .errors import (
    BundleError,
    ConfigError,
    DataError,
    DivergenceError,
    HrmError,
    IoError,
)
from .labels import StudyDiagnosis
from .metrics import report_export
from .nn.network import load_network, save_network
from .nn.training import TrainConfig, predict_soft
from .pipeline import (
    TrainedBundle,
    compute_study_features,
    load_bundle,
    load_config,
    predict_study,
    run_pipeline,
    train_gbm_stage,
    train_swallow_model,
)
from .rules import RuleParams, StudySummary, classify_merged, grid_search
from .study_ann import AnnConfig, train_study_ann
from .synth import desk_profile, synth_dataset


def _studies_with_split(dataset_dir, need_split=True):
    studies, split = load_dataset(dataset_dir)
    if need_split and split is None:
        raise DataError(
            f"dataset {dataset_dir} has no split assignment; run the 'split' subcommand"
        )
    return studies, split


def _swallow_bundle(models_dir, rule_params=None, feature_config=None) -> TrainedBundle:
    models_dir = Path(models_dir)
    bundle = TrainedBundle(rule_params=rule_params or RuleParams())
    for kind in ("type", "pressurization", "irp"):
        path = models_dir / f"{kind}.hrmnet"
        if not path.exists():
            raise BundleError(f"missing swallow model {path}")
        setattr(bundle, f"{kind}_net", load_network(path))
    if feature_config:
        bundle.feature_config = feature_config
    return bundle


def _parts_masks(study_ids, split):
    parts = np.array([split.partition_of(sid) for sid in study_ids])
    return {part: parts == part for part in ("train", "validation", "test")}


def _ground_truth_summaries(studies):
    summaries, labels = [], []
    for study in studies:
        supine = study.supine
        summaries.append(
            StudySummary.from_labels(
                [int(s.type_label) for s in supine],
                [int(s.pressurization_label) for s in supine],
                [s.irp_label for s in supine],
            )
        )
        labels.append(int(study.diagnosis))
    return summaries, np.array(labels)


# -- subcommand handlers ------------------------------------------------------


def _cmd_synth(args):
    if args.counts:
        counts = {StudyDiagnosis[k]: int(v) for k, v in json.loads(args.counts).items()}
    else:
        counts = desk_profile(args.total)
    studies = synth_dataset(counts, seed=args.seed, noise_sigma=args.noise)
    save_dataset(studies, None, args.out)
    print(f"wrote {len(studies)} studies to {args.out}")


def _cmd_split(args):
    studies, _ = _studies_with_split(args.dataset, need_split=False)
    split = stratified_split(studies, tuple(args.fractions), seed=args.seed)
    save_dataset(studies, split, args.dataset)
    print(
        f"split {len(studies)} studies into "
        f"{len(split.train)}/{len(split.validation)}/{len(split.test)}"
    )


def _cmd_train_swallow(args):
    studies, split = _studies_with_split(args.dataset)
    train_params = {
        "lr": args.lr,
        "batch_size": args.batch_size,
        "max_epochs": args.epochs,
        "patience": args.patience,
        "restarts": args.restarts,
    }
    net, history, tc = train_swallow_model(args.kind, studies, split, train_params, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.kind}.hrmnet"
    save_network(net, path, train_config=tc.as_dict())
    best = history[-1]["valid_metric"] if history else float("nan")
    print(f"saved {path} (last validation metric {best:.4f})")


def _cmd_train_study(args):
    studies, split = _studies_with_split(args.dataset)
    bundle = _swallow_bundle(args.models)
    fx = compute_study_features(studies, bundle)
    masks = _parts_masks(fx["study_ids"], split)
    out = Path(args.out or args.models)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "gbm":
        gbm_config = {
            "max_depth": args.depth,
            "eta": args.eta,
            "max_rounds": args.rounds,
            "early_stop_patience": args.patience,
            "reg_lambda": 1.0,
            "gamma": 0.0,
            "min_child_weight": 1.0,
            "base_learner": "rule" if args.base_learner else "none",
            "base_margin_scale": 1.0,
            "n_features": args.features,
        }
        model, feats, bm = train_gbm_stage(
            fx["features14"], fx["labels"], fx["rule_labels"], masks, gbm_config
        )
        path = gbm_mod.save_model(model, out / "gbm.json")
        preds = gbm_mod.predict_soft(
            model,
            feats[masks["validation"]],
            base_margins=None if bm is None else bm[masks["validation"]],
        ).argmax(axis=1)
        acc = float((preds == fx["labels"][masks["validation"]]).mean())
    else:
        cfg = AnnConfig(
            layers=args.layers,
            width_k=args.width_k,
            n_features=args.features,
            class_weights=args.class_weights,
        )
        net, _ = train_study_ann(
            cfg,
            (fx["features14"][masks["train"]], fx["labels"][masks["train"]]),
            (fx["features14"][masks["validation"]], fx["labels"][masks["validation"]]),
            seed=args.seed,
        )
        path = out / "ann.hrmnet"
        save_network(net, path)
        preds = predict_soft(
            net, fx["features14"][masks["validation"]][:, : cfg.n_features]
        ).argmax(axis=1)
        acc = float((preds == fx["labels"][masks["validation"]]).mean())
    print(f"saved {path} (validation accuracy {acc:.4f})")


def _rule_inputs(args):
    studies, split = _studies_with_split(args.dataset, need_split=args.command == "rule-search")
    if args.models:
        bundle = _swallow_bundle(args.models)
        fx = compute_study_features(studies, bundle)
        from .features import summary_from_features

        summaries = [summary_from_features(f) for f in fx["features13"]]
        labels = fx["labels"]
    else:
        summaries, labels = _ground_truth_summaries(studies)
    return studies, split, summaries, labels


def _cmd_rule_classify(args):
    args.command = "rule-classify"
    _, _, summaries, labels = _rule_inputs(args)
    params = RuleParams(*args.params)
    preds = np.array([int(classify_merged(s, params)) for s in summaries])
    print(f"rule accuracy over {len(labels)} studies: {(preds == labels).mean():.4f}")


def _cmd_rule_grid_search(args):
    args.command = "rule-search"
    studies, split, summaries, labels = _rule_inputs(args)
    masks = _parts_masks([s.study_id for s in studies], split)
    idx = {p: np.nonzero(masks[p])[0] for p in masks}
    grid = {
        "a1": tuple(args.a1),
        "a2": tuple(args.a2),
        "a3": tuple(args.a3),
    }
    result = grid_search(
        ([summaries[i] for i in idx["train"]], labels[masks["train"]]),
        ([summaries[i] for i in idx["validation"]], labels[masks["validation"]]),
        grid,
    )
    print(
        f"best params [{result.params.a1}, {result.params.a2}, {result.params.a3}] "
        f"train {result.train_accuracy:.4f} valid {result.valid_accuracy:.4f} "
        f"({result.n_evaluated} grid points)"
    )


def _cmd_blend(args):
    studies, split = _studies_with_split(args.dataset)
    models_dir = Path(args.models)
    bundle = _swallow_bundle(models_dir)
    fx = compute_study_features(studies, bundle)
    masks = _parts_masks(fx["study_ids"], split)
    gbm_model = gbm_mod.load_model(models_dir / "gbm.json") if (models_dir / "gbm.json").exists() else None
    ann_net = load_network(models_dir / "ann.hrmnet") if (models_dir / "ann.hrmnet").exists() else None
    member_soft = {}
    for part in ("train", "validation"):
        m = masks[part]
        soft = {}
        if gbm_model is not None:
            bm = None
            if gbm_model.base == "rule-model":
                bm = gbm_mod.encode_base_margins(
                    fx["rule_labels"][m], 8, gbm_model.config.base_margin_scale
                )
            soft["gbm"] = gbm_mod.predict_soft(
                gbm_model, fx["features14"][m][:, : gbm_model.n_features], base_margins=bm
            )
        if ann_net is not None:
            nf = ann_net.input_shape[0]
            soft["ann"] = predict_soft(ann_net, fx["features14"][m][:, :nf])
        hard = np.zeros((int(m.sum()), 8))
        hard[np.arange(int(m.sum())), fx["rule_labels"][m]] = 1.0
        soft["rule"] = hard
        member_soft[part] = soft
    missing = [m for m in args.members if m not in member_soft["train"]]
    if missing:
        raise BundleError(f"blend members not available: {missing}")
    spec = BlendSpec(
        list(args.members),
        output_kind=args.output_kind,
        precision_source=args.precision_source,
    )
    ps_part = "train" if args.precision_source == "training" else "validation"
    spec.fit_precision(member_soft[ps_part], fx["labels"][masks[ps_part]])
    path = save_blend(spec, models_dir / "blend.json")
    if args.sweep:
        for row in blend_sweep(
            member_soft["train"], fx["labels"][masks["train"]],
            member_soft["validation"], fx["labels"][masks["validation"]],
        ):
            print(
                f"{'+'.join(row['members']):24s} {row['output_kind']:16s} "
                f"top1 {row['valid_top1']:.4f} top2 {row['valid_top2']:.4f}"
            )
    print(f"saved {path}")


def _cmd_eval(args):
    studies, split = _studies_with_split(args.dataset)
    bundle = load_bundle(args.bundle)
    fx = compute_study_features(studies, bundle)
    masks = _parts_masks(fx["study_ids"], split)
    m = masks[args.partition]
    hits = top2_hits = 0
    ids = np.nonzero(m)[0]
    for i in ids:
        report = predict_study(studies[i], bundle)
        truth = StudyDiagnosis(fx["labels"][i]).name
        hits += report["top1"] == truth
        top2_hits += truth in report["top2"]
    n = len(ids)
    doc = {
        "partition": args.partition,
        "n_studies": int(n),
        "top1_accuracy": hits / n if n else 0.0,
        "top2_accuracy": top2_hits / n if n else 0.0,
    }
    print(json.dumps(doc, indent=1, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True))


def _cmd_predict(args):
    studies, _ = _studies_with_split(args.dataset, need_split=False)
    bundle = load_bundle(args.bundle)
    wanted = args.study_id
    matches = [s for s in studies if s.study_id == wanted] if wanted else studies[:1]
    if not matches:
        raise DataError(f"study {wanted!r} not found in dataset")
    report = predict_study(matches[0], bundle)
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} (top-1 {report['top1']}, top-2 {report['top2']})")
    else:
        print(text)


def _cmd_report(args):
    try:
        doc = json.loads(Path(args.metrics).read_text())
    except OSError as exc:
        raise IoError(f"cannot read metrics {args.metrics}: {exc}") from exc
    report_export(doc, args.out, args.format)
    print(f"wrote {args.out}")


def _cmd_run(args):
    overrides = args.config
    manifest = run_pipeline(overrides, progress=print)
    print(json.dumps(manifest["metrics"], indent=1, sort_keys=True))


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrmpipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--total", type=int, default=200)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--counts", help='JSON map like {"NEM": 8, "T2A": 2}')
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("split", help="assign a stratified train/validation/test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--fractions", type=float, nargs=3, default=(0.70, 0.15, 0.15))
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train-swallow", help="train one swallow-level CNN")
    p.add_argument("kind", choices=("type", "pressurization", "irp"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="models directory")
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_train_swallow)

    p = sub.add_parser("train-study", help="train a study-level model")
    p.add_argument("kind", choices=("gbm", "ann"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", required=True, help="directory with the swallow CNNs")
    p.add_argument("--out", help="output directory (defaults to --models)")
    p.add_argument("--features", type=int, choices=(13, 14), default=14)
    p.add_argument("--depth", type=int, default=4, help="gbm tree depth")
    p.add_argument("--eta", type=float, default=0.3)
    p.add_argument("--rounds", type=int, default=60)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--base-learner", action="store_true", help="seed gbm with rule margins")
    p.add_argument("--layers", type=int, default=6, help="ann dense layer count")
    p.add_argument("--width-k", type=int, default=1)
    p.add_argument("--class-weights", action="store_true")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_train_study)

    p = sub.add_parser("rule", help="rule-tree classification and grid search")
    rule_sub = p.add_subparsers(dest="rule_command", required=True)
    pc = rule_sub.add_parser("classify", help="classify studies with fixed parameters")
    pc.add_argument("--dataset", required=True)
    pc.add_argument("--models", help="swallow models dir (use predictions, not ground truth)")
    pc.add_argument("--params", type=float, nargs=3, default=(15.0, 0.2, 0.5))
    pc.set_defaults(func=_cmd_rule_classify)
    pg = rule_sub.add_parser("grid-search", help="exhaustive threshold search")
    pg.add_argument("--dataset", required=True)
    pg.add_argument("--models")
    pg.add_argument("--a1", type=float, nargs=3, default=(12.0, 17.0, 0.5),
                    metavar=("LO", "HI", "STEP"))
    pg.add_argument("--a2", type=float, nargs=3, default=(0.1, 0.3, 0.01))
    pg.add_argument("--a3", type=float, nargs=3, default=(0.4, 0.6, 0.01))
    pg.set_defaults(func=_cmd_rule_grid_search)

    p = sub.add_parser("blend", help="fit precision-weighted blending")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--members", nargs="+", default=("gbm", "ann"))
    p.add_argument("--output-kind", choices=("soft-probability", "single-index"),
                   default="soft-probability")
    p.add_argument("--precision-source", choices=("training", "validation"),
                   default="training")
    p.add_argument("--sweep", action="store_true", help="print the combination sweep")
    p.set_defaults(func=_cmd_blend)

    p = sub.add_parser("eval", help="evaluate a bundle end to end on one partition")
    p.add_argument("--dataset", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--partition", choices=("train", "validation", "test"), default="test")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="diagnose a single study")
    p.add_argument("--dataset", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--study-id")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("report", help="re-export a metrics JSON as csv or svg")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "csv", "svg-heatmap"), default="csv")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", help="JSON config path (defaults apply when omitted)")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4
    except IoError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 5
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 5
    except HrmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
