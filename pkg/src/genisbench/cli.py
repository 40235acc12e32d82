"""Command-line front end: one verb per pipeline stage plus the composite run."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

VERBS = ("ingest", "synth", "select", "train", "evaluate", "explain", "pipeline", "report")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--task", choices=("binary", "multiclass"))
    p.add_argument("--models", help="comma list from rf,gbdt_hist,gbdt_goss,mlp,lstm")
    p.add_argument("--select-k", type=int, dest="select_k")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--single-thread", action="store_true", dest="single_thread", help="pin numeric libraries to one thread")
    p.add_argument("--synth", help="JSON synthetic-data spec (used instead of a CSV input)")
    p.add_argument("--taxonomy", help="feature taxonomy CSV (default: the bundled GeNIS taxonomy)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genisbench", description="Flow-based intrusion detection benchmark.")
    sub = parser.add_subparsers(dest="verb", required=True)
    helps = {
        "ingest": "load a flow CSV, drop excluded columns, write a cleaned CSV and summary",
        "synth": "generate a synthetic labeled flow CSV",
        "select": "rank features with the five-method ensemble and keep the top k",
        "train": "fit models and write a model bundle",
        "evaluate": "score a model bundle on a test CSV",
        "explain": "Shapley attributions of a model bundle on a CSV",
        "pipeline": "run the whole benchmark and render reports",
        "report": "print the human table of a machine report",
    }
    for verb in VERBS:
        p = sub.add_parser(verb, help=helps[verb])
        _common(p)
        if verb in ("ingest", "select", "train"):
            p.add_argument("csv", nargs="?", help="flow CSV (relative paths resolve against $GENISBENCH_DATA_DIR)")
        if verb == "train":
            p.add_argument("--features", help="selection.json whose selected features to train on")
        if verb in ("evaluate", "explain"):
            p.add_argument("bundle", help="directory written by 'train'")
            p.add_argument("csv", help="flow CSV to score")
        if verb == "explain":
            p.add_argument("--rows", type=int, default=200, help="rows to explain")
        if verb == "pipeline":
            p.add_argument("--train-csv", dest="train_csv")
            p.add_argument("--test-csv", dest="test_csv")
        if verb == "report":
            p.add_argument("report", help="report.json")
    return parser


def _run_config(args, **extra):
    from .pipeline import RunConfig
    from .synth import SynthSpec

    base = json.loads(Path(args.config).read_text()) if args.config else {}
    for key, value in (
        ("task", args.task),
        ("seed", args.seed),
        ("out_dir", args.out),
        ("k", args.select_k),
    ):
        if value is not None:
            base[key] = value
    if args.models:
        base["models"] = [m.strip() for m in args.models.split(",") if m.strip()]
    if args.single_thread:
        base["single_thread"] = True
    if args.synth:
        base["synth"] = SynthSpec.load(args.synth).to_dict()
    if args.taxonomy:
        base["taxonomy"] = args.taxonomy
    base.update({k: v for k, v in extra.items() if v is not None})
    if base.get("synth") is not None and args.seed is not None:
        base["synth"] = {**base["synth"], "seed": args.seed}
    return RunConfig.from_dict(base)


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _taxonomy(args):
    from .flow_data import load_taxonomy

    return load_taxonomy(args.taxonomy) if args.taxonomy else None


def _input_table(args):
    from .flow_data import load_flow_csv
    from .pipeline import resolve_data_path
    from .synth import SynthSpec, synth_generate

    if args.csv:
        return load_flow_csv(resolve_data_path(args.csv), _taxonomy(args))
    if args.synth:
        spec = SynthSpec.load(args.synth)
        return synth_generate(spec if args.seed is None else SynthSpec.from_dict({**spec.to_dict(), "seed": args.seed}))
    raise SystemExit("error: give a CSV path or --synth")


def cmd_ingest(args) -> int:
    from .flow_data import apply_exclusion_policy, summarize, write_flow_csv

    table = apply_exclusion_policy(_input_table(args))
    out = _out(args)
    write_flow_csv(table, out / "flows.csv")
    summary = {
        "rows": table.n_rows,
        "dropped_rows": table.dropped_rows,
        "exclusions": [list(e) for e in table.exclusions],
        "labels": {name: summarize(table, name).counts for name in table.labels},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return 0


def cmd_synth(args) -> int:
    from .flow_data import write_flow_csv
    from .synth import SynthSpec, synth_generate

    spec = SynthSpec.load(args.synth) if args.synth else SynthSpec()
    if args.seed is not None:
        spec = SynthSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    out = _out(args)
    table = synth_generate(spec)
    write_flow_csv(table, out / "flows.csv")
    table.taxonomy.write(out / "taxonomy.csv")
    (out / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2))
    print(out / "flows.csv")
    return 0


def _encoded(args):
    from .flow_data import LabelSpace, apply_exclusion_policy, one_hot_encode

    table = one_hot_encode(apply_exclusion_policy(_input_table(args)))
    labels = LabelSpace.from_table(table, args.task or "multiclass")
    return table, labels


def cmd_select(args) -> int:
    from .featsel import RfeConfig, select_features

    table, labels = _encoded(args)
    k = args.select_k or 16
    result = select_features(table, labels.label_column, k, rfe=RfeConfig(seed=args.seed or 0))
    out = _out(args)
    result.save(out / "selection.json")
    (out / "selection.txt").write_text(result.render() + "\n")
    print(result.render())
    return 0


def cmd_train(args) -> int:
    from .pipeline import train_model
    from .preprocess import Scaler

    table, labels = _encoded(args)
    features = table.feature_names
    if args.features:
        features = json.loads(Path(args.features).read_text())["selected"]
    cfg = _run_config(args, train_csv=args.csv or "-", task=labels.task)
    scaler = Scaler.fit(table.matrix(features), features)
    X = scaler.transform_matrix(table.matrix(features))
    y = labels.encode(table.label(labels.label_column))
    out = _out(args)
    files = {}
    for name in cfg.models:
        trained = train_model(name, X, y, cfg, labels, features)
        path = out / (f"{name}.npz" if name in ("mlp", "lstm") else f"{name}.json")
        trained.model.save(path)
        files[name] = {"file": path.name, "tt_seconds": trained.tt_seconds, "te_seconds": trained.te_seconds, "config": trained.config}
        print(f"{name}: trained in {trained.tt_seconds:.2f}s -> {path}")
    bundle = {
        "task": labels.task,
        "classes": list(labels.classes),
        "benign": labels.benign_class,
        "features": list(features),
        "feature_set": "selected" if args.features else "full",
        "scaler": scaler.to_dict(),
        "models": files,
        "taxonomy": {f: table.taxonomy[f].category for f in features},
    }
    (out / "bundle.json").write_text(json.dumps(bundle, indent=2))
    return 0


def _load_bundle(path: str):
    from .neural import NetworkModel
    from .preprocess import Scaler
    from .trees import TreeEnsembleModel

    root = Path(path)
    bundle = json.loads((root / "bundle.json").read_text())
    models = {}
    for name, info in bundle["models"].items():
        f = root / info["file"]
        models[name] = NetworkModel.load(f) if f.suffix == ".npz" else TreeEnsembleModel.load(f)
    return bundle, Scaler.from_dict(bundle["scaler"]), models


def _bundle_matrix(bundle, scaler, csv_path, args):
    import numpy as np

    from .flow_data import LabelSpace, apply_exclusion_policy, load_flow_csv, one_hot_encode
    from .pipeline import resolve_data_path

    table = one_hot_encode(apply_exclusion_policy(load_flow_csv(resolve_data_path(csv_path), _taxonomy(args))))
    # indicator columns unseen in this file are all zero
    X = np.column_stack([table.numeric[f] if f in table.numeric else np.zeros(table.n_rows) for f in bundle["features"]])
    labels = LabelSpace(bundle["task"], tuple(bundle["classes"]), bundle["benign"])
    return scaler.transform_matrix(X), labels.encode(table.label(labels.label_column)), labels


def cmd_evaluate(args) -> int:
    import numpy as np

    from .eval import EvalReport, format_table, task_metrics, timed

    bundle, scaler, models = _load_bundle(args.bundle)
    X, y, labels = _bundle_matrix(bundle, scaler, args.csv, args)
    classes = np.array(labels.classes)
    tag = bundle.get("feature_set", "full")
    reports = []
    for name, model in models.items():
        pred, it = timed(lambda: model.predict(X))
        cm, m = task_metrics(classes[y], classes[pred], labels.classes, labels.benign_class, labels.task)
        info = bundle["models"][name]
        reports.append(EvalReport.from_metrics(name, tag, m, info["tt_seconds"], it, info["te_seconds"], confusion=cm.to_dict(), config=info["config"]))
    out = _out(args)
    (out / "evaluation.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    table = format_table(reports)
    (out / "evaluation.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_explain(args) -> int:
    import numpy as np

    from .explain import group_importance, sampled_shapley, stratified_background, tree_shap
    from .trees import TreeEnsembleModel

    bundle, scaler, models = _load_bundle(args.bundle)
    X, y, _ = _bundle_matrix(bundle, scaler, args.csv, args)
    seed = args.seed or 0
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(len(X), size=min(args.rows, len(X)), replace=False))
    out = _out(args)
    groups = {}
    for name, model in models.items():
        if isinstance(model, TreeEnsembleModel):
            attr = tree_shap(model, X[rows], feature_names=bundle["features"])
        else:
            bg = stratified_background(X, y, 100, seed)
            attr = sampled_shapley(model, X[rows], bg, 25, seed, None, bundle["features"])
        attr.write_csv(out / f"attribution_{name}.csv")
        groups[name] = group_importance(attr, bundle["taxonomy"]).to_dict()
    (out / "group_importance.json").write_text(json.dumps(groups, indent=2))
    from .pipeline import format_attributions

    print(format_attributions(groups))
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import render_report, run_pipeline

    cfg = _run_config(args, train_csv=args.train_csv, test_csv=args.test_csv)
    report = run_pipeline(cfg)
    if cfg.out_dir is None:
        print(report.human())
    else:
        paths = render_report(report, cfg.out_dir)
        print(report.human())
        print(f"reports written to {paths['machine'].parent}")
    return 0


def cmd_report(args) -> int:
    from .pipeline import Report, render_report

    report = Report.load(args.report)
    if args.out:
        render_report(report, args.out, ("human",))
    print(report.human())
    return 0


COMMANDS = {v: globals()[f"cmd_{v}"] for v in VERBS}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.single_thread:
        # must be set before the numeric libraries spin up their pools
        for var in _THREAD_VARS:
            os.environ[var] = "1"
    try:
        return COMMANDS[args.verb](args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
