"""End-to-end benchmark run: ingest, select, train, evaluate, explain, report."""

from __future__ import annotations

import json
import logging
import os
import platform
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .eval import EvalReport, GridSpec, format_table, grid_search, parse_table, task_metrics, timed
from .explain import GroupImportance, group_importance, sampled_shapley, stratified_background, tree_shap
from .featsel import RfeConfig, SelectionResult, select_features
from .flow_data import FlowTable, LabelSpace, apply_exclusion_policy, load_flow_csv, load_taxonomy, one_hot_encode
from .neural import NetConfig, NetworkModel, fit_network
from .preprocess import Scaler, stratified_holdout
from .synth import SynthSpec, synth_generate
from .trees import ForestConfig, GbdtConfig, TreeEnsembleModel, fit_gbdt, fit_random_forest

logger = logging.getLogger(__name__)

MODEL_NAMES = ("rf", "gbdt_hist", "gbdt_goss", "mlp", "lstm")
TREE_MODELS = ("rf", "gbdt_hist", "gbdt_goss")
TIMING_KEYS = ("tt_seconds", "te_seconds", "it_seconds", "wall_clock_seconds", "started_at")
DATA_DIR_ENV = "GENISBENCH_DATA_DIR"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def default_grids() -> dict[str, dict[str, list]]:
    return {
        "rf": {},
        "gbdt_hist": {"max_depth": [4, 8, 16], "feature_subsample": [0.8, 0.9]},
        "gbdt_goss": {"min_samples_leaf": [2, 4]},
    }


@dataclass
class RunConfig:
    """One benchmark run. Paths may be relative to ``$GENISBENCH_DATA_DIR``.

    Without ``test_csv`` the input is split into train and a stratified
    ``test_fraction`` holdout. Network training holds out ``val_fraction``
    of the training rows for early stopping.
    """

    task: str = "multiclass"
    train_csv: str | None = None
    test_csv: str | None = None
    taxonomy: str | None = None
    synth: SynthSpec | None = None
    models: tuple[str, ...] = MODEL_NAMES
    select: bool = True
    k: int = 16
    seed: int = 0
    out_dir: str | None = None
    test_fraction: float = 0.2
    val_fraction: float = 0.3
    scale_trees: bool = False
    grid_search: bool = True
    grid_rows: int | None = 5000
    grids: dict[str, dict[str, list]] = field(default_factory=default_grids)
    n_estimators: int = 100
    rfe_estimators: int = 100
    rfe_step: float = 0.1
    architectures: tuple[tuple[int, int], ...] = ((128, 64), (64, 32))
    max_epochs: int = 30
    explain: bool = True
    explain_rows: int = 200
    n_permutations: int = 25
    background_size: int = 100
    single_thread: bool = False

    def __post_init__(self):
        self.models = tuple(self.models)
        self.architectures = tuple(tuple(a) for a in self.architectures)
        if isinstance(self.synth, Mapping):
            self.synth = SynthSpec.from_dict(self.synth)
        if self.task not in ("binary", "multiclass"):
            raise PipelineError("config", f"unknown task {self.task!r}")
        if not self.models:
            raise PipelineError("config", "at least one model is required")
        bad = [m for m in self.models if m not in MODEL_NAMES]
        if bad:
            raise PipelineError("config", f"unknown models {bad}; choose from {MODEL_NAMES}")
        if len(set(self.models)) != len(self.models):
            raise PipelineError("config", "duplicate model names")
        if self.k < 1:
            raise PipelineError("config", "k must be positive")
        if self.synth is None and self.train_csv is None:
            raise PipelineError("config", "need train_csv or a synth spec")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synth"] = None if self.synth is None else self.synth.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        return cls(**dict(d))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def resolve_data_path(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    root = os.environ.get(DATA_DIR_ENV)
    if not p.is_absolute() and root and not p.exists():
        p = Path(root) / p
    return p


class AccessLog:
    """Counts rows handed to each stage, keyed by ``(stage, split)``."""

    def __init__(self):
        self.counts: Counter = Counter()

    def record(self, stage: str, split: str, n_rows: int) -> None:
        self.counts[(stage, split)] += int(n_rows)

    def rows(self, stage: str, split: str) -> int:
        return self.counts.get((stage, split), 0)

    def to_dict(self) -> dict[str, int]:
        return {f"{s}:{p}": n for (s, p), n in sorted(self.counts.items())}


@dataclass
class Report:
    selection: dict | None
    evaluations: list[EvalReport]
    attributions: dict[str, dict[str, float]]
    metadata: dict
    grid: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "selection": self.selection,
            "evaluations": [e.to_dict() for e in self.evaluations],
            "attributions": self.attributions,
            "grid": self.grid,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Report":
        return cls(d["selection"], [EvalReport.from_dict(e) for e in d["evaluations"]], d["attributions"], d["metadata"], d.get("grid", {}))

    @classmethod
    def load(cls, path: str | Path) -> "Report":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def human(self) -> str:
        parts = [format_table(self.evaluations)]
        if self.attributions:
            parts.append(format_attributions(self.attributions))
        if self.selection:
            sel = self.selection
            parts.append(f"selected ({len(sel['selected'])}): " + ", ".join(sel["selected"]))
            parts.append(f"cumulative importance: {100 * sel['cumulative_importance']:.2f}%")
        return "\n\n".join(parts) + "\n"


def format_attributions(attr: Mapping[str, Mapping[str, float]]) -> str:
    groups = ["quantity_based", "time_based", "hybrid"]
    extra = sorted({g for v in attr.values() for g in v} - set(groups))
    cols = groups + extra
    head = ["Model"] + cols
    rows = [head] + [[m] + [f"{v.get(g, 0.0):.2f}" for g in cols] for m, v in attr.items()]
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def strip_timing(obj: Any) -> Any:
    """Copy of a report dict without wall-clock fields, for determinism checks."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def render_report(report: Report, out_dir: str | Path, formats: Sequence[str] = ("machine", "human")) -> dict[str, Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineError("render", f"cannot create output directory {out}: {exc}") from None
    written = {}
    for fmt in formats:
        if fmt == "machine":
            path = out / "report.json"
            text = json.dumps(report.to_dict(), indent=2)
        elif fmt == "human":
            path = out / "report.txt"
            text = report.human()
        else:
            raise PipelineError("render", f"unknown format {fmt!r}")
        try:
            path.write_text(text)
        except OSError as exc:
            raise PipelineError("render", f"cannot write {path}: {exc}") from None
        written[fmt] = path
    return written


def parse_human_report(text: str) -> list[dict]:
    """Results rows from a rendered human report."""
    return parse_table(text.split("\n\n")[0])


# data plumbing


def _align(table: FlowTable, names: Sequence[str]) -> FlowTable:
    """Give ``table`` exactly the numeric columns ``names``; absent indicator columns are zero."""
    numeric = {n: table.numeric[n] if n in table.numeric else np.zeros(table.n_rows) for n in names}
    return table.with_numeric(numeric)


def _load(cfg: RunConfig) -> tuple[FlowTable, FlowTable | None]:
    if cfg.synth is not None:
        return synth_generate(cfg.synth), None
    tax = load_taxonomy(resolve_data_path(cfg.taxonomy)) if cfg.taxonomy else None
    train = load_flow_csv(resolve_data_path(cfg.train_csv), tax)
    test = load_flow_csv(resolve_data_path(cfg.test_csv), tax) if cfg.test_csv else None
    return train, test


@dataclass
class PreparedData:
    train: FlowTable
    test: FlowTable
    labels: LabelSpace
    y_train: np.ndarray
    y_test: np.ndarray
    features: list[str]
    scaler: Scaler


def prepare(cfg: RunConfig, log: AccessLog | None = None) -> PreparedData:
    """Ingest, exclude, split, one-hot encode (vocabulary from train rows) and fit the scaler."""
    log = log or AccessLog()
    stage = "ingest"
    try:
        full, test = _load(cfg)
        full = apply_exclusion_policy(full)
        if test is None:
            stratify = LabelSpace.from_table(full, cfg.task).label_column
            tr, te = stratified_holdout(full.label(stratify), 1.0 - cfg.test_fraction, cfg.seed)
            train, test = full.take(tr), full.take(te)
        else:
            train, test = full, apply_exclusion_policy(test)
        stage = "encode"
        train = one_hot_encode(train)
        features = train.feature_names
        test = _align(one_hot_encode(test), features)
        test = replace(test, taxonomy=train.taxonomy)
        labels = LabelSpace.from_table(train, cfg.task)
        y_train = labels.encode(train.label(labels.label_column))
        y_test = labels.encode(test.label(labels.label_column))
        if cfg.select and cfg.k > len(features):
            raise PipelineError("select", f"k={cfg.k} exceeds the {len(features)} available features")
        stage = "scale"
        log.record("scale", "train", train.n_rows)
        scaler = Scaler.fit(train.matrix(features), features)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, f"{type(exc).__name__}: {exc}") from exc
    return PreparedData(train, test, labels, y_train, y_test, features, scaler)


# model families


def _tree_fit(name: str, cfg: RunConfig, n_classes: int, names: Sequence[str]) -> Callable[[dict, np.ndarray, np.ndarray], TreeEnsembleModel]:
    def fit(params: dict, X: np.ndarray, y: np.ndarray) -> TreeEnsembleModel:
        if name == "rf":
            return fit_random_forest(X, y, ForestConfig(n_estimators=cfg.n_estimators, seed=cfg.seed, **params), names, n_classes)
        mode = "histogram" if name == "gbdt_hist" else "goss"
        return fit_gbdt(X, y, GbdtConfig(mode=mode, n_estimators=cfg.n_estimators, seed=cfg.seed, **params), names, n_classes)

    return fit


def _grid_rows(y: np.ndarray, limit: int | None, seed: int) -> np.ndarray:
    if limit is None or len(y) <= limit:
        return np.arange(len(y))
    rows, _ = stratified_holdout(y, limit / len(y), seed)
    return rows


@dataclass
class TrainedModel:
    name: str
    model: Any
    tt_seconds: float
    te_seconds: float | None = None
    config: dict = field(default_factory=dict)
    grid: dict | None = None


def train_model(name: str, X: np.ndarray, y: np.ndarray, cfg: RunConfig, labels: LabelSpace, names: Sequence[str]) -> TrainedModel:
    n_classes = len(labels.classes)
    if name in TREE_MODELS:
        fit = _tree_fit(name, cfg, n_classes, names)
        grid = cfg.grids.get(name) or {}
        params, grid_out = {}, None
        if cfg.grid_search and grid:
            rows = _grid_rows(y, cfg.grid_rows, cfg.seed)
            objective = "f1" if labels.task == "binary" else "macro_f1"
            positive = labels.classes.index(labels.positive_class) if labels.task == "binary" else 1
            spec = GridSpec(name, grid, fit, objective, positive)
            result = grid_search(spec, X[rows], y[rows], cfg.seed)
            params, grid_out = result.winner, result.to_dict()
        model, tt = timed(lambda: fit(params, X, y))
        return TrainedModel(name, model, tt, None, {"model": name, **params}, grid_out)

    # networks: fixed architectures compared on held-out validation loss
    tr, va = stratified_holdout(y, 1.0 - cfg.val_fraction, cfg.seed)
    best, compared = None, []
    for hidden in cfg.architectures:
        net_cfg = NetConfig(arch=name, hidden=tuple(hidden), max_epochs=cfg.max_epochs, seed=cfg.seed)
        (model, log), tt = timed(lambda: fit_network(X[tr], y[tr], X[va], y[va], net_cfg, n_classes, names, labels.classes))
        score = min(log.val_loss)
        compared.append({"hidden": list(hidden), "best_val_loss": score, "best_val_accuracy": log.val_accuracy[log.best_epoch] if log.val_accuracy else None, "epochs": log.epochs_run, "best_epoch": log.best_epoch})
        if best is None or score < best[0]:
            best = (score, model, log, tt, hidden)
    score, model, log, tt, hidden = best
    config = {"model": name, "hidden": list(hidden), "epochs": log.epochs_run, "best_epoch": log.best_epoch, "architectures": compared}
    return TrainedModel(name, model, tt, log.mean_epoch_seconds, config)


def explain_model(trained: TrainedModel, X_test: np.ndarray, X_train: np.ndarray, y_train: np.ndarray, names: Sequence[str], taxonomy, cfg: RunConfig) -> GroupImportance:
    """Per-category attribution on up to ``explain_rows`` test rows, explaining each row's predicted class."""
    rng = np.random.default_rng(cfg.seed)
    rows = np.sort(rng.choice(len(X_test), size=min(cfg.explain_rows, len(X_test)), replace=False))
    X = X_test[rows]
    if isinstance(trained.model, TreeEnsembleModel):
        attr = tree_shap(trained.model, X, target=None, feature_names=names)
    else:
        bg = stratified_background(X_train, y_train, cfg.background_size, cfg.seed)
        attr = sampled_shapley(trained.model, X, bg, cfg.n_permutations, cfg.seed, None, names)
    return group_importance(attr, taxonomy)


def _save_model(trained: TrainedModel, out: Path, tag: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(trained.model, NetworkModel):
        trained.model.save(out / f"{trained.name}_{tag}.npz")
    else:
        trained.model.save(out / f"{trained.name}_{tag}.json")


def run_pipeline(cfg: RunConfig, access_log: AccessLog | None = None) -> Report:
    """Execute the full benchmark for every configured model on the full and selected feature sets."""
    t_start = time.perf_counter()
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    log = access_log if access_log is not None else AccessLog()
    data = prepare(cfg, log)
    label_col = data.labels.label_column

    selection: SelectionResult | None = None
    if cfg.select:
        log.record("select", "train", data.train.n_rows)
        try:
            selection = select_features(
                data.train, label_col, cfg.k, rfe=RfeConfig(step=cfg.rfe_step, n_estimators=cfg.rfe_estimators, seed=cfg.seed), features=data.features
            )
        except Exception as exc:
            raise PipelineError("select", f"{type(exc).__name__}: {exc}") from exc

    raw_tr, raw_te = data.train.matrix(data.features), data.test.matrix(data.features)
    scaled_tr, scaled_te = data.scaler.transform_matrix(raw_tr), data.scaler.transform_matrix(raw_te)
    variants = [("full", list(data.features))]
    if selection is not None:
        variants.append(("selected", list(selection.selected)))

    out = Path(cfg.out_dir) if cfg.out_dir else None
    evaluations, grids, attributions = [], {}, {}
    explain_variant = variants[-1][0]
    for name in cfg.models:
        for tag, feats in variants:
            cols = [data.features.index(f) for f in feats]
            scaled = name not in TREE_MODELS or cfg.scale_trees
            Xtr, Xte = (scaled_tr[:, cols], scaled_te[:, cols]) if scaled else (raw_tr[:, cols], raw_te[:, cols])
            log.record("train", "train", len(Xtr))
            try:
                trained = train_model(name, Xtr, data.y_train, cfg, data.labels, feats)
            except Exception as exc:
                raise PipelineError("train", f"{name}/{tag}: {type(exc).__name__}: {exc}") from exc
            log.record("evaluate", "test", len(Xte))
            pred, it = timed(lambda: trained.model.predict(Xte))
            classes = data.labels.classes
            cm, metrics = task_metrics(np.array(classes)[data.y_test], np.array(classes)[pred], classes, data.labels.benign_class, cfg.task)
            evaluations.append(EvalReport.from_metrics(name, tag, metrics, trained.tt_seconds, it, trained.te_seconds, confusion=cm.to_dict(), config=trained.config))
            if trained.grid is not None:
                grids[f"{name}/{tag}"] = trained.grid
            if cfg.explain and tag == explain_variant:
                log.record("explain", "test", min(cfg.explain_rows, len(Xte)))
                try:
                    gi = explain_model(trained, Xte, Xtr, data.y_train, feats, data.train.taxonomy, cfg)
                except Exception as exc:
                    raise PipelineError("explain", f"{name}: {type(exc).__name__}: {exc}") from exc
                attributions[name] = gi.to_dict()
            if out is not None:
                _save_model(trained, out / "models", tag)

    metadata = {
        "seed": cfg.seed,
        "task": cfg.task,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "n_train": data.train.n_rows,
        "n_test": data.test.n_rows,
        "features": list(data.features),
        "exclusions": [list(e) for e in data.train.exclusions],
        "classes": list(data.labels.classes),
        "config": cfg.to_dict(),
        "row_access": log.to_dict(),
        "started_at": started,
        "wall_clock_seconds": time.perf_counter() - t_start,
    }
    report = Report(None if selection is None else selection.to_dict(), evaluations, attributions, metadata, grids)
    if out is not None:
        render_report(report, out)
        if selection is not None:
            selection.save(out / "selection.json")
    return report
