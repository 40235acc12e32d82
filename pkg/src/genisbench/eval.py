"""Confusion-matrix metrics, timing, and cross-validated grid search."""

from __future__ import annotations

import itertools
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .preprocess import stratified_folds

REPORT_COLUMNS = ("Model", "FS", "F1S", "ACC", "RCL", "PRC", "FPR", "TT", "TE", "IT")


class EvalError(ValueError):
    pass


@dataclass(eq=False)
class ConfusionMatrix:
    """``counts[i, j]`` = rows of true class ``classes[i]`` predicted as ``classes[j]``."""

    classes: tuple
    counts: np.ndarray

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise EvalError("counts must be a square matrix matching classes")
        if (self.counts < 0).any():
            raise EvalError("negative counts")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, label) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise EvalError(f"unknown class {label!r}") from None

    def to_dict(self) -> dict:
        return {"classes": [str(c) for c in self.classes], "counts": self.counts.tolist()}


def confusion(y_true, y_pred, classes: Sequence) -> ConfusionMatrix:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise EvalError("true and predicted labels differ in length")
    classes = list(classes)
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        ti = np.array([lookup[v] for v in y_true.tolist()], dtype=np.int64)
        pi = np.array([lookup[v] for v in y_pred.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise EvalError(f"label {exc.args[0]!r} not in classes") from None
    k = len(classes)
    counts = np.bincount(ti * k + pi, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(tuple(classes), counts)


def _ratio(num: float, den: float, what: str, warnings: list[str]) -> float:
    if den == 0:
        warnings.append(f"{what}: zero denominator, reported as 0")
        return 0.0
    return 100.0 * num / den


def _f1(p: float, r: float, what: str, warnings: list[str]) -> float:
    if p + r == 0:
        warnings.append(f"{what}: precision and recall both 0, reported as 0")
        return 0.0
    return 2.0 * p * r / (p + r)


@dataclass
class Metrics:
    """Percentages in [0, 100]."""

    f1s: float
    acc: float
    rcl: float
    prc: float
    fpr: float
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def binary_metrics(cm: ConfusionMatrix, positive) -> Metrics:
    """Precision, recall, F1, accuracy and FPR with ``positive`` as the attack class."""
    if cm.counts.shape != (2, 2):
        raise EvalError("binary metrics need a 2x2 confusion matrix")
    p = cm.index(positive)
    q = 1 - p
    c = cm.counts
    tp, fn, fp, tn = c[p, p], c[p, q], c[q, p], c[q, q]
    w: list[str] = []
    prc = _ratio(tp, tp + fp, "precision", w)
    rcl = _ratio(tp, tp + fn, "recall", w)
    f1 = _f1(prc, rcl, "f1", w)
    acc = _ratio(tp + tn, cm.total, "accuracy", w)
    fpr = _ratio(fp, fp + tn, "fpr", w)
    return Metrics(f1, acc, rcl, prc, fpr, warnings=w)


def macro_metrics(cm: ConfusionMatrix, benign) -> Metrics:
    """Unweighted one-vs-rest averages; FPR is benign rows predicted as any attack."""
    if len(cm.classes) < 2:
        raise EvalError("need at least two classes")
    c = cm.counts
    w: list[str] = []
    per_class: dict[str, dict[str, float]] = {}
    support, predicted = c.sum(axis=1), c.sum(axis=0)
    for i, name in enumerate(cm.classes):
        if support[i] == 0 and predicted[i] == 0:
            w.append(f"class {name!s} has no true or predicted rows, excluded from averages")
            continue
        tp = c[i, i]
        prc = _ratio(tp, predicted[i], f"precision[{name}]", w)
        rcl = _ratio(tp, support[i], f"recall[{name}]", w)
        per_class[str(name)] = {"prc": prc, "rcl": rcl, "f1s": _f1(prc, rcl, f"f1[{name}]", w), "support": int(support[i])}
    if not per_class:
        raise EvalError("no scorable classes")
    b = cm.index(benign)
    fpr = _ratio(support[b] - c[b, b], support[b], "fpr", w)
    acc = _ratio(np.trace(c), cm.total, "accuracy", w)
    mean = lambda key: float(np.mean([v[key] for v in per_class.values()]))  # noqa: E731
    return Metrics(mean("f1s"), acc, mean("rcl"), mean("prc"), fpr, per_class, w)


def task_metrics(y_true, y_pred, classes: Sequence, benign, task: str) -> tuple[ConfusionMatrix, Metrics]:
    """Confusion matrix plus binary metrics (attack = the non-benign class) or macro metrics."""
    cm = confusion(y_true, y_pred, classes)
    if task == "binary":
        positive = next(c for c in cm.classes if c != benign)
        return cm, binary_metrics(cm, positive)
    return cm, macro_metrics(cm, benign)


@dataclass
class EvalReport:
    model: str
    feature_set: str
    f1s: float
    acc: float
    rcl: float
    prc: float
    fpr: float
    tt_seconds: float
    it_seconds: float
    te_seconds: float | None = None
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    confusion: dict | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.feature_set not in ("full", "selected"):
            raise EvalError(f"unknown feature set tag {self.feature_set!r}")
        for name in ("f1s", "acc", "rcl", "prc", "fpr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0 + 1e-9:
                raise EvalError(f"{name}={v} outside [0, 100]")

    @classmethod
    def from_metrics(cls, model: str, feature_set: str, m: Metrics, tt: float, it: float, te: float | None = None, **kw) -> "EvalReport":
        return cls(model, feature_set, m.f1s, m.acc, m.rcl, m.prc, m.fpr, tt, it, te, m.per_class, list(m.warnings), **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        return cls(**dict(d))

    def row(self) -> list[str]:
        """Cells in human-table column order; percentages to 4 decimals, times to 2."""
        te = "-" if self.te_seconds is None else f"{self.te_seconds:.2f}"
        fs = "yes" if self.feature_set == "selected" else "no"
        pct = [f"{v:.4f}" for v in (self.f1s, self.acc, self.rcl, self.prc, self.fpr)]
        return [self.model, fs, *pct, f"{self.tt_seconds:.2f}", te, f"{self.it_seconds:.2f}"]


def format_table(reports: Sequence[EvalReport]) -> str:
    rows = [list(REPORT_COLUMNS)] + [r.row() for r in reports]
    widths = [max(len(r[i]) for r in rows) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(cell.ljust(wd) for cell, wd in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    return "\n".join(lines)


def parse_table(text: str) -> list[dict[str, Any]]:
    """Inverse of :func:`format_table` at rendered precision."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].split() != list(REPORT_COLUMNS):
        raise EvalError("not a results table")
    out = []
    for ln in lines[2:]:
        cells = ln.split()
        if len(cells) != len(REPORT_COLUMNS):
            raise EvalError(f"malformed table row: {ln!r}")
        rec: dict[str, Any] = {"Model": cells[0], "FS": cells[1] == "yes"}
        for name, cell in zip(REPORT_COLUMNS[2:], cells[2:]):
            rec[name] = None if cell == "-" else float(cell)
        out.append(rec)
    return out


def time_harness(action: Callable[[], Any]) -> float:
    """Wall seconds of ``action()`` on the monotonic clock."""
    return timed(action)[1]


def timed(action: Callable[[], Any]) -> tuple[Any, float]:
    t0 = time.perf_counter()
    result = action()
    return result, time.perf_counter() - t0


def mean_epoch_time(epoch_seconds: Sequence[float]) -> float:
    if not len(epoch_seconds):
        raise EvalError("no epochs logged")
    return float(np.mean(epoch_seconds))


@dataclass
class GridSpec:
    """Exhaustive grid for one model family.

    ``fit(params, X, y)`` returns an object with ``predict``; ``objective``
    is ``"f1"`` (binary, class ``positive`` is the attack) or ``"macro_f1"``.
    """

    family: str
    grid: dict[str, list]
    fit: Callable[[dict, np.ndarray, np.ndarray], Any]
    objective: str = "macro_f1"
    positive: int = 1
    k: int = 5

    def __post_init__(self):
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise EvalError("grid must be non-empty")
        if self.objective not in ("f1", "macro_f1"):
            raise EvalError(f"unknown objective {self.objective!r}")

    def candidates(self) -> list[dict]:
        keys = sorted(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]


@dataclass
class CandidateScore:
    params: dict
    fold_scores: list[float]
    fit_seconds: float
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores)) if self.fold_scores and not self.failed else float("-inf")

    def to_dict(self) -> dict:
        return {"params": self.params, "fold_scores": self.fold_scores, "mean": None if self.failed else self.mean, "error": self.error}


@dataclass
class GridResult:
    winner: dict
    scores: list[CandidateScore]

    def to_dict(self) -> dict:
        return {"winner": self.winner, "candidates": [s.to_dict() for s in self.scores]}


def _objective(spec: GridSpec, y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    classes = list(range(n_classes))
    cm = confusion(y_true, y_pred, classes)
    if spec.objective == "f1":
        return binary_metrics(cm, spec.positive).f1s
    benign = 0  # FPR is not part of the objective; any valid index will do
    return macro_metrics(cm, benign).f1s


def grid_search(spec: GridSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> GridResult:
    """Score every candidate on stratified k-fold CV and pick the best mean.

    Ties on the mean objective go to the earlier candidate in sorted-key
    cartesian order, which keeps the outcome independent of timing noise.
    Candidates whose fit raises are recorded as failed.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = int(y.max()) + 1
    plan = stratified_folds(y, spec.k, seed)
    results = []
    for params in spec.candidates():
        scores, secs = [], 0.0
        try:
            for tr, te in plan:
                model, dt = timed(lambda: spec.fit(params, X[tr], y[tr]))
                secs += dt
                scores.append(_objective(spec, y[te], model.predict(X[te]), n_classes))
            results.append(CandidateScore(params, scores, secs))
        except Exception as exc:  # a broken candidate must not end the search
            results.append(CandidateScore(params, scores, secs, f"{type(exc).__name__}: {exc}"))
    ok = [r for r in results if not r.failed]
    if not ok:
        raise EvalError("every grid candidate failed: " + "; ".join(r.error for r in results))
    best = max(range(len(results)), key=lambda i: (results[i].mean, -i))
    return GridResult(dict(results[best].params), results)
