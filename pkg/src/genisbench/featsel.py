"""Five feature scorers and the normalize-and-sum selection ensemble."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .flow_data import FlowTable
from .trees import ForestConfig, fit_random_forest, impurity_importance

METHODS = ("info_gain", "chi_squared", "rfe", "mad", "dispersion_ratio")


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class BinningConfig:
    n_bins: int = 10
    strategy: str = "equal_frequency"

    def __post_init__(self):
        if self.n_bins < 2:
            raise SelectionError("n_bins must be at least 2")
        if self.strategy != "equal_frequency":
            raise SelectionError(f"unsupported binning strategy {self.strategy!r}")


@dataclass(frozen=True)
class RfeConfig:
    step: float = 0.1
    n_estimators: int = 100
    max_depth: int = 16
    seed: int = 0


@dataclass
class MethodScore:
    method: str
    raw: dict[str, float]
    normalized: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.normalized:
            self.normalized = normalize_scores(self.raw)
        if set(self.raw) != set(self.normalized):
            raise SelectionError("raw and normalized scores must share features")


@dataclass
class SelectionResult:
    scores: list[MethodScore]
    aggregate: dict[str, float]
    ranking: list[str]
    selected: list[str]
    cumulative_importance: float

    @property
    def k(self) -> int:
        return len(self.selected)

    def top_fraction(self, k: int) -> float:
        """Share of total aggregate importance held by the first ``k`` ranked features."""
        total = sum(self.aggregate.values())
        if total <= 0:
            return 0.0
        return sum(self.aggregate[f] for f in self.ranking[:k]) / total

    def to_dict(self) -> dict:
        return {
            "methods": {s.method: {"raw": s.raw, "normalized": s.normalized} for s in self.scores},
            "aggregate": self.aggregate,
            "ranking": self.ranking,
            "selected": self.selected,
            "cumulative_importance": self.cumulative_importance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionResult":
        scores = [MethodScore(m, v["raw"], v["normalized"]) for m, v in d["methods"].items()]
        return cls(scores, d["aggregate"], d["ranking"], d["selected"], d["cumulative_importance"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def render(self) -> str:
        methods = [s.method for s in self.scores]
        width = max([len(f) for f in self.ranking] + [7])
        head = f"{'feature':<{width}}  " + "  ".join(f"{m[:10]:>10}" for m in methods) + f"  {'aggregate':>10}"
        lines = [head, "-" * len(head)]
        norm = {s.method: s.normalized for s in self.scores}
        for f in self.ranking:
            mark = "*" if f in self.selected else " "
            cells = "  ".join(f"{norm[m][f]:>10.4f}" for m in methods)
            lines.append(f"{f:<{width}}  {cells}  {self.aggregate[f]:>10.4f}{mark}")
        lines.append(f"selected k={self.k}, cumulative importance {100 * self.cumulative_importance:.2f}%")
        return "\n".join(lines)


def _features(table: FlowTable, features: Sequence[str] | None) -> list[str]:
    return table.feature_names if features is None else list(features)


def equal_frequency_bins(x: np.ndarray, n_bins: int) -> np.ndarray:
    """Bin index per value using quantile cut points; ties share a bin."""
    if len(x) < n_bins:
        raise SelectionError(f"fewer rows ({len(x)}) than bins ({n_bins})")
    cuts = np.unique(np.quantile(x, np.arange(1, n_bins) / n_bins))
    return np.searchsorted(cuts, x, side="right")


def contingency(codes: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bins x classes count table, dropping empty bins and classes."""
    _, ci = np.unique(codes, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    table = np.zeros((ci.max() + 1, yi.max() + 1))
    np.add.at(table, (ci, yi), 1.0)
    return table


def entropy_bits(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def information_gain(table: np.ndarray) -> float:
    """H(Y) - H(Y | X) in bits from a bins x classes contingency table."""
    n = table.sum()
    h_y = entropy_bits(table.sum(axis=0))
    h_cond = sum(row.sum() / n * entropy_bits(row) for row in table if row.sum() > 0)
    return max(h_y - h_cond, 0.0)


def chi_squared(table: np.ndarray) -> float:
    """Pearson statistic sum (O - E)^2 / E of the independence test."""
    table = np.asarray(table, dtype=np.float64)
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    mask = expected > 0
    return float((((table - expected) ** 2)[mask] / expected[mask]).sum())


def score_information_gain(table: FlowTable, label: str, binning: BinningConfig = BinningConfig(), features=None) -> MethodScore:
    y = table.label(label)
    raw = {f: information_gain(contingency(equal_frequency_bins(table.numeric[f], binning.n_bins), y)) for f in _features(table, features)}
    return MethodScore("info_gain", raw)


def score_chi_squared(table: FlowTable, label: str, binning: BinningConfig = BinningConfig(), features=None) -> MethodScore:
    y = table.label(label)
    raw = {f: chi_squared(contingency(equal_frequency_bins(table.numeric[f], binning.n_bins), y)) for f in _features(table, features)}
    return MethodScore("chi_squared", raw)


def rfe_order(X: np.ndarray, y: np.ndarray, config: RfeConfig = RfeConfig()) -> list[int]:
    """Column indices in elimination order; the last entry survives longest.

    Each round fits the forest on the surviving columns and removes the
    ``ceil(step * remaining)`` least important ones (ties: lower index first).
    """
    if not np.all(np.isfinite(X)):
        raise SelectionError("RFE needs finite feature values")
    _, y = np.unique(y, return_inverse=True)
    remaining = list(range(X.shape[1]))
    eliminated: list[int] = []
    forest_cfg = ForestConfig(n_estimators=config.n_estimators, max_depth=config.max_depth, seed=config.seed)
    while len(remaining) > 1:
        model = fit_random_forest(X[:, remaining], y, forest_cfg)
        imp = np.array(list(impurity_importance(model).values()))
        n_drop = min(math.ceil(config.step * len(remaining)), len(remaining) - 1)
        drop = [remaining[i] for i in np.lexsort((np.array(remaining), imp))[:n_drop]]
        eliminated.extend(drop)
        remaining = [c for c in remaining if c not in drop]
    return eliminated + remaining


def score_rfe(table: FlowTable, label: str, config: RfeConfig = RfeConfig(), features=None) -> MethodScore:
    """Score = elimination rank scaled to [0, 1]; the last survivor gets 1."""
    feats = _features(table, features)
    if not feats:
        raise SelectionError("RFE needs at least one feature")
    if len(feats) == 1:
        return MethodScore("rfe", {feats[0]: 1.0})
    order = rfe_order(table.matrix(feats), table.label(label), config)
    denom = len(order) - 1
    raw = {feats[c]: pos / denom for pos, c in enumerate(order)}
    return MethodScore("rfe", {f: raw[f] for f in feats})


def mean_absolute_deviation(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(np.abs(x - x.mean())))


def score_mad(table: FlowTable, features=None) -> MethodScore:
    return MethodScore("mad", {f: mean_absolute_deviation(table.numeric[f]) for f in _features(table, features)})


def dispersion_ratio(x: np.ndarray, formula: str = "am_gm") -> float:
    """Arithmetic over geometric mean of ``x - min(x) + 1`` (``am_gm``), or
    ``variance_ratio``: sqrt(sum of squared deviations / sum of squares) of the
    same shifted values."""
    s = np.asarray(x, dtype=np.float64) - np.min(x) + 1.0
    if formula == "am_gm":
        gm = math.exp(float(np.mean(np.log(s))))
        return float(np.mean(s) / gm)
    if formula == "variance_ratio":
        return float(math.sqrt(np.sum((s - s.mean()) ** 2) / np.sum(s * s)))
    raise SelectionError(f"unknown dispersion formula {formula!r}")


def score_dispersion_ratio(table: FlowTable, features=None, formula: str = "am_gm") -> MethodScore:
    return MethodScore("dispersion_ratio", {f: dispersion_ratio(table.numeric[f], formula) for f in _features(table, features)})


def normalize_scores(raw: Mapping[str, float]) -> dict[str, float]:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    if not raw:
        raise SelectionError("cannot normalize an empty score map")
    vals = np.array(list(raw.values()), dtype=np.float64)
    if np.isnan(vals).any():
        raise SelectionError("NaN in raw scores")
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return {k: 0.0 for k in raw}
    return {k: float((v - lo) / (hi - lo)) for k, v in raw.items()}


def aggregate_and_select(scores: Sequence[MethodScore], k: int) -> SelectionResult:
    """Sum normalized scores per feature; rank descending, ties by name."""
    if not scores:
        raise SelectionError("no method scores given")
    feats = set(scores[0].normalized)
    if any(set(s.normalized) != feats for s in scores):
        raise SelectionError("inconsistent feature sets across methods")
    if not 1 <= k <= len(feats):
        raise SelectionError(f"k={k} outside [1, {len(feats)}]")
    aggregate = {f: float(sum(s.normalized[f] for s in scores)) for f in sorted(feats)}
    ranking = sorted(aggregate, key=lambda f: (-aggregate[f], f))
    selected = ranking[:k]
    total = sum(aggregate.values())
    cumulative = sum(aggregate[f] for f in selected) / total if total > 0 else 1.0
    return SelectionResult(list(scores), aggregate, ranking, selected, cumulative)


def select_features(
    table: FlowTable,
    label: str,
    k: int = 16,
    binning: BinningConfig = BinningConfig(),
    rfe: RfeConfig = RfeConfig(),
    dispersion_formula: str = "am_gm",
    features: Sequence[str] | None = None,
) -> SelectionResult:
    """Run all five scorers on ``table`` (training rows only) and keep the top ``k``."""
    feats = _features(table, features)
    if not 1 <= k <= len(feats):
        raise SelectionError(f"k={k} outside [1, {len(feats)}]")
    scores = [
        score_information_gain(table, label, binning, feats),
        score_chi_squared(table, label, binning, feats),
        score_rfe(table, label, rfe, feats),
        score_mad(table, feats),
        score_dispersion_ratio(table, feats, dispersion_formula),
    ]
    return aggregate_and_select(scores, k)
