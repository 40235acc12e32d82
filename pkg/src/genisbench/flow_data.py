"""Flow-record tables: loading, taxonomy, exclusion, one-hot encoding, class summaries."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CATEGORIES = ("general", "time_based", "quantity_based", "hybrid", "context", "label")
LABEL_COLUMNS = ("BinaryLabel", "CategoryLabel", "SubCategoryLabel")
CATEGORICAL_DEFAULT = ("State", "Flags", "Protocol")


class FlowDataError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    category: str
    excluded: bool = False
    exclusion_reason: str | None = None
    categorical: bool = False

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise FlowDataError(f"unknown category {self.category!r} for {self.name}")

    @property
    def selectable(self) -> bool:
        return self.category != "label" and not self.excluded


class Taxonomy(Mapping[str, FeatureMeta]):
    """Ordered feature name -> FeatureMeta mapping."""

    def __init__(self, metas: Iterable[FeatureMeta]):
        self._metas: dict[str, FeatureMeta] = {}
        for m in metas:
            if m.name in self._metas:
                raise FlowDataError(f"duplicate taxonomy entry {m.name!r}")
            self._metas[m.name] = m

    def __getitem__(self, name: str) -> FeatureMeta:
        return self._metas[name]

    def __iter__(self):
        return iter(self._metas)

    def __len__(self) -> int:
        return len(self._metas)

    def category_of(self, name: str) -> str:
        return self._metas[name].category

    def with_entries(self, metas: Iterable[FeatureMeta]) -> "Taxonomy":
        merged = dict(self._metas)
        for m in metas:
            merged[m.name] = m
        return Taxonomy(merged.values())

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "category", "excluded", "reason", "categorical"])
            for m in self._metas.values():
                w.writerow([m.name, m.category, int(m.excluded), m.exclusion_reason or "", int(m.categorical)])


def _parse_taxonomy(lines: Iterable[str]) -> Taxonomy:
    metas = []
    for row in csv.DictReader(lines):
        metas.append(
            FeatureMeta(
                name=row["name"].strip(),
                category=row["category"].strip(),
                excluded=row.get("excluded", "0").strip() in ("1", "true", "True"),
                exclusion_reason=(row.get("reason") or "").strip() or None,
                categorical=row.get("categorical", "0").strip() in ("1", "true", "True"),
            )
        )
    return Taxonomy(metas)


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Read a taxonomy CSV (name,category,excluded,reason,categorical).

    With no path, the bundled GeNIS taxonomy is returned.
    """
    if path is None:
        text = resources.files("genisbench.data").joinpath("genis_taxonomy.csv").read_text("utf-8")
        return _parse_taxonomy(text.splitlines())
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_taxonomy(fh)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FlowTable:
    """Column-oriented flow dataset.

    Numeric columns are float64, categorical and label columns are arrays of
    str. Arrays are read-only; every transformation returns a new table.
    """

    numeric: dict[str, np.ndarray]
    categorical: dict[str, np.ndarray]
    labels: dict[str, np.ndarray]
    taxonomy: Taxonomy
    dropped_rows: int = 0
    exclusions: tuple[tuple[str, str], ...] = ()
    n_rows: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "numeric", {k: _frozen(np.asarray(v, dtype=np.float64)) for k, v in self.numeric.items()})
        object.__setattr__(self, "categorical", {k: _frozen(np.asarray(v, dtype=str)) for k, v in self.categorical.items()})
        object.__setattr__(self, "labels", {k: _frozen(np.asarray(v, dtype=str)) for k, v in self.labels.items()})
        names = list(self.numeric) + list(self.categorical) + list(self.labels)
        if len(set(names)) != len(names):
            raise FlowDataError("column names must be unique across column groups")
        lengths = {len(v) for group in (self.numeric, self.categorical, self.labels) for v in group.values()}
        if len(lengths) > 1:
            raise FlowDataError(f"columns have differing lengths: {sorted(lengths)}")
        n = lengths.pop() if lengths else 0
        for k, v in self.numeric.items():
            if not np.all(np.isfinite(v)):
                raise FlowDataError(f"numeric column {k!r} contains NaN or infinite values")
        object.__setattr__(self, "n_rows", n)

    @property
    def columns(self) -> list[str]:
        return list(self.numeric) + list(self.categorical) + list(self.labels)

    @property
    def feature_names(self) -> list[str]:
        """Numeric columns usable as model inputs."""
        return [n for n in self.numeric if n not in self.taxonomy or self.taxonomy[n].selectable]

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = self.feature_names if names is None else list(names)
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.numeric[n] for n in names])

    def label(self, name: str) -> np.ndarray:
        if name not in self.labels:
            raise FlowDataError(f"label column {name!r} missing")
        return self.labels[name]

    def take(self, rows) -> "FlowTable":
        rows = np.asarray(rows)
        return replace(
            self,
            numeric={k: v[rows] for k, v in self.numeric.items()},
            categorical={k: v[rows] for k, v in self.categorical.items()},
            labels={k: v[rows] for k, v in self.labels.items()},
        )

    def select_features(self, names: Sequence[str]) -> "FlowTable":
        missing = [n for n in names if n not in self.numeric]
        if missing:
            raise FlowDataError(f"unknown numeric features: {missing}")
        return replace(self, numeric={n: self.numeric[n] for n in names}, categorical={})

    def with_numeric(self, numeric: Mapping[str, np.ndarray]) -> "FlowTable":
        return replace(self, numeric=dict(numeric))

    def equals(self, other: "FlowTable") -> bool:
        def same(a, b):
            return list(a) == list(b) and all(np.array_equal(a[k], b[k]) for k in a)

        return (
            self.n_rows == other.n_rows
            and same(self.numeric, other.numeric)
            and same(self.categorical, other.categorical)
            and same(self.labels, other.labels)
        )


def _parse_float(text: str) -> float | None:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_flow_csv(path: str | Path, taxonomy: Taxonomy | None = None, max_unknown: int = 0) -> FlowTable:
    """Load a flow CSV against a taxonomy.

    Columns flagged categorical, excluded or label are kept as strings; the
    rest are parsed as float64. Rows with a non-finite or unparseable
    numeric cell are dropped and counted in ``FlowTable.dropped_rows``.
    Up to ``max_unknown`` header names missing from the taxonomy are
    tolerated (and dropped); more than that raises.
    """
    path = Path(path)
    if not path.exists():
        raise FlowDataError(f"missing file: {path}")
    taxonomy = load_taxonomy() if taxonomy is None else taxonomy
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise FlowDataError("empty input")
        header = [h.strip() for h in header]
        rows = list(reader)
    if len(set(header)) != len(header):
        raise FlowDataError("duplicate column names in header")

    unknown = [h for h in header if h not in taxonomy]
    if len(unknown) > max_unknown:
        raise FlowDataError(f"{len(unknown)} header column(s) not in taxonomy: {unknown[:10]}")
    for h in unknown:
        logger.warning("dropping unknown column %s", h)

    kinds = {}
    for h in header:
        if h in unknown:
            continue
        m = taxonomy[h]
        if m.category == "label":
            kinds[h] = "label"
        elif m.categorical or m.excluded:
            kinds[h] = "categorical"
        else:
            kinds[h] = "numeric"

    idx = {h: i for i, h in enumerate(header)}
    num_cols = [h for h in header if kinds.get(h) == "numeric"]
    keep_rows, parsed, dropped = [], [], 0
    for r in rows:
        if not r or (len(r) == 1 and not r[0].strip()):
            continue
        if len(r) != len(header):
            dropped += 1
            continue
        vals = [_parse_float(r[idx[h]]) for h in num_cols]
        if any(v is None for v in vals):
            dropped += 1
            continue
        keep_rows.append(r)
        parsed.append(vals)
    if dropped:
        logger.info("%s: dropped %d row(s) with unparseable numeric cells", path.name, dropped)

    num_arr = np.array(parsed, dtype=np.float64).reshape(len(parsed), len(num_cols))
    numeric = {h: num_arr[:, j] for j, h in enumerate(num_cols)}
    categorical = {h: [r[idx[h]] for r in keep_rows] for h in header if kinds.get(h) == "categorical"}
    labels = {h: [r[idx[h]] for r in keep_rows] for h in header if kinds.get(h) == "label"}
    return FlowTable(numeric, categorical, labels, taxonomy, dropped_rows=dropped)


def write_flow_csv(table: FlowTable, path: str | Path) -> None:
    cols = table.columns
    data = [table.numeric.get(c, table.categorical.get(c, table.labels.get(c))) for c in cols]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(table.n_rows):
            w.writerow([repr(float(d[i])) if c in table.numeric else d[i] for c, d in zip(cols, data)])


def apply_exclusion_policy(table: FlowTable) -> FlowTable:
    """Drop every column the taxonomy marks excluded, recording the reason."""
    tax = table.taxonomy
    removed = []

    def keep(group):
        out = {}
        for k, v in group.items():
            m = tax.get(k)
            if m is not None and m.excluded:
                removed.append((k, m.exclusion_reason or "excluded"))
            else:
                out[k] = v
        return out

    numeric, categorical = keep(table.numeric), keep(table.categorical)
    if not removed:
        return table
    for name, reason in removed:
        logger.debug("excluded %s (%s)", name, reason)
    return replace(table, numeric=numeric, categorical=categorical, exclusions=table.exclusions + tuple(removed))


def one_hot_encode(table: FlowTable, columns: Sequence[str] | None = None) -> FlowTable:
    """Replace categorical columns by ``<col>=<value>`` indicator columns.

    Categories are ordered lexicographically. Defaults to every categorical
    column still present in the table.
    """
    if columns is None:
        columns = list(table.categorical)
    for c in columns:
        if c in table.numeric:
            raise FlowDataError(f"column {c!r} is numeric, not categorical")
        if c not in table.categorical:
            raise FlowDataError(f"column {c!r} not found")
    numeric = dict(table.numeric)
    new_meta = []
    for c in columns:
        values = table.categorical[c]
        parent = table.taxonomy.get(c)
        cat = parent.category if parent is not None else "general"
        for level in sorted(set(values.tolist())):
            name = f"{c}={level}"
            numeric[name] = (values == level).astype(np.float64)
            new_meta.append(FeatureMeta(name, cat))
    categorical = {k: v for k, v in table.categorical.items() if k not in columns}
    return replace(table, numeric=numeric, categorical=categorical, taxonomy=table.taxonomy.with_entries(new_meta))


@dataclass(frozen=True)
class DatasetSummary:
    counts: dict[str, int]
    ratios: dict[str, float]

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "DatasetSummary":
        total = sum(counts.values())
        if total <= 0:
            raise FlowDataError("cannot summarize an empty table")
        return cls(dict(counts), {k: 100.0 * v / total for k, v in counts.items()})

    @property
    def n_rows(self) -> int:
        return sum(self.counts.values())


def summarize(table: FlowTable, label: str) -> DatasetSummary:
    values, counts = np.unique(table.label(label), return_counts=True)
    return DatasetSummary.from_counts({str(v): int(c) for v, c in zip(values, counts)})


@dataclass(frozen=True)
class LabelSpace:
    task: str
    classes: tuple[str, ...]
    benign_class: str

    def __post_init__(self):
        if self.task not in ("binary", "multiclass"):
            raise FlowDataError(f"unknown task {self.task!r}")
        if self.benign_class not in self.classes:
            raise FlowDataError("benign class must be one of the classes")
        if self.task == "binary" and len(self.classes) != 2:
            raise FlowDataError("binary task needs exactly 2 classes")
        if self.task == "multiclass" and len(self.classes) < 3:
            raise FlowDataError("multiclass task needs at least 3 classes")

    @property
    def label_column(self) -> str:
        return "BinaryLabel" if self.task == "binary" else "CategoryLabel"

    @property
    def benign_index(self) -> int:
        return self.classes.index(self.benign_class)

    @property
    def positive_class(self) -> str:
        """The attack class of a binary task."""
        return next(c for c in self.classes if c != self.benign_class)

    def encode(self, values: np.ndarray) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.classes)}
        try:
            return np.array([lookup[v] for v in values.tolist()], dtype=np.int64)
        except KeyError as exc:
            raise FlowDataError(f"label {exc.args[0]!r} not in {self.classes}") from None

    @classmethod
    def from_table(cls, table: FlowTable, task: str, label: str | None = None) -> "LabelSpace":
        label = label or ("BinaryLabel" if task == "binary" else "CategoryLabel")
        classes = tuple(sorted(set(table.label(label).tolist())))
        benign = [c for c in classes if c.lower() == "benign"]
        if not benign:
            raise FlowDataError(f"no benign class among {classes}")
        return cls(task, classes, benign[0])
