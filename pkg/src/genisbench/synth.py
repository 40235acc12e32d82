"""Synthetic labeled flow tables with class-separated, heavy-tailed features."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .flow_data import FeatureMeta, FlowDataError, FlowTable, load_taxonomy

DEFAULT_RATIOS = {"DoS": 80.22, "Recon": 7.52, "Benign": 7.37, "Bruteforce": 4.89}

# the behavioral features chosen by the selection ensemble on the real data
DEFAULT_FEATURES = (
    "DstTCPBase", "SrcTCPBase", "DstWin", "SrcWin", "TotBytes", "TotPkts",
    "DstBytes", "SAppBytes", "SrcBytes",
    "Dur", "Min", "Mean", "Max", "RunTime", "Sum",
    "DstLoad", "Load", "Rate", "SrcLoad", "SrcRate",
)


@dataclass(frozen=True)
class SynthSpec:
    """Generation recipe.

    Every informative feature gets one of ``len(ratios)`` location levels per
    class (a seeded permutation), so each feature separates all classes to a
    degree set by ``separation / spread``. Quantity and hybrid features are
    log-normal, time features gamma distributed.
    """

    n_rows: int = 20_000
    ratios: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_RATIOS))
    features: tuple[str, ...] = DEFAULT_FEATURES
    separation: float = 1.0
    spread: float = 0.35
    gamma_shape: float = 16.0
    noise_columns: tuple[str, ...] = ("NoiseGauss",)
    constant_columns: tuple[str, ...] = ("ConstPad",)
    benign_class: str = "Benign"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ratios", dict(self.ratios))
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "noise_columns", tuple(self.noise_columns))
        object.__setattr__(self, "constant_columns", tuple(self.constant_columns))
        if abs(sum(self.ratios.values()) - 100.0) > 1e-9:
            raise FlowDataError(f"class ratios sum to {sum(self.ratios.values())}, not 100")
        if any(r <= 0 for r in self.ratios.values()):
            raise FlowDataError("every class ratio must be positive")
        if self.n_rows < len(self.ratios):
            raise FlowDataError("n_rows must be at least the number of classes")
        if self.benign_class not in self.ratios:
            raise FlowDataError(f"benign class {self.benign_class!r} missing from ratios")
        if min(class_counts(self.n_rows, self.ratios).values()) == 0:
            raise FlowDataError("a class would receive zero rows")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthSpec":
        d = dict(d)
        for k in ("features", "noise_columns", "constant_columns"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "SynthSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def class_counts(n_rows: int, ratios: Mapping[str, float]) -> dict[str, int]:
    """Largest-remainder apportionment: each count within 1 of ``n * ratio``."""
    exact = {c: n_rows * r / 100.0 for c, r in ratios.items()}
    counts = {c: int(np.floor(v)) for c, v in exact.items()}
    short = n_rows - sum(counts.values())
    for c in sorted(exact, key=lambda c: (-(exact[c] - counts[c]), c))[:short]:
        counts[c] += 1
    return counts


def synth_generate(spec: SynthSpec = SynthSpec()) -> FlowTable:
    """Draw a labeled table; rows are shuffled, FlowID gives the draw order."""
    tax = load_taxonomy()
    unknown = [f for f in spec.features if f not in tax]
    if unknown:
        raise FlowDataError(f"features not in taxonomy: {unknown}")
    rng = np.random.default_rng(spec.seed)
    classes = list(spec.ratios)
    counts = class_counts(spec.n_rows, spec.ratios)
    y = np.repeat(np.arange(len(classes)), [counts[c] for c in classes])
    y = y[rng.permutation(len(y))]
    n, k = len(y), len(classes)

    numeric = {}
    for f in spec.features:
        level = rng.permutation(k)[y].astype(np.float64)
        if tax[f].category == "time_based":
            scale = np.exp(rng.uniform(-3.0, 1.0) + spec.separation * level)
            numeric[f] = rng.gamma(spec.gamma_shape, scale / spec.gamma_shape)
        else:
            loc = rng.uniform(2.0, 6.0) + spec.separation * level
            numeric[f] = np.exp(loc + spec.spread * rng.standard_normal(n))
    for f in spec.noise_columns:
        numeric[f] = rng.standard_normal(n)
    for f in spec.constant_columns:
        numeric[f] = np.ones(n)

    categorical = {
        "FlowID": np.array([str(i) for i in range(n)]),
        "Ssaddr": np.array([str(v) for v in rng.integers(1, 2**31, n)]),
        "SrcAddr": np.array([f"10.0.{a}.{b}" for a, b in rng.integers(0, 255, (n, 2))]),
        "Protocol": rng.choice(np.array(["tcp", "udp", "icmp"]), n, p=[0.7, 0.25, 0.05]),
    }
    names = np.array(classes)[y]
    labels = {
        "BinaryLabel": np.where(names == spec.benign_class, "Benign", "Malicious"),
        "CategoryLabel": names,
    }
    extra = [FeatureMeta(f, "general") for f in (*spec.noise_columns, *spec.constant_columns) if f not in tax]
    return FlowTable(numeric, categorical, labels, tax.with_entries(extra))
