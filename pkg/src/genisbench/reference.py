"""Published GeNIS benchmark figures used as fixtures and consistency checks."""

from __future__ import annotations

# flows per class: (train, test)
BINARY_COUNTS = {"Malicious": (273124, 68282), "Benign": (21720, 5430)}
MULTICLASS_COUNTS = {
    "DoS": (236512, 59128),
    "Recon": (22186, 5547),
    "Benign": (21720, 5430),
    "Bruteforce": (14426, 3607),
}
MULTICLASS_RATIOS = {"DoS": 80.22, "Recon": 7.52, "Benign": 7.37, "Bruteforce": 4.89}
BENIGN_TEST_COUNT = MULTICLASS_COUNTS["Benign"][1]

SELECTED_BINARY = {
    "quantity_based": ("DstTCPBase", "SrcTCPBase", "DstWin", "SrcWin", "TotBytes", "TotPkts"),
    "time_based": ("Dur", "Min", "Mean", "RunTime", "Sum"),
    "hybrid": ("DstLoad", "Load", "Rate", "SrcLoad", "SrcRate"),
}
SELECTED_MULTICLASS = {
    "quantity_based": ("DstTCPBase", "SrcTCPBase", "DstWin", "TotBytes", "DstBytes", "SAppBytes", "SrcBytes", "SrcWin"),
    "time_based": ("Mean", "Max", "Sum", "Dur", "Min", "RunTime"),
    "hybrid": ("DstLoad", "SrcLoad"),
}

# benign false-positive rates (%) per model, (full features, selected features)
FPR_BINARY = {
    "rf": (0.1289, 0.2026),
    "gbdt_hist": (0.1289, 0.6262),
    "gbdt_goss": (0.1473, 0.2026),
    "lstm": (0.1289, 0.9761),
    "mlp": (0.1105, 1.0129),
}
FPR_MULTICLASS = {
    "rf": (0.0921, 0.1105),
    "gbdt_hist": (0.1105, 0.3499),
    "gbdt_goss": (0.1105, 0.1105),
    "lstm": (0.1289, 0.7182),
    "mlp": (0.1105, 0.9208),
}

TOP2_SHARE = 0.56
SELECTED_SHARE = 0.70


def flatten(groups: dict[str, tuple[str, ...]]) -> list[str]:
    return [f for names in groups.values() for f in names]


def implied_false_positives(fpr_percent: float, benign: int = BENIGN_TEST_COUNT) -> int:
    """Nearest whole number of benign flows flagged as attacks for a printed FPR."""
    return int(round(fpr_percent / 100.0 * benign))
