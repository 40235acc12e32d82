import numpy as np
import pytest

from genisbench.flow_data import (
    DatasetSummary,
    FeatureMeta,
    FlowDataError,
    LabelSpace,
    apply_exclusion_policy,
    load_flow_csv,
    load_taxonomy,
    one_hot_encode,
    summarize,
    write_flow_csv,
)
from genisbench.reference import BINARY_COUNTS, MULTICLASS_COUNTS, MULTICLASS_RATIOS

from conftest import make_table, write_csv


def test_taxonomy_counts(taxonomy):
    cats = [m.category for m in taxonomy.values()]
    assert len(taxonomy) == 125
    assert cats.count("general") == 17
    assert cats.count("quantity_based") == 38
    assert cats.count("time_based") == 28
    assert cats.count("hybrid") == 10
    assert cats.count("context") == 29
    assert cats.count("label") == 3


def test_label_columns_never_selectable(taxonomy):
    for name in ("BinaryLabel", "CategoryLabel", "SubCategoryLabel"):
        assert not taxonomy[name].selectable


def test_every_context_feature_excluded(taxonomy):
    assert all(m.excluded for m in taxonomy.values() if m.category == "context")


def test_load_drops_unparseable_rows(tmp_path):
    path = write_csv(
        tmp_path / "f.csv",
        ["Dur", "TotPkts", "BinaryLabel"],
        [["1.5", "3", "Benign"], ["x", "4", "Benign"], ["2.0", "5", "Malicious"], ["3.0", "6", "Malicious"]],
    )
    table = load_flow_csv(path)
    assert table.n_rows == 3
    assert table.dropped_rows == 1
    np.testing.assert_array_equal(table.numeric["Dur"], [1.5, 2.0, 3.0])


def test_load_drops_non_finite(tmp_path):
    path = write_csv(tmp_path / "f.csv", ["Dur", "BinaryLabel"], [["nan", "Benign"], ["inf", "Benign"], ["1", "Benign"]])
    table = load_flow_csv(path)
    assert table.n_rows == 1 and table.dropped_rows == 2


def test_empty_file_is_error(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(FlowDataError, match="empty input"):
        load_flow_csv(path)


def test_missing_file_is_error(tmp_path):
    with pytest.raises(FlowDataError, match="missing file"):
        load_flow_csv(tmp_path / "nope.csv")


def test_unknown_column_threshold(tmp_path):
    path = write_csv(tmp_path / "f.csv", ["Dur", "Mystery", "BinaryLabel"], [["1", "2", "Benign"]])
    with pytest.raises(FlowDataError, match="not in taxonomy"):
        load_flow_csv(path)
    table = load_flow_csv(path, max_unknown=1)
    assert "Mystery" not in table.columns


def test_load_twice_identical(tmp_path, rng):
    rows = [[repr(float(v)), str(int(p)), "tcp", "Benign" if i % 2 else "Malicious"] for i, (v, p) in enumerate(zip(rng.random(10), rng.integers(1, 9, 10)))]
    path = write_csv(tmp_path / "f.csv", ["Dur", "TotPkts", "Protocol", "BinaryLabel"], rows)
    assert load_flow_csv(path).equals(load_flow_csv(path))


def test_write_load_round_trip(tmp_path, rng):
    rows = [[repr(float(v)), "udp" if i % 3 else "tcp", "DoS"] for i, v in enumerate(rng.normal(size=12) * 1e6)]
    path = write_csv(tmp_path / "f.csv", ["Rate", "Protocol", "CategoryLabel"], rows)
    table = load_flow_csv(path)
    write_flow_csv(table, tmp_path / "g.csv")
    again = load_flow_csv(tmp_path / "g.csv")
    assert again.equals(table)
    assert again.columns == table.columns


def test_table_invariants(taxonomy):
    with pytest.raises(FlowDataError, match="lengths"):
        make_table({"Dur": [1.0, 2.0]}, {"BinaryLabel": ["a"]})
    with pytest.raises(FlowDataError, match="NaN"):
        make_table({"Dur": [np.nan]}, {"BinaryLabel": ["a"]})
    with pytest.raises(FlowDataError, match="unique"):
        make_table({"Dur": [1.0]}, {"Dur": ["a"]})


def test_exclusion_policy_reasons():
    t = make_table({"Dur": [1.0, 2.0]}, {"BinaryLabel": ["Benign", "Malicious"]}, {"FlowID": ["1", "2"], "Seq": ["5", "6"], "Ssaddr": ["x", "y"]})
    out = apply_exclusion_policy(t)
    assert list(out.numeric) == ["Dur"]
    assert not out.categorical
    reasons = dict(out.exclusions)
    assert reasons["FlowID"] == "exporter artifact"
    assert reasons["Seq"] == "exporter artifact"
    assert reasons["Ssaddr"] == "topology-dependent"
    assert "BinaryLabel" in out.labels


def test_exclusion_identity_and_idempotence():
    t = make_table({"Dur": [1.0]}, {"BinaryLabel": ["Benign"]})
    assert apply_exclusion_policy(t) is t
    t2 = make_table({"Dur": [1.0]}, {"BinaryLabel": ["Benign"]}, {"SrcAddr": ["1.2.3.4"]})
    once = apply_exclusion_policy(t2)
    twice = apply_exclusion_policy(once)
    assert twice.equals(once) and twice.exclusions == once.exclusions


def test_one_hot_protocol():
    t = make_table({"Dur": [1.0, 2.0, 3.0, 4.0]}, {"BinaryLabel": ["a"] * 4}, {"Protocol": ["udp", "tcp", "icmp", "tcp"]})
    out = one_hot_encode(t, ["Protocol"])
    cols = ["Protocol=icmp", "Protocol=tcp", "Protocol=udp"]
    assert [c for c in out.numeric if c.startswith("Protocol")] == cols
    block = out.matrix(cols)
    np.testing.assert_array_equal(block.sum(axis=1), 1.0)
    assert out.taxonomy["Protocol=tcp"].category == "general"
    assert "Protocol" not in out.categorical


def test_one_hot_constant_column():
    t = make_table({"Dur": [1.0, 2.0]}, {"BinaryLabel": ["a", "b"]}, {"State": ["CON", "CON"]})
    out = one_hot_encode(t)
    np.testing.assert_array_equal(out.numeric["State=CON"], [1.0, 1.0])


def test_one_hot_errors():
    t = make_table({"Dur": [1.0]}, {"BinaryLabel": ["a"]}, {"State": ["CON"]})
    with pytest.raises(FlowDataError, match="numeric"):
        one_hot_encode(t, ["Dur"])
    with pytest.raises(FlowDataError, match="not found"):
        one_hot_encode(t, ["Flags"])


def test_genis_schema_encodes_to_87_inputs(taxonomy):
    # one row per observed level; 3 protocols, 4 states, 2 flag patterns
    n = 4
    numeric = {m.name: np.arange(n, dtype=float) for m in taxonomy.values() if not m.excluded and not m.categorical and m.category != "label"}
    categorical = {m.name: ["0"] * n for m in taxonomy.values() if m.excluded or m.categorical}
    categorical["Protocol"] = ["tcp", "udp", "icmp", "tcp"]
    categorical["State"] = ["CON", "FIN", "INT", "RST"]
    categorical["Flags"] = ["e", "e s", "e", "e s"]
    labels = {m.name: ["x"] * n for m in taxonomy.values() if m.category == "label"}
    table = one_hot_encode(apply_exclusion_policy(make_table(numeric, labels, categorical, taxonomy)))
    assert len(table.feature_names) == 87


def test_summary_ratios_from_reference_counts():
    binary = DatasetSummary.from_counts({k: sum(v) for k, v in BINARY_COUNTS.items()})
    assert binary.ratios["Malicious"] == pytest.approx(92.63, abs=0.01)
    assert binary.ratios["Benign"] == pytest.approx(7.37, abs=0.01)
    multi = DatasetSummary.from_counts({k: sum(v) for k, v in MULTICLASS_COUNTS.items()})
    for cls, ratio in MULTICLASS_RATIOS.items():
        assert multi.ratios[cls] == pytest.approx(ratio, abs=0.01)
    assert sum(multi.ratios.values()) == pytest.approx(100.0, abs=1e-9)
    assert multi.n_rows == sum(sum(v) for v in MULTICLASS_COUNTS.values())


def test_summarize_single_class():
    t = make_table({"Dur": np.arange(10.0)}, {"CategoryLabel": ["DoS"] * 10})
    s = summarize(t, "CategoryLabel")
    assert s.counts == {"DoS": 10} and s.ratios == {"DoS": 100.0}
    with pytest.raises(FlowDataError):
        summarize(t, "BinaryLabel")


def test_label_space():
    t = make_table({"Dur": np.arange(4.0)}, {"CategoryLabel": ["DoS", "benign", "Recon", "DoS"]})
    ls = LabelSpace.from_table(t, "multiclass")
    assert ls.classes == ("DoS", "Recon", "benign") and ls.benign_class == "benign"
    np.testing.assert_array_equal(ls.encode(t.label("CategoryLabel")), [0, 2, 1, 0])
    with pytest.raises(FlowDataError):
        LabelSpace("binary", ("a", "b", "c"), "a")
    with pytest.raises(FlowDataError):
        LabelSpace("multiclass", ("a", "b"), "a")
    with pytest.raises(FlowDataError):
        LabelSpace("binary", ("a", "b"), "z")


def test_taxonomy_override(tmp_path, taxonomy):
    extended = taxonomy.with_entries([FeatureMeta("Custom", "time_based")])
    extended.write(tmp_path / "tax.csv")
    again = load_taxonomy(tmp_path / "tax.csv")
    assert again["Custom"].category == "time_based"
    assert again["FlowID"].exclusion_reason == "exporter artifact"
