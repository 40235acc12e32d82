import json
import os

import numpy as np
import pytest

from genisbench.eval import EvalReport
from genisbench.pipeline import (
    AccessLog,
    PipelineError,
    Report,
    RunConfig,
    parse_human_report,
    prepare,
    render_report,
    run_pipeline,
    strip_timing,
)
from genisbench.synth import SynthSpec


def small(**kw):
    base = dict(
        synth=SynthSpec(n_rows=1500, seed=2),
        models=("rf",),
        k=8,
        n_estimators=10,
        rfe_estimators=10,
        grid_search=False,
        explain_rows=20,
        n_permutations=4,
        background_size=10,
    )
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def rf_run():
    log = AccessLog()
    return run_pipeline(small(), log), log


def test_small_run_reports_both_feature_sets(rf_run):
    report, _ = rf_run
    assert [(e.model, e.feature_set) for e in report.evaluations] == [("rf", "full"), ("rf", "selected")]
    assert len(report.selection["selected"]) == 8
    assert set(report.attributions["rf"]) >= {"quantity_based", "time_based", "hybrid"}
    for e in report.evaluations:
        assert e.f1s > 90.0 and e.te_seconds is None
        assert sum(map(sum, e.confusion["counts"])) == report.metadata["n_test"]
    n_test = report.metadata["n_test"]
    assert report.metadata["n_train"] + n_test == 1500 and abs(n_test - 300) <= 4


def test_test_rows_never_reach_fitting_stages(rf_run):
    _, log = rf_run
    for stage in ("select", "scale", "train"):
        assert log.rows(stage, "test") == 0
        assert log.rows(stage, "train") > 0
    assert log.rows("evaluate", "test") == 2 * rf_run[0].metadata["n_test"]


def test_determinism(rf_run):
    report, _ = rf_run
    again = run_pipeline(small())
    assert strip_timing(again.to_dict()) == strip_timing(report.to_dict())


def test_k_too_large_fails_before_training():
    log = AccessLog()
    with pytest.raises(PipelineError) as info:
        run_pipeline(small(k=999), log)
    assert info.value.stage == "select"
    assert log.rows("train", "train") == 0 and log.rows("select", "train") == 0


def test_prepare_split_and_encoding():
    data = prepare(small(task="binary"))
    assert data.labels.classes == ("Benign", "Malicious")
    assert any(f.startswith("Protocol") for f in data.features)
    assert "FlowID" not in data.features
    benign_share = lambda y: np.mean(y == data.labels.classes.index("Benign"))
    assert benign_share(data.y_train) == pytest.approx(benign_share(data.y_test), abs=0.01)


def test_render_round_trip(rf_run, tmp_path):
    report, _ = rf_run
    paths = render_report(report, tmp_path / "out")
    again = Report.load(paths["machine"])
    assert again.to_dict() == json.loads(json.dumps(report.to_dict()))
    rows = parse_human_report(paths["human"].read_text())
    assert [r["Model"] for r in rows] == ["rf", "rf"]
    assert rows[1]["F1S"] == pytest.approx(report.evaluations[1].f1s, abs=5e-5)


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output(rf_run, tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    with pytest.raises(PipelineError, match=r"\[render\]"):
        render_report(rf_run[0], locked / "out")


def test_output_path_is_a_file(rf_run, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(PipelineError) as info:
        render_report(rf_run[0], blocker / "out")
    assert info.value.stage == "render"


def test_strip_timing_removes_clock_fields():
    d = {"tt_seconds": 1.0, "x": [{"it_seconds": 2.0, "f1s": 3.0}], "metadata": {"started_at": "now", "seed": 0}}
    assert strip_timing(d) == {"x": [{"f1s": 3.0}], "metadata": {"seed": 0}}


def test_stage_tagged_errors(tmp_path):
    with pytest.raises(PipelineError) as info:
        run_pipeline(RunConfig(train_csv=str(tmp_path / "missing.csv")))
    assert info.value.stage == "ingest" and str(info.value).startswith("[ingest]")
    with pytest.raises(PipelineError, match=r"\[config\]"):
        RunConfig(models=("svm",), synth=SynthSpec(n_rows=100))
    with pytest.raises(PipelineError, match=r"\[config\]"):
        RunConfig()


def test_config_round_trip(tmp_path):
    cfg = small(models=("rf", "mlp"), architectures=((8, 4),))
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(tmp_path / "c.json").to_dict() == cfg.to_dict()


def test_all_families_small_binary():
    cfg = small(
        task="binary",
        models=("gbdt_hist", "gbdt_goss", "mlp", "lstm"),
        select=False,
        explain=False,
        architectures=((16, 8),),
        max_epochs=3,
        n_estimators=10,
    )
    report = run_pipeline(cfg)
    assert [e.model for e in report.evaluations] == list(cfg.models)
    nets = {e.model: e for e in report.evaluations if e.model in ("mlp", "lstm")}
    assert all(e.te_seconds is not None and e.te_seconds > 0 for e in nets.values())
    assert all(isinstance(e, EvalReport) for e in report.evaluations)
