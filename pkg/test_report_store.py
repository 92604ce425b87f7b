import json
import os

from config import HarnessConfig
from exec_context import Mode
from matrix_harness import ISSUE, OK, CellResult, MatrixReport, ScenarioResult
from report_store import MAX_RUNS_PER_MODE, ReportStore
from scenarios import Property, Verdict


def make_report(observed: Verdict) -> MatrixReport:
    expected = Verdict.race("x")
    result = ScenarioResult("S-atoms-atoms", Mode.FAITHFUL, observed, expected, 5)
    category = ISSUE if observed.is_issue else OK
    cell = CellResult("atoms", "atoms", Property.SAFETY, ISSUE, category, [result])
    return MatrixReport(Mode.FAITHFUL, HarnessConfig(), [cell])


def test_creates_file_on_first_use(tmp_path):
    path = os.path.join(tmp_path, "data", "reports.json")
    ReportStore(path)
    assert os.path.isfile(path)


def test_record_and_reload(tmp_path):
    path = os.path.join(tmp_path, "reports.json")
    store = ReportStore(path)
    summary = store.record(make_report(Verdict.race("lost update")))
    assert summary["pass"] is True
    assert summary["cells"] == {"Safety:atoms×atoms": "issue"}
    assert summary["drift"] == {}

    reloaded = ReportStore(path)
    assert reloaded.last_run("faithful")["scenarios"] == {"S-atoms-atoms": "RaceObserved"}
    assert reloaded.last_run("guarded") is None


def test_drift_between_runs(tmp_path):
    store = ReportStore(os.path.join(tmp_path, "reports.json"))
    store.record(make_report(Verdict.race("lost update")))
    summary = store.record(make_report(Verdict.ok()))
    assert summary["pass"] is False
    assert summary["drift"] == {"S-atoms-atoms": {"before": "RaceObserved", "after": "OK"}}


def test_history_is_capped(tmp_path):
    store = ReportStore(os.path.join(tmp_path, "reports.json"))
    for _ in range(MAX_RUNS_PER_MODE + 5):
        store.record(make_report(Verdict.race("x")))
    assert len(store.list_runs("faithful")) == MAX_RUNS_PER_MODE
    assert len(store.list_runs()) == MAX_RUNS_PER_MODE


def test_corrupt_file_starts_empty(tmp_path):
    path = os.path.join(tmp_path, "reports.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write("{not json")
    store = ReportStore(path)
    assert store.list_runs() == []
    store.record(make_report(Verdict.race("x")))
    with open(path, encoding="utf-8") as f:
        assert len(json.load(f)["faithful"]) == 1
