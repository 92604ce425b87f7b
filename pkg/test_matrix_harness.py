import io
import json
import os

import pytest

import matrix_harness
import scenarios
from config import HarnessConfig
from errors import SinkUnwritable, UnknownScenario
from exec_context import Mode
from liveness import Gate
from matrix_harness import (
    EXPECTED_LIVENESS,
    EXPECTED_SAFETY,
    ISSUE,
    OK,
    CellResult,
    MatrixReport,
    ScenarioResult,
    matrix_run,
    report_emit,
    scenario_list,
    scenario_run,
    validate_catalog,
)
from scenarios import MODELS, Property, ScenarioSpec, Verdict, VerdictKind


def test_catalog_covers_every_cell_consistently():
    assert validate_catalog() == []


def test_expected_matrices_issue_counts():
    assert sum(map(sum, EXPECTED_SAFETY)) == 8
    assert sum(map(sum, EXPECTED_LIVENESS)) == 9


def test_scenario_list_covers_fifty_cells():
    ids = scenario_list()
    assert len(ids) >= 50
    assert len(set(ids)) == len(ids)
    cells = {(s.property, s.outer, s.inner) for s in scenarios.CATALOG if s.role == "cell"}
    assert len(cells) == 50


def test_scenario_list_is_ordered_outer_inner_property():
    ids = scenario_list()
    assert ids == scenario_list()
    assert ids[0] == "S-atoms-atoms"
    assert ids.index("S-atoms-agents") < ids.index("L-atoms-agents") < ids.index("S-atoms-refs")


def test_filter_refs_safety():
    ids = scenario_list("Safety", outer="refs")
    for expected in ["S-refs-atoms", "S-refs-agents", "S-refs-refs", "S-refs-futprom", "S-refs-channels"]:
        assert expected in ids


def test_filter_liveness_channels_column():
    assert len(scenario_list(Property.LIVENESS, inner="channels")) == 7


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        scenario_run("S-nothing-here", "faithful")


def test_send_in_swap_sends_twice(small_config):
    result = scenario_run("S-atoms-agents", "faithful", config=small_config)
    assert result.observed.kind is VerdictKind.RACE
    assert "2 notifications" in result.observed.detail
    assert result.matches


def test_send_in_transaction_sends_once(small_config):
    result = scenario_run("S-refs-agents", Mode.FAITHFUL, config=small_config)
    assert result.observed.kind is VerdictKind.OK
    assert result.matches


def test_thumbnail_future_deadlocks(small_config):
    result = scenario_run("L-futures-agents", "faithful", config=small_config)
    assert result.observed.kind is VerdictKind.DEADLOCK
    assert result.observed.detail["reason"] == "cycle"
    assert result.duration_ms <= small_config.timeout_ms


def test_thumbnail_future_refused_in_guarded_mode(small_config):
    result = scenario_run("L-futures-agents", "guarded", config=small_config)
    assert result.observed.label == "ErrorRaised(BlockingReadProhibited)"


def test_same_atom_swap_exhibit(small_config):
    faithful = scenario_run("X-atoms-atoms-same-atom", "faithful", config=small_config)
    assert faithful.observed.kind is VerdictKind.LIVELOCK
    guarded = scenario_run("X-atoms-atoms-same-atom", "guarded", config=small_config)
    assert guarded.observed.label == "ErrorRaised(ReentrantSwap)"


def test_await_in_swap_exhibit_livelocks(small_config):
    result = scenario_run("X-atoms-agents-await", "faithful", config=small_config)
    assert result.observed.kind is VerdictKind.LIVELOCK
    assert result.observed.detail["count"] >= small_config.retry_threshold


def test_take_in_retried_transaction(small_config):
    assert scenario_run("L-refs-channels", "faithful", config=small_config).observed.kind is VerdictKind.DEADLOCK
    guarded = scenario_run("L-refs-channels", "guarded", config=small_config)
    assert guarded.observed.label == "ErrorRaised(IrrevocableInRetryScope)"


def test_guarded_transaction_defers_deliver(small_config):
    assert scenario_run("S-refs-futprom", "faithful", config=small_config).observed.kind is VerdictKind.RACE
    assert scenario_run("S-refs-futprom", "guarded", config=small_config).observed.kind is VerdictKind.OK


def test_timeout_recorded_as_verdict(monkeypatch, small_config):
    def wait_forever(ctx):
        Gate("never").wait()
        return Verdict.ok()

    spec = ScenarioSpec("T-gate", "atoms", "atoms", Property.LIVENESS,
                        {Mode.FAITHFUL: Verdict.ok(), Mode.GUARDED: Verdict.ok()}, wait_forever, "test only")
    monkeypatch.setitem(scenarios.BY_ID, "T-gate", spec)
    result = scenario_run("T-gate", "faithful", timeout_ms=200, config=small_config)
    assert result.observed.label == "ErrorRaised(ScenarioTimeout)"
    assert not result.matches


def _fake_report():
    cells = []
    for outer in MODELS:
        for inner in MODELS:
            issue = EXPECTED_SAFETY[MODELS.index(outer)][MODELS.index(inner)]
            verdict = Verdict.race("x") if issue else Verdict.ok()
            result = ScenarioResult(f"S-{outer}-{inner}", Mode.FAITHFUL, verdict, verdict, 3)
            category = ISSUE if issue else OK
            cells.append(CellResult(outer, inner, Property.SAFETY, category, category, [result]))
    return MatrixReport(Mode.FAITHFUL, HarnessConfig(), cells)


def test_text_grid_atoms_row_all_issue():
    text = report_emit(_fake_report(), "text", io.StringIO())
    atoms_row = next(line for line in text.splitlines() if line.startswith("atoms"))
    assert atoms_row.count("✗") == 5
    agents_row = next(line for line in text.splitlines() if line.startswith("agents"))
    assert agents_row.count("✓") == 5
    assert "result=PASS" in text


def test_json_report_schema():
    sink = io.StringIO()
    body = report_emit(_fake_report(), "json", sink)
    assert body.endswith("\n")
    data = json.loads(sink.getvalue())
    assert list(data) == ["mode", "config", "cells", "pass"]
    assert list(data["config"]) == ["timeout_ms", "retry_threshold", "quiescence_ms", "seed"]
    assert list(data["cells"][0]) == ["outer", "inner", "property", "expected", "observed", "scenario_ids", "duration_ms"]
    assert data["pass"] is True


def test_json_single_result():
    verdict = Verdict.ok()
    result = ScenarioResult("S-refs-agents", Mode.FAITHFUL, verdict, verdict, 12)
    data = json.loads(report_emit(result, "json", io.StringIO()))
    assert (data["id"], data["mode"], data["observed"]) == ("S-refs-agents", "faithful", "OK")


def test_unwritable_sink(tmp_path):
    with pytest.raises(SinkUnwritable):
        report_emit(_fake_report(), "text", os.path.join(tmp_path, "missing", "report.txt"))


@pytest.mark.slow
@pytest.mark.parametrize("which", ["safety", "liveness"])
def test_faithful_matrix_matches_expected(which, small_config):
    report = matrix_run("faithful", which, small_config)
    assert len(report.cells) == 25
    grid = EXPECTED_SAFETY if which == "safety" else EXPECTED_LIVENESS
    for cell in report.cells:
        assert (cell.observed == ISSUE) == grid[MODELS.index(cell.outer)][MODELS.index(cell.inner)], cell
    assert report.passed, [r.to_dict() for r in report.mismatches()]


@pytest.mark.slow
def test_guarded_matrix_passes(small_config):
    report = matrix_run("guarded", "all", small_config)
    assert len(report.cells) == 50
    assert report.passed, [r.to_dict() for r in report.mismatches()]
    atoms_safety = [c for c in report.cells if c.property is Property.SAFETY and c.outer == "atoms"]
    assert all(c.observed == ISSUE and c.rationale for c in atoms_safety)


@pytest.mark.parametrize("scenario_id", ["L-atoms-channels-go", "L-refs-channels-go"])
@pytest.mark.parametrize("mode", ["faithful", "guarded"])
def test_go_block_restarted_by_retry_deadlocks(scenario_id, mode, small_config):
    result = scenario_run(scenario_id, mode, config=small_config)
    assert result.observed.kind is VerdictKind.DEADLOCK
    assert result.matches


def test_catalog_rejects_guarded_prevention_of_an_unmitigated_cell(monkeypatch):
    trimmed = [s for s in scenarios.CATALOG if not s.id.endswith("-channels-go")]
    monkeypatch.setattr(matrix_harness, "CATALOG", trimmed)
    problems = validate_catalog()
    assert any("atoms×channels" in p and "unmitigated" in p for p in problems)
    assert any("refs×channels" in p and "unmitigated" in p for p in problems)


def test_scenario_verdicts_repeat_across_twenty_runs(small_config):
    for scenario_id in ["S-atoms-agents", "S-refs-agents", "L-futures-futprom"]:
        labels = {scenario_run(scenario_id, "faithful", config=small_config).observed.label for _ in range(20)}
        assert len(labels) == 1, f"{scenario_id}: {labels}"


@pytest.mark.slow
def test_guarded_liveness_keeps_channel_column_issue(small_config):
    report = matrix_run("guarded", "liveness", small_config)
    column = {c.outer: c.observed for c in report.cells if c.inner == "channels"}
    assert column == {m: ISSUE for m in MODELS}
    assert all(c.rationale for c in report.cells if c.inner == "channels")
    assert report.passed, [r.to_dict() for r in report.mismatches()]
