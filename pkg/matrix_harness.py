"""
Matrix harness: runs the scenario catalog and compares what happens
against the expected safety and liveness matrices.

Each scenario runs inside its own session (fresh monitor, fixed mode) on
a driver unit. The harness polls the driver, the retry watchdog and the
deadlock detector until one of them decides the verdict, then kills
every unit the scenario left behind.

Cell vocabulary:
- issue     : some scenario of the cell showed a race, deadlock or livelock
- prevented : no issue, and a guard raised a documented prevention error
- ok        : everything ran clean
"""

import io
import json
import sys
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, IO, Iterable, List, Optional, Union

from config import HarnessConfig
from errors import LivelockAbort, ScenarioAborted, SinkUnwritable, UnknownScenario, root_cause
from exec_context import Mode, spawn_unit
from scenario_session import manager
from scenarios import (
    BY_ID,
    CATALOG,
    MODELS,
    Property,
    ScenarioContext,
    ScenarioSpec,
    Verdict,
    VerdictKind,
)

POLL_SECONDS = 0.02

ISSUE, OK, PREVENTED = "issue", "ok", "prevented"
CELL_SYMBOLS = {ISSUE: "✗", OK: "✓", PREVENTED: "⊘"}

# Rows are the outer model, columns the inner model used inside it, both in
# MODELS order. True marks a cell where composing the two can go wrong.
EXPECTED_SAFETY = [
    # atoms  agents refs   futprom channels
    [True,  True,  True,  True,  True],   # atoms
    [False, False, False, False, False],  # agents
    [True,  False, False, True,  True],   # refs
    [False, False, False, False, False],  # futures
    [False, False, False, False, False],  # channels
]
EXPECTED_LIVENESS = [
    [False, False, False, False, True],   # atoms
    [False, False, False, True,  True],   # agents
    [False, False, False, False, True],   # refs
    [False, True,  False, True,  True],   # futures
    [False, True,  False, False, True],   # channels
]

# Cells Guarded mode leaves alone on purpose.
UNMITIGATED_RATIONALE = {
    Property.SAFETY: {"atoms": "atoms are low-level and uncoordinated; guarding them defeats their purpose"},
    Property.LIVENESS: {"channels": "blocking rendezvous makes these liveness issues inherent to channels"},
}


def expected_issue(prop: Property, outer: str, inner: str) -> bool:
    grid = EXPECTED_SAFETY if prop is Property.SAFETY else EXPECTED_LIVENESS
    return grid[MODELS.index(outer)][MODELS.index(inner)]


@dataclass
class ScenarioResult:
    id: str
    mode: Mode
    observed: Verdict
    expected: Verdict
    duration_ms: int
    notes: List[str] = field(default_factory=list)

    @property
    def matches(self) -> bool:
        return self.observed.matches(self.expected)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "mode": self.mode.value,
            "observed": self.observed.label,
            "expected": self.expected.label,
            "matches": self.matches,
            "detail": self.observed.detail,
            "duration_ms": self.duration_ms,
            "notes": self.notes,
        }


@dataclass
class CellResult:
    outer: str
    inner: str
    property: Property
    expected: str
    observed: str
    results: List[ScenarioResult]
    rationale: Optional[str] = None

    @property
    def scenario_ids(self) -> List[str]:
        return [r.id for r in self.results]

    @property
    def duration_ms(self) -> int:
        return sum(r.duration_ms for r in self.results)

    @property
    def passed(self) -> bool:
        return self.observed == self.expected and all(r.matches for r in self.results)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "outer": self.outer,
            "inner": self.inner,
            "property": self.property.value,
            "expected": self.expected,
            "observed": self.observed,
            "scenario_ids": self.scenario_ids,
            "duration_ms": self.duration_ms,
        }


@dataclass
class MatrixReport:
    mode: Mode
    config: HarnessConfig
    cells: List[CellResult]
    exhibits: List[ScenarioResult] = field(default_factory=list)
    started_at: str = field(default_factory=lambda: datetime.utcnow().isoformat())

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells) and all(r.matches for r in self.exhibits)

    @property
    def results(self) -> List[ScenarioResult]:
        return [r for c in self.cells for r in c.results] + list(self.exhibits)

    def mismatches(self) -> List[ScenarioResult]:
        return [r for r in self.results if not r.matches]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "config": self.config.report_fields(),
            "cells": [c.to_dict() for c in self.cells],
            "pass": self.passed,
        }


# ---------------------------------------------------------------------------
# Catalog queries
# ---------------------------------------------------------------------------

def _order_key(spec: ScenarioSpec):
    return (MODELS.index(spec.outer), MODELS.index(spec.inner),
            0 if spec.property is Property.SAFETY else 1, spec.role != "cell", spec.id)


def scenario_specs(prop: Optional[Union[Property, str]] = None, outer: Optional[str] = None,
                   inner: Optional[str] = None) -> List[ScenarioSpec]:
    wanted = Property.parse(prop) if prop is not None else None
    specs = [
        s for s in CATALOG
        if (wanted is None or s.property is wanted)
        and (outer is None or s.outer == outer)
        and (inner is None or s.inner == inner)
    ]
    return sorted(specs, key=_order_key)


def scenario_list(prop: Optional[Union[Property, str]] = None, outer: Optional[str] = None,
                  inner: Optional[str] = None) -> List[str]:
    return [s.id for s in scenario_specs(prop, outer, inner)]


def get_spec(scenario_id: str) -> ScenarioSpec:
    spec = BY_ID.get(scenario_id)
    if spec is None:
        raise UnknownScenario(f"No scenario named {scenario_id!r}")
    return spec


def validate_catalog() -> List[str]:
    """Problems with the catalog itself: uncovered cells, expectations off the matrix."""
    problems = []
    for prop in Property:
        for outer in MODELS:
            for inner in MODELS:
                cell = [s for s in scenario_specs(prop, outer, inner) if s.role == "cell"]
                if not cell:
                    problems.append(f"{prop.value} {outer}×{inner} has no scenario")
                    continue
                category = classify_cell([s.expected[Mode.FAITHFUL] for s in cell])
                if (category == ISSUE) != expected_issue(prop, outer, inner):
                    problems.append(f"{prop.value} {outer}×{inner}: faithful expectations give {category}")
                guarded = classify_cell([s.expected[Mode.GUARDED] for s in cell])
                if category == ISSUE and unmitigated_rationale(prop, outer, inner) and guarded != ISSUE:
                    problems.append(f"{prop.value} {outer}×{inner}: unmitigated, "
                                    f"but guarded expectations give {guarded}")
    return problems


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

class _Outcome:
    def __init__(self):
        self.done = threading.Event()
        self.verdict: Optional[Verdict] = None
        self.error: Optional[BaseException] = None


def _classify_error(error: BaseException) -> Verdict:
    cause = root_cause(error)
    if isinstance(cause, LivelockAbort):
        return Verdict(VerdictKind.LIVELOCK, {"loop": cause.loop, "count": cause.count})
    return Verdict.raised(type(cause).__name__, str(cause))


def scenario_run(scenario_id: str, mode: Union[Mode, str], timeout_ms: Optional[int] = None,
                 config: Optional[HarnessConfig] = None) -> ScenarioResult:
    spec = get_spec(scenario_id)
    mode = Mode.parse(mode)
    config = config or HarnessConfig.from_env()
    timeout = (config.timeout_ms if timeout_ms is None else timeout_ms) / 1000.0
    window = config.quiescence_ms / 1000.0

    session = manager.start_session(scenario_id, mode, config)
    monitor = session.monitor
    outcome = _Outcome()
    started = time.monotonic()
    try:
        def drive() -> None:
            try:
                outcome.verdict = spec.script(ScenarioContext(config, mode))
            except ScenarioAborted:
                raise
            except BaseException as exc:
                outcome.error = exc
            finally:
                outcome.done.set()

        spawn_unit(f"scenario-{scenario_id}", drive)

        verdict: Optional[Verdict] = None
        while verdict is None:
            tripped = monitor.watchdog.tripped
            if tripped is not None:
                verdict = Verdict(VerdictKind.LIVELOCK, tripped)
            elif outcome.done.is_set() and outcome.error is not None:
                verdict = _classify_error(outcome.error)
            elif outcome.done.is_set() and monitor.settled():
                verdict = outcome.verdict or Verdict.ok()
            else:
                probe = monitor.deadlock_probe(window=window)
                if probe.deadlocked:
                    verdict = Verdict(VerdictKind.DEADLOCK, probe.evidence)
                elif time.monotonic() - started > timeout:
                    verdict = Verdict.raised("ScenarioTimeout", f"no verdict after {timeout:.1f}s")
                else:
                    outcome.done.wait(POLL_SECONDS)
    finally:
        manager.end_session()

    duration_ms = int((time.monotonic() - started) * 1000)
    result = ScenarioResult(scenario_id, mode, verdict, spec.expected[mode], duration_ms, session.notes)
    status = "ok" if result.matches else "MISMATCH"
    print(f"[Harness] {scenario_id} ({mode.value}): {verdict.label} in {duration_ms} ms [{status}]",
          file=sys.stderr)
    return result


def classify_cell(verdicts: Iterable[Verdict]) -> str:
    verdicts = list(verdicts)
    if any(v.is_issue for v in verdicts):
        return ISSUE
    if any(v.is_prevention for v in verdicts):
        return PREVENTED
    return OK


def unmitigated_rationale(prop: Property, outer: str, inner: str) -> Optional[str]:
    return UNMITIGATED_RATIONALE[prop].get(outer if prop is Property.SAFETY else inner)


def _expected_category(prop: Property, outer: str, inner: str, specs: List[ScenarioSpec], mode: Mode) -> str:
    # Guarded mode must still show the issue wherever it is left unmitigated.
    if expected_issue(prop, outer, inner) and (mode is Mode.FAITHFUL or unmitigated_rationale(prop, outer, inner)):
        return ISSUE
    return classify_cell(s.expected[mode] for s in specs)


def matrix_run(mode: Union[Mode, str], which: str = "all", config: Optional[HarnessConfig] = None) -> MatrixReport:
    mode = Mode.parse(mode)
    config = config or HarnessConfig.from_env()
    which = which.lower()
    if which not in ("safety", "liveness", "all"):
        raise ValueError(f"which must be safety, liveness or all, got {which!r}")
    props = list(Property) if which == "all" else [Property.parse(which)]

    print(f"[Harness] Matrix run: mode={mode.value} property={which}", file=sys.stderr)
    report = MatrixReport(mode=mode, config=config, cells=[])
    for prop in props:
        for outer in MODELS:
            for inner in MODELS:
                specs = scenario_specs(prop, outer, inner)
                results = {s.id: scenario_run(s.id, mode, config=config) for s in specs}
                cell_specs = [s for s in specs if s.role == "cell"]
                cell_results = [results[s.id] for s in cell_specs]
                rationale = unmitigated_rationale(prop, outer, inner) if mode is Mode.GUARDED else None
                report.cells.append(CellResult(
                    outer=outer,
                    inner=inner,
                    property=prop,
                    expected=_expected_category(prop, outer, inner, cell_specs, mode),
                    observed=classify_cell(r.observed for r in cell_results),
                    results=cell_results,
                    rationale=rationale,
                ))
                report.exhibits.extend(results[s.id] for s in specs if s.role != "cell")

    print(f"[Harness] Matrix {'PASS' if report.passed else 'FAIL'}: "
          f"{len(report.mismatches())} mismatching scenario(s)", file=sys.stderr)
    return report


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _render_grid(report: MatrixReport, prop: Property) -> List[str]:
    cells = {(c.outer, c.inner): c for c in report.cells if c.property is prop}
    if not cells:
        return []
    width = max(len(m) for m in MODELS) + 2
    lines = [f"{prop.value} (row = outer model, column = inner model used inside it)",
             " " * width + "".join(m.center(width) for m in MODELS)]
    for outer in MODELS:
        row = outer.ljust(width)
        for inner in MODELS:
            cell = cells.get((outer, inner))
            mark = CELL_SYMBOLS[cell.observed] if cell else "?"
            if cell and not cell.passed:
                mark += "!"
            row += mark.center(width)
        lines.append(row.rstrip())
    return lines


def render_text(report: MatrixReport) -> str:
    lines = [f"conc-compose matrix report: mode={report.mode.value} "
             f"result={'PASS' if report.passed else 'FAIL'}",
             "legend: ✗ issue  ✓ ok  ⊘ prevented  ! differs from expected", ""]
    for prop in Property:
        grid = _render_grid(report, prop)
        if grid:
            lines.extend(grid)
            lines.append("")
    if report.exhibits:
        lines.append("Exhibits (do not decide their cell)")
        for r in report.exhibits:
            lines.append(f"  {r.id}: {r.observed.label} (expected {r.expected.label})")
        lines.append("")
    rationales = sorted({c.rationale for c in report.cells if c.rationale and c.observed == ISSUE})
    if rationales:
        lines.append("Left unmitigated in guarded mode")
        lines.extend(f"  - {text}" for text in rationales)
        lines.append("")
    mismatches = report.mismatches()
    if mismatches:
        lines.append("Mismatches")
        for r in mismatches:
            lines.append(f"  {r.id}: observed {r.observed.label}, expected {r.expected.label}")
    return "\n".join(lines).rstrip("\n") + "\n"


def render_json(item: Union[MatrixReport, ScenarioResult]) -> str:
    return json.dumps(item.to_dict(), ensure_ascii=False, default=str) + "\n"


def render_result_text(result: ScenarioResult) -> str:
    line = f"{result.id} ({result.mode.value}): {result.observed.label}"
    if result.observed.detail:
        line += f" - {result.observed.detail}"
    return f"{line}\nexpected {result.expected.label}: {'match' if result.matches else 'MISMATCH'}\n"


def report_emit(report: Union[MatrixReport, ScenarioResult], fmt: str = "text",
                sink: Union[str, IO[str], None] = None) -> str:
    """Render report as text or json and write it to sink (a path or stream, stdout when None)."""
    if fmt == "json":
        body = render_json(report)
    elif fmt == "text":
        body = render_text(report) if isinstance(report, MatrixReport) else render_result_text(report)
    else:
        raise ValueError(f"format must be text or json, got {fmt!r}")
    write_sink(body, sink)
    return body


def write_sink(body: str, sink: Union[str, IO[str], None] = None) -> None:
    """Write body to a path or stream (stdout when None); any write failure is SinkUnwritable."""
    try:
        if sink is None:
            sys.stdout.write(body)
            sys.stdout.flush()
        elif isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
            with open(sink, "w", encoding="utf-8") as f:
                f.write(body)
        else:
            sink.write(body)
    except (OSError, io.UnsupportedOperation) as exc:
        raise SinkUnwritable(f"Cannot write report to {sink!r}: {exc}")
