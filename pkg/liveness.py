"""
Liveness bookkeeping for the conc-compose runtime.

Every blocking wait of every model goes through wait_until(), which keeps
the wait-for graph current: an edge (unit -> resource) exists exactly
while the unit is blocked, plus (resource -> resolver unit) when the unit
that will resolve the resource is known (a future's body, an agent's
worker). deadlock_probe() combines cycle search on that graph with a
quiescence check (every scenario unit blocked, progress clock stalled).
The retry watchdog counts re-executions of swap functions and
transactions and reports loops that exceed a threshold.

Gates are one-shot orchestration latches that scenarios use to force an
interleaving; waits on gates are tagged and never count as deadlocks.
"""

import itertools
import sys
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import networkx as nx

import exec_context
from errors import LivelockAbort, ScenarioAborted, WaitTimeout

WAIT_SLICE_SECONDS = 0.02
# A cycle is only reported once every wait on it is at least this old.
CYCLE_SETTLE_SECONDS = 0.05


class WaitKind(Enum):
    MODEL = "model"
    ORCHESTRATION = "orchestration"
    IDLE = "idle"


class UnitStatus(Enum):
    RUNNING = "running"
    BLOCKED = "blocked"
    IDLE = "idle"
    FINISHED = "finished"


class RetryKind(Enum):
    SWAP_RETRY = "SwapRetry"
    TXN_RETRY = "TxnRetry"


_resource_ids = itertools.count(1)


def new_resource_id(prefix: str) -> str:
    return f"{prefix}:{next(_resource_ids)}"


@dataclass(frozen=True)
class WaitRecord:
    unit_id: int
    resource: str
    resolver: Optional[int]
    kind: WaitKind
    since: float


class WaitForGraph:
    """Current waits, one per blocked unit."""

    def __init__(self):
        self._lock = threading.Lock()
        self._waits: Dict[int, WaitRecord] = {}

    def add(self, record: WaitRecord) -> None:
        with self._lock:
            self._waits[record.unit_id] = record

    def remove(self, unit_id: int) -> None:
        with self._lock:
            self._waits.pop(unit_id, None)

    def snapshot(self) -> Dict[int, WaitRecord]:
        with self._lock:
            return dict(self._waits)

    def find_cycle(self, settle: float = CYCLE_SETTLE_SECONDS) -> Optional[List[str]]:
        """Return the nodes of a wait-for cycle among settled model waits."""
        now = time.monotonic()
        graph = nx.DiGraph()
        for record in self.snapshot().values():
            if record.kind is not WaitKind.MODEL or record.resolver is None:
                continue
            if now - record.since < settle:
                continue
            graph.add_edge(f"unit:{record.unit_id}", record.resource)
            graph.add_edge(record.resource, f"unit:{record.resolver}")
        try:
            cycle = nx.find_cycle(graph, orientation="original")
        except nx.NetworkXNoCycle:
            return None
        return [edge[0] for edge in cycle]


class ProgressClock:
    """Counts completed model operations."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0
        self.last_advance = time.monotonic()

    def tick(self) -> None:
        with self._lock:
            self.count += 1
            self.last_advance = time.monotonic()

    def stalled_for(self) -> float:
        return time.monotonic() - self.last_advance


@dataclass
class DeadlockVerdict:
    deadlocked: bool
    evidence: Optional[Dict[str, Any]] = None

    def __str__(self) -> str:
        if not self.deadlocked:
            return "NoDeadlock"
        return f"DeadlockDetected({self.evidence})"


@dataclass
class LivelockVerdict:
    suspected: bool
    evidence: Optional[Dict[str, Any]] = None

    def __str__(self) -> str:
        if not self.suspected:
            return "Quiet"
        return f"LivelockSuspected({self.evidence})"


class Watchdog:
    """
    Tracks the retry count of every retry loop.

    A loop is one swap or transaction invocation; its key is chosen by the
    caller (e.g. "atom:3/swap:17"). With trip=True the loop that reaches
    the threshold is unwound with LivelockAbort.
    """

    def __init__(self, threshold: int = 1000, trip: bool = False):
        self.threshold = threshold
        self.trip = trip
        self._lock = threading.Lock()
        self._max: Dict[Tuple[RetryKind, str], int] = {}
        self.tripped: Optional[Dict[str, Any]] = None

    def note(self, kind: RetryKind, loop: str, count: int) -> None:
        key = (kind, loop)
        with self._lock:
            if count > self._max.get(key, 0):
                self._max[key] = count
            reached = self.threshold > 0 and count >= self.threshold
            if reached and self.tripped is None:
                self.tripped = {"kind": kind.value, "loop": loop, "count": count}
                print(f"[Liveness] Watchdog tripped: {kind.value} loop {loop} re-executed {count} times",
                      file=sys.stderr)
        if reached and self.trip:
            raise LivelockAbort(loop, count)

    def check(self, kind: RetryKind, threshold: Optional[int] = None) -> LivelockVerdict:
        threshold = self.threshold if threshold is None else threshold
        with self._lock:
            worst = max(((loop, n) for (k, loop), n in self._max.items() if k is kind),
                        key=lambda item: item[1], default=None)
        if worst is None or worst[1] < threshold:
            return LivelockVerdict(False)
        return LivelockVerdict(True, {"kind": kind.value, "loop": worst[0], "count": worst[1]})

    def count(self, kind: RetryKind) -> int:
        with self._lock:
            return max((n for (k, _), n in self._max.items() if k is kind), default=0)


class Monitor:
    """Liveness state for one scenario (or the process-wide default)."""

    def __init__(self, retry_threshold: int = 1000, trip: bool = False, name: str = "global"):
        self.name = name
        self.graph = WaitForGraph()
        self.clock = ProgressClock()
        self.watchdog = Watchdog(retry_threshold, trip=trip)
        self.aborted = threading.Event()
        self.notes: List[str] = []
        self._lock = threading.Lock()
        self._units: Dict[int, UnitStatus] = {}
        self._names: Dict[int, str] = {}

    def unit_started(self, unit_id: int, name: str) -> None:
        with self._lock:
            self._units[unit_id] = UnitStatus.RUNNING
            self._names[unit_id] = name

    def unit_finished(self, unit_id: int) -> None:
        with self._lock:
            if unit_id in self._units:
                self._units[unit_id] = UnitStatus.FINISHED
        self.graph.remove(unit_id)

    def mark_blocked(self, record: WaitRecord) -> None:
        self.graph.add(record)
        with self._lock:
            if record.unit_id in self._units:
                self._units[record.unit_id] = (
                    UnitStatus.IDLE if record.kind is WaitKind.IDLE else UnitStatus.BLOCKED
                )

    def mark_running(self, unit_id: int) -> None:
        self.graph.remove(unit_id)
        with self._lock:
            if self._units.get(unit_id) in (UnitStatus.BLOCKED, UnitStatus.IDLE):
                self._units[unit_id] = UnitStatus.RUNNING

    def unit_statuses(self) -> Dict[int, UnitStatus]:
        with self._lock:
            return dict(self._units)

    def live_units(self) -> List[int]:
        return [u for u, s in self.unit_statuses().items() if s is not UnitStatus.FINISHED]

    def settled(self) -> bool:
        """True once every registered unit has finished or gone idle."""
        return all(s in (UnitStatus.FINISHED, UnitStatus.IDLE) for s in self.unit_statuses().values())

    def note(self, message: str) -> None:
        with self._lock:
            self.notes.append(message)

    def abort(self) -> None:
        self.aborted.set()

    def deadlock_probe(self, scenario_units: Optional[Iterable[int]] = None,
                       window: float = 0.5) -> DeadlockVerdict:
        cycle = self.graph.find_cycle()
        if cycle is not None:
            return DeadlockVerdict(True, {"reason": "cycle", "cycle": cycle})

        statuses = self.unit_statuses()
        units = list(statuses) if scenario_units is None else list(scenario_units)
        waits = self.graph.snapshot()
        active = [u for u in units if statuses.get(u) not in (UnitStatus.FINISHED, UnitStatus.IDLE, None)]
        if not active:
            return DeadlockVerdict(False)
        for unit in active:
            record = waits.get(unit)
            if record is None or record.kind is not WaitKind.MODEL:
                return DeadlockVerdict(False)
        if self.clock.stalled_for() < window:
            return DeadlockVerdict(False)
        blocked = {f"unit:{u}": waits[u].resource for u in sorted(active)}
        return DeadlockVerdict(True, {"reason": "quiescence", "blocked": blocked})


_default_monitor = Monitor()
_monitor = _default_monitor
_unit_monitor: Dict[int, Monitor] = {}
_registry_lock = threading.Lock()
_detectors_enabled = True


def current_monitor() -> Monitor:
    return _monitor


def install_monitor(monitor: Optional[Monitor]) -> Monitor:
    """Make monitor current (None restores the default) and return the previous one."""
    global _monitor
    previous = _monitor
    _monitor = monitor if monitor is not None else _default_monitor
    return previous


def _monitor_for(unit_id: int) -> Monitor:
    return _unit_monitor.get(unit_id, _monitor)


def _on_unit_start(unit_id: int, name: str) -> None:
    monitor = _monitor
    with _registry_lock:
        _unit_monitor[unit_id] = monitor
    monitor.unit_started(unit_id, name)


def _on_unit_exit(unit_id: int) -> None:
    with _registry_lock:
        monitor = _unit_monitor.pop(unit_id, None)
    if monitor is not None:
        monitor.unit_finished(unit_id)


exec_context.add_unit_listener(_on_unit_start, _on_unit_exit)


def set_detectors(enabled: bool) -> bool:
    """Switch wait-for, progress and retry bookkeeping on or off. Returns the previous setting."""
    global _detectors_enabled
    previous, _detectors_enabled = _detectors_enabled, enabled
    return previous


def detectors_enabled() -> bool:
    return _detectors_enabled


def check_aborted() -> None:
    if _monitor_for(exec_context.current_unit_id()).aborted.is_set():
        raise ScenarioAborted()


def wait_until(
    cond: threading.Condition,
    predicate: Callable[[], bool],
    resource: str,
    resolver: Optional[int] = None,
    timeout: Optional[float] = None,
    kind: WaitKind = WaitKind.MODEL,
) -> None:
    """
    Block on cond (whose lock the caller holds) until predicate() holds.

    Raises ScenarioAborted when the unit's scenario is killed,
    CancellationRequested when a cancelled future reaches this point
    (model waits only) and WaitTimeout when timeout (seconds) elapses.
    """
    if predicate():
        return
    unit_id = exec_context.current_unit_id()
    monitor = _monitor_for(unit_id)
    deadline = None if timeout is None else time.monotonic() + timeout
    tracked = _detectors_enabled
    if tracked:
        monitor.mark_blocked(WaitRecord(unit_id, resource, resolver, kind, time.monotonic()))
    try:
        while not predicate():
            if monitor.aborted.is_set():
                raise ScenarioAborted()
            if kind is WaitKind.MODEL:
                exec_context.check_cancelled()
            wait_for = WAIT_SLICE_SECONDS
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise WaitTimeout(f"unit {unit_id} timed out waiting on {resource}")
                wait_for = min(wait_for, remaining)
            cond.wait(wait_for)
    finally:
        if tracked:
            monitor.mark_running(unit_id)


def progress() -> None:
    if _detectors_enabled:
        _monitor_for(exec_context.current_unit_id()).clock.tick()


def note_retry(kind: RetryKind, loop: str, count: int) -> None:
    if _detectors_enabled:
        _monitor_for(exec_context.current_unit_id()).watchdog.note(kind, loop, count)


def note(message: str) -> None:
    _monitor_for(exec_context.current_unit_id()).note(message)


def deadlock_probe(scenario_units: Optional[Iterable[int]] = None, window: float = 0.5) -> DeadlockVerdict:
    return _monitor.deadlock_probe(scenario_units, window)


def watchdog_check(counter_kind: RetryKind, threshold: Optional[int] = None) -> LivelockVerdict:
    return _monitor.watchdog.check(counter_kind, threshold)


# ---------------------------------------------------------------------------
# Orchestration gates
# ---------------------------------------------------------------------------

class Gate:
    """One-shot latch: Closed until opened, then open for good."""

    def __init__(self, name: str = ""):
        self.gate_id = new_resource_id("gate")
        self.name = name
        self._cond = threading.Condition()
        self._open = False

    @property
    def is_open(self) -> bool:
        return self._open

    def open(self) -> None:
        with self._cond:
            self._open = True
            self._cond.notify_all()

    def wait(self, timeout: Optional[float] = None) -> None:
        with self._cond:
            wait_until(self._cond, lambda: self._open, self.gate_id, timeout=timeout,
                       kind=WaitKind.ORCHESTRATION)

    def __repr__(self) -> str:
        state = "Open" if self._open else "Closed"
        return f"Gate({self.gate_id} {self.name} {state})"


def gate_new(name: str = "") -> Gate:
    return Gate(name)


def gate_open(gate: Gate) -> None:
    gate.open()


def gate_await(gate: Gate, timeout: Optional[float] = None) -> None:
    gate.wait(timeout)
