import time

import pytest

import exec_context
import liveness
from agents import agent_new, agent_send, agent_await
from channels import chan_new, chan_take
from config import HarnessConfig
from errors import LivelockAbort
from futures_promises import blocking_deref, future_spawn
from liveness import Gate, RetryKind, WaitForGraph, WaitKind, WaitRecord
from scenario_session import SessionManager


def _eventually(probe, timeout=3.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        verdict = probe()
        if verdict.deadlocked:
            return verdict
        time.sleep(0.02)
    return probe()


def test_graph_finds_settled_cycle():
    graph = WaitForGraph()
    old = time.monotonic() - 1
    graph.add(WaitRecord(1, "future:a", 2, WaitKind.MODEL, old))
    graph.add(WaitRecord(2, "future:b", 1, WaitKind.MODEL, old))
    cycle = graph.find_cycle()
    assert set(cycle) == {"unit:1", "future:a", "unit:2", "future:b"}


def test_graph_ignores_fresh_and_orchestration_waits():
    graph = WaitForGraph()
    now = time.monotonic()
    graph.add(WaitRecord(1, "future:a", 2, WaitKind.MODEL, now))
    graph.add(WaitRecord(2, "future:b", 1, WaitKind.MODEL, now))
    assert graph.find_cycle() is None

    graph = WaitForGraph()
    old = now - 1
    graph.add(WaitRecord(1, "gate:a", 2, WaitKind.ORCHESTRATION, old))
    graph.add(WaitRecord(2, "future:b", 1, WaitKind.MODEL, old))
    assert graph.find_cycle() is None


def test_mutually_recursive_futures_form_a_cycle(monitor):
    ready = Gate("ready")
    holder = {}
    f1 = future_spawn(lambda: (ready.wait(), blocking_deref(holder["f2"]))[1])
    holder["f2"] = future_spawn(lambda: (ready.wait(), blocking_deref(f1))[1])
    ready.open()
    verdict = _eventually(lambda: monitor.deadlock_probe(window=10))
    assert verdict.deadlocked
    assert verdict.evidence["reason"] == "cycle"


def test_quiescence_without_cycle(monitor):
    ch = chan_new()
    reader = future_spawn(lambda: chan_take(ch))
    verdict = _eventually(lambda: monitor.deadlock_probe([reader.unit_id], window=0.2))
    assert verdict.deadlocked
    assert verdict.evidence["reason"] == "quiescence"
    assert list(verdict.evidence["blocked"].values()) == [ch.resource_id]


def test_gate_waits_are_never_deadlocks(monitor):
    gate = Gate("never")
    unit_id, _ = exec_context.spawn_unit("gated", gate.wait)
    time.sleep(0.3)
    assert not monitor.deadlock_probe([unit_id], window=0.1).deadlocked
    gate.open()


def test_idle_agent_worker_is_not_blocked(monitor):
    ag = agent_new(0)
    agent_send(ag, lambda s: s + 1)
    agent_await(ag)
    time.sleep(0.1)
    assert not monitor.deadlock_probe(window=0.05).deadlocked
    assert monitor.settled()


def test_watchdog_reports_and_trips():
    watchdog = liveness.Watchdog(threshold=3)
    watchdog.note(RetryKind.SWAP_RETRY, "atom:1/swap:1", 2)
    assert not watchdog.check(RetryKind.SWAP_RETRY).suspected
    watchdog.note(RetryKind.SWAP_RETRY, "atom:1/swap:1", 3)
    verdict = watchdog.check(RetryKind.SWAP_RETRY)
    assert verdict.suspected
    assert verdict.evidence["loop"] == "atom:1/swap:1"
    assert not watchdog.check(RetryKind.TXN_RETRY).suspected

    tripping = liveness.Watchdog(threshold=3, trip=True)
    tripping.note(RetryKind.TXN_RETRY, "txn:9", 1)
    with pytest.raises(LivelockAbort):
        tripping.note(RetryKind.TXN_RETRY, "txn:9", 3)
    assert tripping.tripped["count"] == 3


def test_gate_is_one_shot():
    gate = liveness.gate_new("g")
    assert not gate.is_open
    liveness.gate_open(gate)
    liveness.gate_open(gate)
    liveness.gate_await(gate)
    assert gate.is_open


def test_abort_unwinds_blocked_units(monitor):
    ch = chan_new()
    _, thread = exec_context.spawn_unit("stuck", lambda: chan_take(ch))
    time.sleep(0.1)
    assert monitor.live_units()
    monitor.abort()
    thread.join(timeout=2)
    assert not thread.is_alive()
    assert monitor.live_units() == []


def test_progress_clock_advances_on_model_operations(monitor):
    before = monitor.clock.count
    f = future_spawn(lambda: 1)
    blocking_deref(f)
    assert monitor.clock.count > before


def test_detectors_off_skip_bookkeeping(monitor):
    liveness.set_detectors(False)
    try:
        liveness.progress()
        liveness.note_retry(RetryKind.SWAP_RETRY, "atom:1/swap:1", 5)
    finally:
        liveness.set_detectors(True)
    assert monitor.clock.count == 0
    assert monitor.watchdog.count(RetryKind.SWAP_RETRY) == 0
    liveness.progress()
    assert monitor.clock.count == 1


def test_scenario_session_turns_detectors_back_on():
    liveness.set_detectors(False)
    manager = SessionManager()
    manager.start_session("L-refs-refs", "faithful", HarnessConfig())
    try:
        assert liveness.detectors_enabled()
    finally:
        manager.end_session()
    assert not liveness.detectors_enabled()
