import threading

import pytest

import exec_context
from errors import ModeChangeWhileRunning, NotInTransaction, ScenarioInFlight
from exec_context import DeferredEffect, EffectKind, Mode, Scope, ScopeType


def test_top_level_context():
    context = exec_context.current_context()
    assert context.scope_stack == (exec_context.TOP_LEVEL,)
    assert context.mode is Mode.FAITHFUL


def test_scopes_nest_and_unwind():
    swap = Scope(ScopeType.SWAP_FN, 1)
    txn = Scope(ScopeType.TRANSACTION, 2)

    def inner():
        context = exec_context.current_context()
        assert [s.kind for s in context.scope_stack] == [ScopeType.TOP_LEVEL, ScopeType.SWAP_FN, ScopeType.TRANSACTION]
        assert context.innermost(ScopeType.SWAP_FN, ScopeType.TRANSACTION) == txn
        assert context.contains(ScopeType.SWAP_FN, 1)
        assert not context.contains(ScopeType.SWAP_FN, 99)
        return "done"

    assert exec_context.with_scope(swap, lambda: exec_context.with_scope(txn, inner)) == "done"
    assert exec_context.stack_depth() == 1


def test_stack_restored_when_body_raises():
    def boom():
        raise ValueError("boom")

    with pytest.raises(ValueError):
        exec_context.with_scope(Scope(ScopeType.AGENT_ACTION, 1), boom)
    assert exec_context.stack_depth() == 1


def test_top_level_cannot_be_pushed():
    with pytest.raises(ValueError):
        exec_context.push_scope(exec_context.TOP_LEVEL)


def test_spawned_unit_starts_outside_creator_scopes():
    seen = {}

    def body():
        seen["stack"] = exec_context.current_context().scope_stack
        seen["unit"] = exec_context.current_unit_id()

    def spawn_from_swap():
        _, thread = exec_context.spawn_unit("child", body, Scope(ScopeType.GO_BLOCK, 5))
        thread.join()

    exec_context.with_scope(Scope(ScopeType.SWAP_FN, 1), spawn_from_swap)
    assert seen["stack"] == (exec_context.TOP_LEVEL, Scope(ScopeType.GO_BLOCK, 5))
    assert seen["unit"] != exec_context.current_unit_id()


def test_defer_requires_transaction():
    effect = DeferredEffect(EffectKind.AGENT_SEND, None, None, lambda: None)
    with pytest.raises(NotInTransaction):
        exec_context.defer_until_commit(effect)


def test_deferred_effects_collected_per_transaction():
    fired = []
    exec_context.open_deferred(42)

    def body():
        exec_context.defer_until_commit(DeferredEffect(EffectKind.AGENT_SEND, None, 1, lambda: fired.append(1)))
        exec_context.defer_until_commit(DeferredEffect(EffectKind.PROMISE_DELIVER, None, 2, lambda: fired.append(2)))

    exec_context.with_scope(Scope(ScopeType.TRANSACTION, 42), body)
    effects = exec_context.take_deferred(42)
    assert [e.origin_txn for e in effects] == [42, 42]
    for effect in effects:
        effect.apply()
    assert fired == [1, 2]
    assert exec_context.take_deferred(42) == []


def test_discarded_effects_never_fire():
    fired = []
    exec_context.open_deferred(7)
    exec_context.with_scope(
        Scope(ScopeType.TRANSACTION, 7),
        lambda: exec_context.defer_until_commit(DeferredEffect(EffectKind.AGENT_SEND, None, None, lambda: fired.append(1))),
    )
    assert exec_context.discard_deferred(7) == 1
    assert fired == []


def test_mode_change_refused_while_scenario_runs():
    exec_context.begin_scenario()
    try:
        with pytest.raises(ModeChangeWhileRunning):
            exec_context.set_mode("guarded")
        with pytest.raises(ScenarioInFlight):
            exec_context.begin_scenario()
    finally:
        exec_context.end_scenario()
    exec_context.set_mode("guarded")
    assert exec_context.is_guarded()


def test_mode_parse():
    assert Mode.parse("GUARDED") is Mode.GUARDED
    with pytest.raises(ValueError):
        Mode.parse("strict")


def test_cancel_flag_visible_only_to_its_unit():
    event = threading.Event()
    event.set()
    seen = {}

    def body():
        seen["cancelled"] = exec_context.cancel_requested()

    _, thread = exec_context.spawn_unit("cancelled", body, cancel_event=event)
    thread.join()
    assert seen["cancelled"] is True
    assert exec_context.cancel_requested() is False


def test_context_snapshot_does_not_follow_live_stack():
    outside = exec_context.current_context()
    inside = exec_context.with_scope(Scope(ScopeType.TRANSACTION, 9), exec_context.current_context)
    assert outside.scope_stack == (exec_context.TOP_LEVEL,)
    assert inside.scope_stack == (exec_context.TOP_LEVEL, Scope(ScopeType.TRANSACTION, 9))
    exec_context.set_mode("guarded")
    assert outside.mode is Mode.FAITHFUL
    assert inside.mode is Mode.FAITHFUL
