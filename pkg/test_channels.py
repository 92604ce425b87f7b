import time
from collections import Counter

import pytest

import exec_context
from atoms import atom_new, atom_swap
from channels import chan_new, chan_put, chan_take, go_spawn
from errors import ChannelClosed, IrrevocableInRetryScope, WaitTimeout
from stm import ref_alter, ref_new, transaction_run


def _wait_for(predicate, timeout=2.0):
    deadline = time.monotonic() + timeout
    while not predicate():
        assert time.monotonic() < deadline, "condition not reached"
        time.sleep(0.005)


def test_put_waits_for_a_taker():
    ch = chan_new()
    done = go_spawn(lambda: chan_put(ch, "hello"))
    _wait_for(lambda: ch.waiting_putters == 1)
    assert chan_take(ch) == "hello"
    assert chan_take(done) is None
    assert ch.waiting_putters == 0


def test_putters_served_in_fifo_order():
    ch = chan_new()
    for i in range(3):
        go_spawn(lambda i=i: chan_put(ch, i))
        _wait_for(lambda i=i: ch.waiting_putters == i + 1)
    assert [chan_take(ch) for _ in range(3)] == [0, 1, 2]


def test_takers_served_in_fifo_order():
    ch = chan_new()
    readers = []
    for i in range(3):
        readers.append(go_spawn(lambda: chan_take(ch)))
        _wait_for(lambda i=i: ch.waiting_takers == i + 1)
    for value in "abc":
        chan_put(ch, value)
    assert [chan_take(r) for r in readers] == ["a", "b", "c"]


def test_go_block_result_is_offered_without_blocking():
    ch = go_spawn(lambda: 42)
    _wait_for(lambda: ch.waiting_putters == 1)
    assert chan_take(ch) == 42


def test_go_block_error_closes_result_channel():
    ch = go_spawn(lambda: 1 // 0)
    with pytest.raises(ChannelClosed) as info:
        chan_take(ch)
    assert isinstance(info.value.cause, ZeroDivisionError)


def test_go_block_runs_in_go_scope():
    ch = go_spawn(lambda: exec_context.current_context().innermost(exec_context.ScopeType.GO_BLOCK) is not None)
    assert chan_take(ch) is True


def test_closed_channel_rejects_operations():
    ch = chan_new()
    ch.close()
    with pytest.raises(ChannelClosed):
        chan_put(ch, 1)
    with pytest.raises(ChannelClosed):
        chan_take(ch)


def test_close_wakes_blocked_taker():
    ch = chan_new()
    reader = go_spawn(lambda: chan_take(ch))
    _wait_for(lambda: ch.waiting_takers == 1)
    ch.close()
    with pytest.raises(ChannelClosed):
        chan_take(reader)


def test_take_timeout():
    with pytest.raises(WaitTimeout):
        chan_take(chan_new(), timeout=0.05)


def test_channel_ops_in_retry_scopes_allowed_in_faithful_mode():
    ch = chan_new()
    reader = go_spawn(lambda: [chan_take(ch), chan_take(ch)])
    r = ref_new(0)
    transaction_run(lambda: (chan_put(ch, "txn"), ref_alter(r, lambda v: v + 1)))
    atom_swap(atom_new(0), lambda x: (chan_put(ch, "swap"), x + 1)[1])
    assert chan_take(reader) == ["txn", "swap"]


def test_channel_ops_in_retry_scopes_refused_in_guarded_mode(guarded):
    ch = chan_new()
    with pytest.raises(IrrevocableInRetryScope):
        transaction_run(lambda: chan_put(ch, 1))
    with pytest.raises(IrrevocableInRetryScope):
        atom_swap(atom_new(0), lambda x: chan_take(ch))
    assert ch.waiting_putters == 0 and ch.waiting_takers == 0


def test_go_block_inside_guarded_swap_is_not_a_retry_scope(guarded):
    ch = chan_new()
    atom_swap(atom_new(0), lambda x: (go_spawn(lambda: chan_put(ch, "from-go")), x)[1])
    assert chan_take(ch) == "from-go"


def test_every_value_delivered_exactly_once():
    ch = chan_new()
    per_unit = 1000
    putters = [go_spawn(lambda i=i: [chan_put(ch, (i, j)) for j in range(per_unit)]) for i in range(4)]
    takers = [go_spawn(lambda: [chan_take(ch) for _ in range(per_unit)]) for _ in range(4)]
    received = Counter()
    for taker in takers:
        received.update(chan_take(taker))
    for putter in putters:
        chan_take(putter)
    assert received == Counter((i, j) for i in range(4) for j in range(per_unit))
