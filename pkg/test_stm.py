import numpy as np
import pytest

import exec_context
import stm
from errors import NotInTransaction, TxnRetryLimit
from futures_promises import promise_deliver, promise_new
from serializability import find_serial_order, random_history
from stm import CommitRecord, ref_alter, ref_deref, ref_new, ref_set, transaction_run


def inc(x):
    return x + 1


def _commit_from_other_unit(ref):
    _, t = exec_context.spawn_unit("contender", lambda: transaction_run(lambda: ref_set(ref, ref_deref(ref))))
    t.join()


def test_refs_read_outside_but_written_only_inside_transactions():
    r = ref_new(5)
    assert ref_deref(r) == 5
    with pytest.raises(NotInTransaction):
        ref_set(r, 6)
    with pytest.raises(NotInTransaction):
        stm.current_attempt()


def test_transaction_sees_its_own_writes():
    r = ref_new(1)

    def body():
        ref_set(r, 10)
        return ref_deref(r)

    assert transaction_run(body) == 10
    assert ref_deref(r) == 10


def test_three_units_twenty_increments_each():
    r = ref_new(0)

    def worker():
        for _ in range(20):
            transaction_run(lambda: ref_alter(r, inc))

    threads = [exec_context.spawn_unit(f"w{i}", worker)[1] for i in range(3)]
    for t in threads:
        t.join()
    assert ref_deref(r) == 60


def test_two_unit_contention_terminates():
    r = ref_new(0)

    def worker():
        for _ in range(200):
            transaction_run(lambda: ref_alter(r, inc))

    threads = [exec_context.spawn_unit(f"c{i}", worker)[1] for i in range(2)]
    for t in threads:
        t.join()
    assert ref_deref(r) == 400


def test_nested_transactions_commit_once():
    a, b = ref_new(0), ref_new(0)
    before = stm.stats.commits
    transaction_run(lambda: (ref_alter(a, inc), transaction_run(lambda: ref_alter(b, inc))))
    assert stm.stats.commits - before == 1
    assert (ref_deref(a), ref_deref(b)) == (1, 1)


def test_conflicting_commit_restarts_attempt():
    r = ref_new(0)
    attempts = []

    def body():
        attempts.append(stm.current_attempt())
        ref_alter(r, inc)
        if len(attempts) == 1:
            _commit_from_other_unit(r)

    transaction_run(body)
    assert attempts == [0, 1]
    assert ref_deref(r) == 1


def test_retry_limit():
    r = ref_new(0)

    def body():
        ref_alter(r, inc)
        _commit_from_other_unit(r)

    with pytest.raises(TxnRetryLimit):
        transaction_run(body, max_retries=3)
    assert ref_deref(r) == 0


def test_body_error_discards_writes():
    r = ref_new(0)
    before = stm.stats.aborts

    def body():
        ref_set(r, 99)
        raise KeyError("nope")

    with pytest.raises(KeyError):
        transaction_run(body)
    assert ref_deref(r) == 0
    assert stm.stats.aborts - before == 1
    assert stm.current_txn() is None


def test_deliver_in_transaction_immediate_in_faithful_mode():
    p = promise_new()
    r = ref_new(0)
    results = []

    def body():
        results.append(promise_deliver(p, stm.current_attempt()))
        ref_alter(r, inc)
        if stm.current_attempt() < 2:
            _commit_from_other_unit(r)

    transaction_run(body)
    assert results == [True, False, False]
    assert p.value == 0


def test_deliver_in_transaction_deferred_in_guarded_mode(guarded):
    p = promise_new()
    r = ref_new(0)

    def body():
        assert promise_deliver(p, stm.current_attempt())
        assert not p.delivered
        ref_alter(r, inc)
        if stm.current_attempt() < 2:
            _commit_from_other_unit(r)

    transaction_run(body)
    assert p.value == 2
    assert p.deliveries == 1


def test_random_histories_are_serializable():
    rng = np.random.default_rng(7)
    for _ in range(200):
        history = random_history(rng, max_refs=3, max_txns=5)
        order = find_serial_order(history.initial, history.transactions, history.final)
        assert order is not None, history


def test_oracle_rejects_impossible_history():
    # Both transactions read 0 and incremented; no sequential order explains final = 2.
    records = [
        CommitRecord(txn_id=1, commit_version=1, reads={1: 0}, writes={1: 1}),
        CommitRecord(txn_id=2, commit_version=2, reads={1: 0}, writes={1: 1}),
    ]
    assert find_serial_order({1: 0}, records, {1: 1}) is None
    assert find_serial_order({1: 0}, records[:1], {1: 1}) == [1]


def test_multi_ref_commit_never_seen_half_applied():
    a, b = ref_new(1000), ref_new(0)
    stop = []
    sums = []

    def transfer():
        for _ in range(500):
            transaction_run(lambda: (ref_alter(a, lambda v: v - 1), ref_alter(b, inc)))

    def audit():
        while not stop:
            sums.append(transaction_run(lambda: ref_deref(a) + ref_deref(b)))

    _, auditor = exec_context.spawn_unit("auditor", audit)
    writers = [exec_context.spawn_unit(f"transfer-{i}", transfer)[1] for i in range(2)]
    for t in writers:
        t.join()
    stop.append(True)
    auditor.join()
    assert sums
    assert set(sums) == {1000}
    assert (ref_deref(a), ref_deref(b)) == (0, 1000)
