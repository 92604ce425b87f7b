import threading
import time

import pytest

import exec_context
import liveness
from atoms import atom_cas, atom_deref, atom_new, atom_reset, atom_swap
from errors import LivelockAbort, ReentrantSwap


def inc(x):
    return x + 1


def test_swap_returns_new_value():
    a = atom_new(1)
    assert atom_swap(a, inc) == 2
    assert atom_deref(a) == 2


def test_cas_compares_versions():
    a = atom_new("x")
    version = a.version
    assert atom_cas(a, version, "y")
    assert not atom_cas(a, version, "z")
    assert atom_deref(a) == "y"


def test_reset_to_equal_value_forces_retry():
    a = atom_new(0)
    calls = []

    def fn(x):
        calls.append(x)
        if len(calls) == 1:
            _, t = exec_context.spawn_unit("resetter", lambda: atom_reset(a, 0))
            t.join()
        return x + 1

    assert atom_swap(a, fn) == 1
    assert len(calls) == 2
    assert a.retry_count == 1


def test_swap_fn_runs_in_swap_scope():
    a = atom_new(0)
    seen = []

    def fn(x):
        seen.append(exec_context.current_context().innermost(exec_context.ScopeType.SWAP_FN))
        return x

    atom_swap(a, fn)
    assert seen[0].ident == a.atom_id
    assert exec_context.stack_depth() == 1


def test_concurrent_swaps_lose_nothing():
    a = atom_new(0)

    def worker():
        for _ in range(1000):
            atom_swap(a, inc)

    threads = [exec_context.spawn_unit(f"w{i}", worker)[1] for i in range(4)]
    for t in threads:
        t.join()
    assert atom_deref(a) == 4000


def test_same_atom_swap_in_swap_livelocks_in_faithful_mode():
    liveness.install_monitor(liveness.Monitor(retry_threshold=50, trip=True))
    a = atom_new(0)
    with pytest.raises(LivelockAbort):
        atom_swap(a, lambda x: atom_swap(a, inc))
    assert a.retry_count >= 50


def test_same_atom_swap_in_swap_refused_in_guarded_mode(guarded):
    a = atom_new(0)
    with pytest.raises(ReentrantSwap):
        atom_swap(a, lambda x: atom_swap(a, inc))
    assert atom_deref(a) == 0


def test_other_atom_swap_in_swap_allowed_in_guarded_mode(guarded):
    a, b = atom_new(0), atom_new(0)
    atom_swap(a, lambda x: atom_swap(b, inc) + x)
    assert (atom_deref(a), atom_deref(b)) == (1, 1)


def test_racing_cas_has_exactly_one_winner():
    for trial in range(1000):
        a = atom_new(0)
        version = a.version
        start = threading.Barrier(4)
        wins = []

        def contender(i):
            start.wait()
            if atom_cas(a, version, i):
                wins.append(i)

        threads = [exec_context.spawn_unit(f"cas-{i}", lambda i=i: contender(i))[1] for i in range(4)]
        for t in threads:
            t.join()
        assert len(wins) == 1, f"trial {trial}: winners {wins}"
        assert atom_deref(a) == wins[0]


def _timed_swaps(units=4, ops=1000):
    a = atom_new(0)

    def worker():
        for _ in range(ops):
            atom_swap(a, inc)

    started = time.perf_counter()
    threads = [exec_context.spawn_unit(f"w{i}", worker)[1] for i in range(units)]
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - started
    assert atom_deref(a) == units * ops
    return elapsed


def test_detectors_cost_at_most_five_times_the_bare_runtime():
    liveness.set_detectors(False)
    try:
        bare = min(_timed_swaps() for _ in range(3))
    finally:
        liveness.set_detectors(True)
    watched = min(_timed_swaps() for _ in range(3))
    assert watched <= 5 * bare, f"detectors on {watched:.4f}s vs off {bare:.4f}s"
