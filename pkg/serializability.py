"""
Serializability oracle for small STM histories.

A history is the initial ref values, the commit records of every
committed transaction (the values each one read first and the values it
wrote) and the final ref values. The history is serializable when some
sequential order of the transactions, replayed from the initial values,
reproduces every recorded read and ends in the observed final state.

The search is brute force, so keep histories small (a handful of
transactions).
"""

import itertools
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

import exec_context
import stm
from liveness import Gate
from stm import CommitRecord, Ref, ref_deref, ref_new, ref_set, transaction_run

MAX_BRUTE_FORCE = 8


@dataclass
class History:
    initial: Dict[int, Any]
    transactions: List[CommitRecord]
    final: Dict[int, Any]


def replay(initial: Dict[int, Any], order: Sequence[CommitRecord]) -> Optional[Dict[int, Any]]:
    """Run order sequentially; None as soon as a transaction's reads disagree."""
    state = dict(initial)
    for record in order:
        for ref_id, value in record.reads.items():
            if state.get(ref_id) != value:
                return None
        state.update(record.writes)
    return state


def find_serial_order(initial: Dict[int, Any], transactions: Sequence[CommitRecord],
                      observed_final: Dict[int, Any]) -> Optional[List[int]]:
    """
    Return the txn ids of a sequential order explaining the history, or None.

    Commit order is tried first; the other permutations are only searched
    for histories of at most MAX_BRUTE_FORCE transactions.
    """
    by_commit = sorted(transactions, key=lambda r: r.commit_version)
    candidates = [by_commit]
    if len(transactions) <= MAX_BRUTE_FORCE:
        candidates = itertools.chain(candidates, itertools.permutations(transactions))
    for order in candidates:
        final = replay(initial, order)
        if final is not None and all(final.get(k) == v for k, v in observed_final.items()):
            return [r.txn_id for r in order]
    return None


def random_history(rng: np.random.Generator, max_refs: int = 3, max_txns: int = 5) -> History:
    """
    Run a few random transactions concurrently and record what they did.

    Each transaction reads one to all of the refs and writes the sum of
    what it read plus a random delta into one of them.
    """
    n_refs = int(rng.integers(1, max_refs + 1))
    n_txns = int(rng.integers(1, max_txns + 1))
    refs: List[Ref] = [ref_new(int(rng.integers(0, 10))) for _ in range(n_refs)]
    initial = {r.ref_id: r.committed_value() for r in refs}

    programs = []
    for _ in range(n_txns):
        reads = rng.choice(n_refs, size=int(rng.integers(1, n_refs + 1)), replace=False)
        programs.append(([refs[int(i)] for i in reads], refs[int(rng.integers(0, n_refs))],
                         int(rng.integers(1, 5))))

    start = Gate("history-start")
    threads: List[threading.Thread] = []
    recording = stm.stats.start_history()
    try:
        for reads, target, delta in programs:
            def run(reads=reads, target=target, delta=delta) -> None:
                start.wait()
                transaction_run(lambda: ref_set(target, sum(ref_deref(r) for r in reads) + delta))

            _, thread = exec_context.spawn_unit("history-txn", run)
            threads.append(thread)
        start.open()
        for thread in threads:
            thread.join()
    finally:
        stm.stats.stop_history()

    ids = {r.ref_id for r in refs}
    transactions = [t for t in recording if set(t.writes) <= ids and set(t.reads) <= ids]
    return History(initial, transactions, {r.ref_id: r.committed_value() for r in refs})
