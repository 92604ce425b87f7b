"""
Software transactional memory: refs and retrying transactions.

Commit protocol: a global version clock plus a single global commit lock.
Each attempt records the clock at its start (snapshot_version); every
in-transaction read checks that the ref has not been committed past the
snapshot, and commit re-validates the whole read set under the lock
before installing the write set with a fresh version. A failed
validation discards the attempt, including its deferred effects, and
re-runs the body after a randomized exponential backoff.

A transaction started while one is already running on the same unit is
merged into it: no new attempt, no extra commit point.
"""

import itertools
import random
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import exec_context
import liveness
from errors import AgentFailed, NotInTransaction, TxnRetryLimit
from exec_context import Scope, ScopeType

DEFAULT_MAX_RETRIES = 10_000
BACKOFF_BASE_SECONDS = 10e-6
BACKOFF_CAP_SECONDS = 1e-3

_ref_ids = itertools.count(1)
_txn_ids = itertools.count(1)

_commit_lock = threading.Lock()
_clock = 0
_max_retries = DEFAULT_MAX_RETRIES
_local = threading.local()


class _Retry(BaseException):
    """Restart the current attempt; never escapes transaction_run."""


class Ref:
    def __init__(self, value: Any):
        self.ref_id = next(_ref_ids)
        self._cell: Tuple[Any, int] = (value, _clock)

    @property
    def commit_version(self) -> int:
        return self._cell[1]

    def committed_value(self) -> Any:
        return self._cell[0]

    def __repr__(self) -> str:
        value, version = self._cell
        return f"Ref({self.ref_id} v{version} {value!r})"


@dataclass
class TxnHandle:
    txn_id: int
    attempt: int
    snapshot_version: int
    read_set: Dict[Ref, int] = field(default_factory=dict)
    write_set: Dict[Ref, Any] = field(default_factory=dict)
    first_reads: Dict[Ref, Any] = field(default_factory=dict)
    spawned_futures: List[Any] = field(default_factory=list)


@dataclass(frozen=True)
class CommitRecord:
    txn_id: int
    commit_version: int
    reads: Dict[int, Any]
    writes: Dict[int, Any]


class StmStats:
    def __init__(self):
        self._lock = threading.Lock()
        self.commits = 0
        self.retries = 0
        self.aborts = 0
        self.history: Optional[List[CommitRecord]] = None

    def bump(self, name: str) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + 1)

    def start_history(self) -> List[CommitRecord]:
        self.history = []
        return self.history

    def stop_history(self) -> List[CommitRecord]:
        history, self.history = self.history or [], None
        return history


stats = StmStats()


def set_max_retries(limit: int) -> None:
    global _max_retries
    _max_retries = limit


def current_txn() -> Optional[TxnHandle]:
    return getattr(_local, "txn", None)


def current_attempt() -> int:
    txn = current_txn()
    if txn is None:
        raise NotInTransaction("no transaction running on this unit")
    return txn.attempt


def _require_txn(op: str) -> TxnHandle:
    txn = current_txn()
    if txn is None:
        raise NotInTransaction(f"{op} outside a transaction: refs can only be read there")
    return txn


def ref_new(value: Any) -> Ref:
    return Ref(value)


def ref_deref(ref: Ref) -> Any:
    txn = current_txn()
    if txn is None:
        return ref._cell[0]
    if ref in txn.write_set:
        return txn.write_set[ref]
    value, version = ref._cell
    if version > txn.snapshot_version:
        raise _Retry()
    txn.read_set.setdefault(ref, version)
    txn.first_reads.setdefault(ref, value)
    return value


def ref_set(ref: Ref, value: Any) -> Any:
    txn = _require_txn("ref_set")
    txn.write_set[ref] = value
    return value


def ref_alter(ref: Ref, fn: Callable[[Any], Any]) -> Any:
    _require_txn("ref_alter")
    return ref_set(ref, fn(ref_deref(ref)))


def _commit(txn: TxnHandle) -> bool:
    global _clock
    with _commit_lock:
        for ref, seen in txn.read_set.items():
            if ref._cell[1] != seen:
                return False
        for ref in txn.write_set:
            if ref._cell[1] > txn.snapshot_version:
                return False
        if txn.write_set:
            version = _clock + 1
            for ref, value in txn.write_set.items():
                ref._cell = (value, version)
            _clock = version
        if stats.history is not None:
            stats.history.append(CommitRecord(
                txn_id=txn.txn_id,
                commit_version=_clock,
                reads={ref.ref_id: value for ref, value in txn.first_reads.items()},
                writes={ref.ref_id: value for ref, value in txn.write_set.items()},
            ))
    return True


def _abandon(txn: TxnHandle) -> None:
    """Drop an attempt: discard its deferred effects and cancel its futures."""
    _local.txn = None
    exec_context.discard_deferred(txn.txn_id)
    for future in txn.spawned_futures:
        future.cancel()


def _backoff(attempt: int) -> None:
    delay = min(BACKOFF_CAP_SECONDS, BACKOFF_BASE_SECONDS * (2 ** min(attempt, 16)))
    time.sleep(delay * random.random())


def transaction_run(body: Callable[[], Any], max_retries: Optional[int] = None) -> Any:
    if current_txn() is not None:
        return body()

    limit = _max_retries if max_retries is None else max_retries
    txn_id = next(_txn_ids)
    scope = Scope(ScopeType.TRANSACTION, txn_id)
    attempt = 0
    while True:
        txn = TxnHandle(txn_id=txn_id, attempt=attempt, snapshot_version=_clock)
        _local.txn = txn
        exec_context.open_deferred(txn_id)
        try:
            result = exec_context.with_scope(scope, body)
            committed = _commit(txn)
        except _Retry:
            committed = False
        except BaseException:
            _abandon(txn)
            stats.bump("aborts")
            raise

        if committed:
            _local.txn = None
            effects = exec_context.take_deferred(txn_id)
            stats.bump("commits")
            liveness.progress()
            for effect in effects:
                try:
                    effect.apply()
                except AgentFailed as exc:
                    print(f"[STM] Commit-time {effect.kind.value} of txn {txn_id} failed: {exc}", file=sys.stderr)
                    liveness.note(f"txn {txn_id}: commit-time {effect.kind.value} failed: {exc}")
            return result

        _abandon(txn)
        stats.bump("retries")
        attempt += 1
        liveness.check_aborted()
        liveness.note_retry(liveness.RetryKind.TXN_RETRY, f"txn:{txn_id}", attempt)
        if attempt >= limit:
            print(f"[STM] Transaction {txn_id} gave up after {attempt} attempts", file=sys.stderr)
            raise TxnRetryLimit(f"transaction {txn_id} retried {attempt} times")
        _backoff(attempt)
