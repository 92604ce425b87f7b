"""
Futures and promises: one-shot results with blocking reads.

A future runs its body on a fresh execution unit. A promise is a
single-assignment cell: the first deliver wins and later ones report
False. Reads block until a value is there and never consume it.

Cancellation is cooperative. cancel() only raises a flag; the body turns
Cancelled when it next reaches a cancellation point (a blocking read, a
channel operation, or an explicit cancellation_point() call).
"""

import itertools
import threading
from enum import Enum
from typing import Any, Callable, Optional, Union

import exec_context
import liveness
import stm
from errors import (
    BlockingReadProhibited,
    CancellationRequested,
    FutureCancelled,
    FutureFailed,
    ScenarioAborted,
)
from exec_context import DeferredEffect, EffectKind, Scope, ScopeType

_future_ids = itertools.count(1)
_promise_ids = itertools.count(1)


class FutureState(Enum):
    PENDING = "Pending"
    RESOLVED = "Resolved"
    FAILED = "Failed"
    CANCELLED = "Cancelled"


class Future:
    def __init__(self, body: Callable[[], Any]):
        self.future_id = next(_future_ids)
        self.resource_id = liveness.new_resource_id("future")
        self._cond = threading.Condition()
        self._body = body
        self.state = FutureState.PENDING
        self.value: Any = None
        self.error: Optional[BaseException] = None
        self.cancel_event = threading.Event()
        self.unit_id: Optional[int] = None

    def _start(self) -> None:
        self.unit_id, _ = exec_context.spawn_unit(
            f"future-{self.future_id}", self._run, Scope(ScopeType.FUTURE_BODY, self.future_id),
            cancel_event=self.cancel_event,
        )

    def _settle(self, state: FutureState, value: Any = None, error: Optional[BaseException] = None) -> None:
        with self._cond:
            if self.state is not FutureState.PENDING:
                return
            self.state = state
            self.value = value
            self.error = error
            self._cond.notify_all()

    def _run(self) -> None:
        try:
            value = self._body()
        except CancellationRequested:
            self._settle(FutureState.CANCELLED)
        except ScenarioAborted:
            self._settle(FutureState.CANCELLED)
            raise
        except BaseException as exc:
            self._settle(FutureState.FAILED, error=exc)
        else:
            self._settle(FutureState.RESOLVED, value=value)
        liveness.progress()

    def cancel(self) -> None:
        if self.state is FutureState.PENDING:
            self.cancel_event.set()

    @property
    def realized(self) -> bool:
        return self.state is not FutureState.PENDING

    def _result(self) -> Any:
        if self.state is FutureState.RESOLVED:
            return self.value
        if self.state is FutureState.FAILED:
            raise FutureFailed(f"future {self.future_id} failed: {self.error!r}", self.error)
        raise FutureCancelled(f"future {self.future_id} was cancelled")

    def __repr__(self) -> str:
        return f"Future({self.future_id} {self.state.value})"


class Promise:
    def __init__(self):
        self.promise_id = next(_promise_ids)
        self.resource_id = liveness.new_resource_id("promise")
        self._cond = threading.Condition()
        self.delivered = False
        self.value: Any = None
        self.deliveries = 0

    @property
    def realized(self) -> bool:
        return self.delivered

    def deliver(self, value: Any) -> bool:
        context = exec_context.current_context()
        if context.mode is exec_context.Mode.GUARDED and context.contains(ScopeType.TRANSACTION):
            exec_context.defer_until_commit(DeferredEffect(
                kind=EffectKind.PROMISE_DELIVER,
                target=self,
                payload=value,
                apply=lambda: self._deliver_now(value),
            ))
            return True
        return self._deliver_now(value)

    def _deliver_now(self, value: Any) -> bool:
        with self._cond:
            if self.delivered:
                return False
            self.delivered = True
            self.value = value
            self.deliveries += 1
            self._cond.notify_all()
        liveness.progress()
        return True

    def __repr__(self) -> str:
        state = f"Delivered({self.value!r})" if self.delivered else "Pending"
        return f"Promise({self.promise_id} {state})"


def future_spawn(body: Callable[[], Any]) -> Future:
    future = Future(body)
    txn = stm.current_txn()
    if txn is not None and exec_context.is_guarded():
        txn.spawned_futures.append(future)
    future._start()
    return future


def future_cancel(future: Future) -> None:
    future.cancel()


def promise_new() -> Promise:
    return Promise()


def promise_deliver(promise: Promise, value: Any) -> bool:
    return promise.deliver(value)


def cancellation_point() -> None:
    """Explicit poll: raise inside a cancelled future body, no-op elsewhere."""
    liveness.check_aborted()
    exec_context.check_cancelled()


def blocking_deref(target: Union[Future, Promise], timeout: Optional[float] = None) -> Any:
    context = exec_context.current_context()
    if context.mode is exec_context.Mode.GUARDED and context.contains(ScopeType.AGENT_ACTION):
        raise BlockingReadProhibited(f"cannot read {target!r} inside an agent action (guarded mode)")
    exec_context.check_cancelled()

    if isinstance(target, Future):
        with target._cond:
            liveness.wait_until(target._cond, lambda: target.state is not FutureState.PENDING,
                                target.resource_id, resolver=target.unit_id, timeout=timeout)
        liveness.progress()
        return target._result()

    with target._cond:
        liveness.wait_until(target._cond, lambda: target.delivered, target.resource_id, timeout=timeout)
    liveness.progress()
    return target.value
