"""
Unbuffered rendezvous channels and go blocks.

A put and a take complete together: whichever side arrives first waits
in its FIFO queue until the other side shows up, and the value passes
from exactly one putter to exactly one taker. Only one of the two queues
is ever non-empty.

go_spawn() runs a body on its own unit and returns a channel that offers
the body's result to a single taker. The offer does not hold the go unit,
so a result nobody takes leaves no blocked unit behind.
"""

import itertools
import threading
from collections import deque
from typing import Any, Callable, Deque, Optional

import exec_context
import liveness
from errors import ChannelClosed, IrrevocableInRetryScope, ScenarioAborted
from exec_context import Scope, ScopeType

_chan_ids = itertools.count(1)
_task_ids = itertools.count(1)


class _Put:
    __slots__ = ("value", "matched")

    def __init__(self, value: Any):
        self.value = value
        self.matched = False


class _Take:
    __slots__ = ("value", "matched")

    def __init__(self):
        self.value: Any = None
        self.matched = False


def _guard_retry_scope(op: str) -> None:
    context = exec_context.current_context()
    if context.mode is not exec_context.Mode.GUARDED:
        return
    if context.contains(ScopeType.TRANSACTION) or context.contains(ScopeType.SWAP_FN):
        raise IrrevocableInRetryScope(f"{op} inside a block that may re-execute (guarded mode)")


class Channel:
    def __init__(self):
        self.chan_id = next(_chan_ids)
        self.resource_id = liveness.new_resource_id("chan")
        self._cond = threading.Condition()
        self._putters: Deque[_Put] = deque()
        self._takers: Deque[_Take] = deque()
        self.closed = False
        self.close_cause: Optional[BaseException] = None

    @property
    def waiting_putters(self) -> int:
        return len(self._putters)

    @property
    def waiting_takers(self) -> int:
        return len(self._takers)

    def _closed_error(self) -> ChannelClosed:
        return ChannelClosed(f"channel {self.chan_id} is closed", self.close_cause)

    def put(self, value: Any, timeout: Optional[float] = None) -> None:
        _guard_retry_scope("chan_put")
        exec_context.check_cancelled()
        with self._cond:
            if self.closed:
                raise self._closed_error()
            if self._takers:
                taker = self._takers.popleft()
                taker.value = value
                taker.matched = True
                self._cond.notify_all()
            else:
                request = _Put(value)
                self._putters.append(request)
                try:
                    liveness.wait_until(self._cond, lambda: request.matched or self.closed,
                                        self.resource_id, timeout=timeout)
                except BaseException:
                    self._putters.remove(request)
                    raise
                if not request.matched:
                    self._putters.remove(request)
                    raise self._closed_error()
        liveness.progress()

    def take(self, timeout: Optional[float] = None) -> Any:
        _guard_retry_scope("chan_take")
        exec_context.check_cancelled()
        with self._cond:
            if self._putters:
                putter = self._putters.popleft()
                putter.matched = True
                self._cond.notify_all()
                value = putter.value
            elif self.closed:
                raise self._closed_error()
            else:
                request = _Take()
                self._takers.append(request)
                try:
                    liveness.wait_until(self._cond, lambda: request.matched or self.closed,
                                        self.resource_id, timeout=timeout)
                except BaseException:
                    self._takers.remove(request)
                    raise
                if not request.matched:
                    self._takers.remove(request)
                    raise self._closed_error()
                value = request.value
        liveness.progress()
        return value

    def _offer(self, value: Any) -> None:
        """Hand value to the next taker without blocking the caller."""
        with self._cond:
            if self._takers:
                taker = self._takers.popleft()
                taker.value = value
                taker.matched = True
            else:
                self._putters.append(_Put(value))
            self._cond.notify_all()
        liveness.progress()

    def close(self, cause: Optional[BaseException] = None) -> None:
        with self._cond:
            self.closed = True
            self.close_cause = cause
            self._cond.notify_all()

    def __repr__(self) -> str:
        return f"Channel({self.chan_id} putters={len(self._putters)} takers={len(self._takers)})"


def chan_new() -> Channel:
    return Channel()


def chan_put(channel: Channel, value: Any, timeout: Optional[float] = None) -> None:
    channel.put(value, timeout)


def chan_take(channel: Channel, timeout: Optional[float] = None) -> Any:
    return channel.take(timeout)


def go_spawn(body: Callable[[], Any]) -> Channel:
    result = Channel()
    task_id = next(_task_ids)

    def run() -> None:
        try:
            value = body()
        except ScenarioAborted:
            raise
        except BaseException as exc:
            result.close(exc)
            return
        result._offer(value)

    exec_context.spawn_unit(f"go-{task_id}", run, Scope(ScopeType.GO_BLOCK, task_id))
    return result
