"""
Agents: state cells changed by asynchronous actions.

Every agent has a worker unit that drains its FIFO mailbox one action at a
time. The worker starts on the first send and exits once the mailbox has
stayed empty for IDLE_WORKER_SECONDS. Where an action is sent from
decides when it reaches the mailbox:

- inside a transaction: at commit, exactly once (deferred effect), then
  subject to the rules below for wherever the transaction itself ran;
- inside another agent action: when that action completes normally;
- anywhere else (swap functions included): immediately.
"""

import itertools
import sys
import threading
import time
from collections import deque
from typing import Any, Callable, Deque, List, Optional, Tuple, Union

import exec_context
import liveness
from errors import AgentFailed, AwaitProhibited, ScenarioAborted, WaitTimeout
from exec_context import DeferredEffect, EffectKind, Scope, ScopeType

_agent_ids = itertools.count(1)

# A worker with an empty mailbox exits after this long; sends restart it.
IDLE_WORKER_SECONDS = 5.0
_action_local = threading.local()


class _Flush:
    """Mailbox sentinel released when every earlier action has been processed."""

    __slots__ = ("done",)

    def __init__(self):
        self.done = False


class Agent:
    def __init__(self, value: Any):
        self.agent_id = next(_agent_ids)
        self.resource_id = liveness.new_resource_id("agent")
        self._cond = threading.Condition()
        self._state = value
        self._mailbox: Deque[Union[Callable[[Any], Any], _Flush]] = deque()
        self.failed: Optional[BaseException] = None
        self.enqueued = 0
        self.processed = 0
        self.worker_unit: Optional[int] = None

    def deref(self) -> Any:
        return self._state

    # -- sending -----------------------------------------------------------

    def send(self, action: Callable[[Any], Any]) -> None:
        context = exec_context.current_context()
        enclosing = context.innermost(ScopeType.TRANSACTION, ScopeType.AGENT_ACTION)
        if enclosing is not None and enclosing.kind is ScopeType.TRANSACTION:
            exec_context.defer_until_commit(DeferredEffect(
                kind=EffectKind.AGENT_SEND,
                target=self,
                payload=action,
                apply=lambda: self.send(action),
            ))
            return
        # Transactional sends to a failed agent fail at commit instead.
        if self.failed is not None:
            raise AgentFailed(f"Agent {self.agent_id} has failed: {self.failed!r}", self.failed)
        if enclosing is not None and enclosing.kind is ScopeType.AGENT_ACTION:
            held: Optional[List[Tuple["Agent", Callable]]] = getattr(_action_local, "held", None)
            if held is not None:
                held.append((self, action))
                return
        self._enqueue(action)

    def _enqueue(self, item: Union[Callable[[Any], Any], _Flush]) -> None:
        with self._cond:
            if not isinstance(item, _Flush):
                if self.failed is not None:
                    raise AgentFailed(f"Agent {self.agent_id} has failed: {self.failed!r}", self.failed)
                self.enqueued += 1
            self._mailbox.append(item)
            if self.worker_unit is None:
                self.worker_unit, _ = exec_context.spawn_unit(f"agent-{self.agent_id}", self._work)
            self._cond.notify_all()
        liveness.progress()

    # -- worker ------------------------------------------------------------

    def _work(self) -> None:
        try:
            while True:
                with self._cond:
                    try:
                        liveness.wait_until(self._cond, lambda: bool(self._mailbox), self.resource_id,
                                            timeout=IDLE_WORKER_SECONDS, kind=liveness.WaitKind.IDLE)
                    except WaitTimeout:
                        # Cleared under the lock, so the next send starts a fresh worker.
                        self.worker_unit = None
                        return
                    item = self._mailbox.popleft()
                if isinstance(item, _Flush):
                    with self._cond:
                        item.done = True
                        self._cond.notify_all()
                    continue
                self._run_action(item)
        except BaseException:
            with self._cond:
                self.worker_unit = None
            raise

    def _run_action(self, action: Callable[[Any], Any]) -> None:
        if self.failed is not None:
            with self._cond:
                self.processed += 1
            return

        held: List[Tuple[Agent, Callable]] = []
        _action_local.held = held
        try:
            new_state = exec_context.with_scope(
                Scope(ScopeType.AGENT_ACTION, self.agent_id), lambda: action(self._state)
            )
        except ScenarioAborted:
            raise
        except BaseException as exc:
            with self._cond:
                self.failed = exc
                self.processed += 1
                self._cond.notify_all()
            print(f"[Agent] Agent {self.agent_id} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return
        finally:
            _action_local.held = None

        with self._cond:
            self._state = new_state
            self.processed += 1
            self._cond.notify_all()
        liveness.progress()
        for target, sent in held:
            try:
                target._enqueue(sent)
            except AgentFailed as exc:
                liveness.note(f"held send to agent {target.agent_id} dropped: {exc}")

    # -- awaiting ----------------------------------------------------------

    def _flush(self) -> _Flush:
        sentinel = _Flush()
        self._enqueue(sentinel)
        return sentinel

    def __repr__(self) -> str:
        return f"Agent({self.agent_id} {self._state!r}{' failed' if self.failed else ''})"


def agent_new(value: Any) -> Agent:
    return Agent(value)


def agent_send(agent: Agent, action: Callable[[Any], Any]) -> None:
    agent.send(action)


def agent_deref(agent: Agent) -> Any:
    return agent.deref()


def agent_await(*agents: Agent, timeout: Optional[float] = None) -> None:
    """Block until every action sent to each agent before this call has run."""
    context = exec_context.current_context()
    if context.contains(ScopeType.TRANSACTION):
        raise AwaitProhibited("await is not allowed inside a transaction")
    if context.contains(ScopeType.AGENT_ACTION):
        raise AwaitProhibited("await is not allowed inside an agent action")
    if context.mode is exec_context.Mode.GUARDED and context.contains(ScopeType.SWAP_FN):
        raise AwaitProhibited("await is not allowed inside a swap function (guarded mode)")

    deadline = None
    if timeout is not None:
        deadline = time.monotonic() + timeout
    sentinels = [(agent, agent._flush()) for agent in agents]
    for agent, sentinel in sentinels:
        remaining = None
        if deadline is not None:
            remaining = max(0.0, deadline - time.monotonic())
        with agent._cond:
            try:
                liveness.wait_until(agent._cond, lambda: sentinel.done, agent.resource_id,
                                    resolver=agent.worker_unit, timeout=remaining)
            except WaitTimeout:
                raise WaitTimeout(f"await on agent {agent.agent_id} timed out after {timeout}s")
    liveness.progress()
