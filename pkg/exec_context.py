"""
Execution contexts for the conc-compose runtime.

Each execution unit (an OS thread started through spawn_unit, or any
foreign thread that touches the runtime) carries a private stack of
dynamic scopes: which swap function, agent action, transaction, future
body or go block it is currently running inside. The stack decides how
context-sensitive operations behave (an agent send inside a transaction
is deferred, an await inside an agent action is refused, ...).

The module also owns the global runtime mode and the per-transaction
deferred-effect queues that fire at commit time.
"""

import itertools
import threading
import traceback
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

from errors import CancellationRequested, ModeChangeWhileRunning, NotInTransaction, ScenarioAborted, ScenarioInFlight


class Mode(Enum):
    FAITHFUL = "faithful"
    GUARDED = "guarded"

    @classmethod
    def parse(cls, value: "Mode | str") -> "Mode":
        if isinstance(value, Mode):
            return value
        return cls(str(value).lower())


class ScopeType(Enum):
    TOP_LEVEL = "TopLevel"
    SWAP_FN = "SwapFn"
    AGENT_ACTION = "AgentAction"
    TRANSACTION = "Transaction"
    FUTURE_BODY = "FutureBody"
    GO_BLOCK = "GoBlock"


@dataclass(frozen=True)
class Scope:
    kind: ScopeType
    ident: Optional[int] = None

    def __str__(self) -> str:
        if self.ident is None:
            return self.kind.value
        return f"{self.kind.value}({self.ident})"


TOP_LEVEL = Scope(ScopeType.TOP_LEVEL)


@dataclass(frozen=True)
class ExecutionContext:
    """Immutable snapshot of one unit's scope stack and the runtime mode."""

    unit_id: int
    scope_stack: Tuple[Scope, ...]
    mode: Mode

    def contains(self, kind: ScopeType, ident: Optional[int] = None) -> bool:
        return any(s.kind is kind and (ident is None or s.ident == ident) for s in self.scope_stack)

    def innermost(self, *kinds: ScopeType) -> Optional[Scope]:
        for entry in reversed(self.scope_stack):
            if entry.kind in kinds:
                return entry
        return None


class EffectKind(Enum):
    AGENT_SEND = "AgentSend"
    PROMISE_DELIVER = "PromiseDeliver"


@dataclass
class DeferredEffect:
    """An irrevocable action captured during a transaction attempt."""

    kind: EffectKind
    target: Any
    payload: Any
    apply: Callable[[], Any]
    origin_txn: Optional[int] = None


@dataclass
class _UnitState:
    unit_id: int
    name: str
    stack: List[Scope] = field(default_factory=lambda: [TOP_LEVEL])
    deferred: Dict[int, List[DeferredEffect]] = field(default_factory=dict)
    cancel_event: Optional[threading.Event] = None


_unit_ids = itertools.count(1)
_unit_ids_lock = threading.Lock()
_local = threading.local()

_mode = Mode.FAITHFUL
_mode_lock = threading.Lock()
_scenario_running = False

# (on_start(unit_id, name), on_exit(unit_id)) pairs, installed by the liveness layer.
_unit_listeners: List[Tuple[Callable[[int, str], None], Callable[[int], None]]] = []


def _next_unit_id() -> int:
    with _unit_ids_lock:
        return next(_unit_ids)


def _state() -> _UnitState:
    state = getattr(_local, "state", None)
    if state is None:
        state = _UnitState(unit_id=_next_unit_id(), name=threading.current_thread().name)
        _local.state = state
    return state


def current_unit_id() -> int:
    return _state().unit_id


def stack_depth() -> int:
    return len(_state().stack)


def current_context() -> ExecutionContext:
    state = _state()
    return ExecutionContext(unit_id=state.unit_id, scope_stack=tuple(state.stack), mode=get_mode())


def push_scope(scope: Scope) -> int:
    """Push a scope and return the depth to restore on exit."""
    if scope.kind is ScopeType.TOP_LEVEL:
        raise ValueError("TopLevel is only ever the bottom stack entry")
    stack = _state().stack
    depth = len(stack)
    stack.append(scope)
    return depth


def pop_scope(scope: Scope, depth: int) -> None:
    stack = _state().stack
    if len(stack) != depth + 1 or stack[-1] != scope:
        raise RuntimeError(f"Scope stack corrupted: expected {scope} at depth {depth}, stack={stack}")
    stack.pop()


def with_scope(scope: Scope, body: Callable[[], Any]) -> Any:
    """Run body with scope pushed; the stack is restored even if body raises."""
    depth = push_scope(scope)
    try:
        return body()
    finally:
        pop_scope(scope, depth)


# ---------------------------------------------------------------------------
# Deferred effects
# ---------------------------------------------------------------------------

def open_deferred(txn_id: int) -> None:
    _state().deferred[txn_id] = []


def take_deferred(txn_id: int) -> List[DeferredEffect]:
    return _state().deferred.pop(txn_id, [])


def discard_deferred(txn_id: int) -> int:
    return len(_state().deferred.pop(txn_id, []))


def defer_until_commit(effect: DeferredEffect) -> None:
    state = _state()
    txn = None
    for entry in reversed(state.stack):
        if entry.kind is ScopeType.TRANSACTION:
            txn = entry
            break
    if txn is None or txn.ident not in state.deferred:
        raise NotInTransaction(f"Cannot defer {effect.kind.value}: no transaction on unit {state.unit_id}")
    effect.origin_txn = txn.ident
    state.deferred[txn.ident].append(effect)


# ---------------------------------------------------------------------------
# Runtime mode
# ---------------------------------------------------------------------------

def get_mode() -> Mode:
    return _mode


def is_guarded() -> bool:
    return _mode is Mode.GUARDED


def set_mode(mode: "Mode | str") -> None:
    global _mode
    mode = Mode.parse(mode)
    with _mode_lock:
        if _scenario_running:
            raise ModeChangeWhileRunning(f"Cannot switch to {mode.value} while a scenario is running")
        _mode = mode


def begin_scenario() -> None:
    global _scenario_running
    with _mode_lock:
        if _scenario_running:
            raise ScenarioInFlight("Another scenario is already running")
        _scenario_running = True


def end_scenario() -> None:
    global _scenario_running
    with _mode_lock:
        _scenario_running = False


def scenario_running() -> bool:
    return _scenario_running


# ---------------------------------------------------------------------------
# Execution units
# ---------------------------------------------------------------------------

def add_unit_listener(on_start: Callable[[int, str], None], on_exit: Callable[[int], None]) -> None:
    _unit_listeners.append((on_start, on_exit))


def cancel_requested() -> bool:
    event = _state().cancel_event
    return event is not None and event.is_set()


def check_cancelled() -> None:
    if cancel_requested():
        raise CancellationRequested(f"unit {current_unit_id()} cancelled")


def spawn_unit(
    name: str,
    target: Callable[[], Any],
    scope: Optional[Scope] = None,
    cancel_event: Optional[threading.Event] = None,
) -> Tuple[int, threading.Thread]:
    """
    Start target on a fresh execution unit whose stack is [TopLevel, scope]
    ([TopLevel] when scope is None).

    The unit is not inside any of its creator's scopes. Listeners see the
    unit before it runs, so a scenario monitor never misses a unit.
    """
    unit_id = _next_unit_id()

    def run() -> None:
        _local.state = _UnitState(unit_id=unit_id, name=name, stack=[TOP_LEVEL] if scope is None else [TOP_LEVEL, scope], cancel_event=cancel_event)
        try:
            target()
        except ScenarioAborted:
            pass
        except BaseException:
            print(f"[Unit {unit_id}] {name} crashed", file=sys.stderr)
            traceback.print_exc()
        finally:
            for _, on_exit in list(_unit_listeners):
                on_exit(unit_id)

    for on_start, _ in list(_unit_listeners):
        on_start(unit_id, name)
    thread = threading.Thread(target=run, name=f"{name}-{unit_id}", daemon=True)
    thread.start()
    return unit_id, thread
