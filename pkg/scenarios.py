"""
Scenario catalog: one executable script per cell of the composition
matrices (row = outer model, column = inner model used inside it).

Scripts are deterministic. Where a defect depends on an interleaving,
the script forces it with gates and helper units (a contender that
commits to a ref or resets an atom at exactly the right moment) instead
of hoping for a lucky schedule. Safe cells run a bounded stress workload
with a fixed seed and check a counting invariant.

A script returns a Verdict (OK or RaceObserved) or raises; the harness
turns raised errors, detector verdicts and watchdog trips into the
observed verdict.
"""

import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

import exec_context
from agents import Agent, agent_await, agent_deref, agent_new, agent_send
from atoms import Atom, atom_deref, atom_new, atom_reset, atom_swap
from channels import Channel, chan_new, chan_put, chan_take, go_spawn
from config import HarnessConfig
from errors import PREVENTION_ERRORS, FutureCancelled, ScenarioAborted
from exec_context import Mode
from futures_promises import (
    Future,
    blocking_deref,
    cancellation_point,
    future_spawn,
    promise_deliver,
    promise_new,
)
from liveness import Gate
import stm
from stm import Ref, ref_alter, ref_deref, ref_new, ref_set, transaction_run

MODELS = ("atoms", "agents", "refs", "futprom", "channels")
PREVENTION_KINDS = tuple(cls.__name__ for cls in PREVENTION_ERRORS)


class Property(Enum):
    SAFETY = "Safety"
    LIVENESS = "Liveness"

    @classmethod
    def parse(cls, value: "Property | str") -> "Property":
        if isinstance(value, Property):
            return value
        return cls(str(value).capitalize())


class VerdictKind(Enum):
    OK = "OK"
    RACE = "RaceObserved"
    DEADLOCK = "DeadlockDetected"
    LIVELOCK = "LivelockSuspected"
    ERROR = "ErrorRaised"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    detail: Any = None
    error: Optional[str] = None

    @classmethod
    def ok(cls, detail: Any = None) -> "Verdict":
        return cls(VerdictKind.OK, detail)

    @classmethod
    def race(cls, detail: Any) -> "Verdict":
        return cls(VerdictKind.RACE, detail)

    @classmethod
    def raised(cls, kind: str, detail: Any = None) -> "Verdict":
        return cls(VerdictKind.ERROR, detail, kind)

    @classmethod
    def parse(cls, text: str) -> "Verdict":
        short = {"OK": VerdictKind.OK, "Race": VerdictKind.RACE,
                 "Deadlock": VerdictKind.DEADLOCK, "Livelock": VerdictKind.LIVELOCK}
        if text in short:
            return cls(short[text])
        return cls.raised(text)

    @property
    def label(self) -> str:
        if self.kind is VerdictKind.ERROR:
            return f"ErrorRaised({self.error})"
        return self.kind.value

    @property
    def is_issue(self) -> bool:
        return self.kind in (VerdictKind.RACE, VerdictKind.DEADLOCK, VerdictKind.LIVELOCK)

    @property
    def is_prevention(self) -> bool:
        return self.kind is VerdictKind.ERROR and self.error in PREVENTION_KINDS

    def matches(self, other: "Verdict") -> bool:
        if self.kind is not other.kind:
            return False
        return self.kind is not VerdictKind.ERROR or self.error == other.error


@dataclass
class ScenarioSpec:
    id: str
    outer: str
    inner: str
    property: Property
    expected: Dict[Mode, Verdict]
    script: Callable[["ScenarioContext"], Verdict]
    source: str
    role: str = "cell"


# ---------------------------------------------------------------------------
# Script helpers
# ---------------------------------------------------------------------------

def inc(x: int) -> int:
    return x + 1


def dec(x: int) -> int:
    return x - 1


class Task:
    """A helper unit whose completion is joined through an orchestration gate."""

    def __init__(self, name: str, fn: Callable[[], Any]):
        self.done = Gate(f"{name}-done")
        self.value: Any = None
        self.error: Optional[BaseException] = None

        def run() -> None:
            try:
                self.value = fn()
            except ScenarioAborted:
                raise
            except BaseException as exc:
                self.error = exc
            finally:
                self.done.open()

        self.unit_id, _ = exec_context.spawn_unit(name, run)

    def join(self) -> Any:
        self.done.wait()
        if self.error is not None:
            raise self.error
        return self.value


class ScenarioContext:
    """Per-run state handed to a script: config, seeded RNG and helpers."""

    def __init__(self, config: HarnessConfig, mode: Mode):
        self.config = config
        self.mode = mode
        self.rng = np.random.default_rng(config.seed)
        self.units = config.stress_units
        self.ops = config.stress_ops
        # Liveness ✓-cells run a lighter workload than the safety stress runs.
        self.light_ops = max(1, config.stress_ops // 10)

    def spawn(self, name: str, fn: Callable[[], Any]) -> Task:
        return Task(name, fn)

    def join_all(self, tasks: List[Task]) -> List[Any]:
        return [task.join() for task in tasks]

    def deltas(self, rows: int, cols: int) -> np.ndarray:
        return self.rng.integers(1, 10, size=(rows, cols))

    def force_atom_conflict(self, atom: Atom) -> None:
        """Bump the atom's version from another unit, forcing a pending CAS to fail."""
        Task("atom-contender", lambda: atom_reset(atom, atom_deref(atom))).join()

    def force_ref_conflict(self, ref: Ref) -> None:
        """Commit to ref from another unit, invalidating the caller's attempt."""
        Task("ref-contender", lambda: transaction_run(lambda: ref_set(ref, ref_deref(ref)))).join()

    @staticmethod
    def raise_if_failed(*agents: Agent) -> None:
        for agent in agents:
            if agent.failed is not None:
                raise agent.failed


def _first_attempt_counter() -> Callable[[], int]:
    """Returns a callable that yields 1, 2, 3, ... on successive calls."""
    counter = [0]

    def bump() -> int:
        counter[0] += 1
        return counter[0]

    return bump


# ---------------------------------------------------------------------------
# Safety: atoms row (functions given to swap may re-execute)
# ---------------------------------------------------------------------------

def s_atoms_atoms(ctx: ScenarioContext) -> Verdict:
    unread = atom_new(10)
    read = atom_new(20)
    read_all_done = Gate("read-all")
    mark_unread_done = Gate("mark-unread")

    def read_all() -> None:
        atom_swap(read, lambda n: n + atom_deref(unread))
        read_all_done.open()
        mark_unread_done.wait()
        atom_reset(unread, 0)

    def mark_unread() -> None:
        read_all_done.wait()
        atom_swap(unread, inc)
        atom_swap(read, dec)
        mark_unread_done.open()

    ctx.join_all([ctx.spawn("read-all", read_all), ctx.spawn("mark-unread", mark_unread)])
    total = atom_deref(read) + atom_deref(unread)
    if total != 30:
        return Verdict.race(f"read + unread = {total}, expected 30")
    return Verdict.ok()


def s_atoms_agents(ctx: ScenarioContext) -> Verdict:
    notifications = agent_new([])
    unread_mails = atom_new(0)
    attempt = _first_attempt_counter()

    def new_mail(n: int) -> int:
        agent_send(notifications, lambda msgs: ["New mail!"] + msgs)
        if attempt() == 1:
            ctx.force_atom_conflict(unread_mails)
        return n + 1

    atom_swap(unread_mails, new_mail)
    agent_await(notifications)
    sends = len(agent_deref(notifications))
    if sends != 1:
        return Verdict.race(f"{sends} notifications for one committed swap, expected 1")
    return Verdict.ok()


def s_atoms_refs(ctx: ScenarioContext) -> Verdict:
    unread = atom_new(10)
    mail = ref_new({"subject": "Hi", "read-count": 0})
    attempt = _first_attempt_counter()

    def mark_read(n: int) -> int:
        transaction_run(lambda: ref_set(mail, {**ref_deref(mail), "read-count": ref_deref(mail)["read-count"] + 1}))
        if attempt() == 1:
            ctx.force_atom_conflict(unread)
        return n - 1

    atom_swap(unread, mark_read)
    marked = 10 - atom_deref(unread)
    read_count = ref_deref(mail)["read-count"]
    if read_count != marked:
        return Verdict.race(f"read-count = {read_count} but unread dropped by {marked}")
    return Verdict.ok()


def s_atoms_futprom(ctx: ScenarioContext) -> Verdict:
    counter = atom_new(0)
    runs = atom_new(0)
    futures: List[Future] = []
    attempt = _first_attempt_counter()

    def spawn_worker(n: int) -> int:
        futures.append(future_spawn(lambda: atom_swap(runs, inc)))
        if attempt() == 1:
            ctx.force_atom_conflict(counter)
        return n + 1

    atom_swap(counter, spawn_worker)
    for future in futures:
        blocking_deref(future)
    if atom_deref(runs) != 1:
        return Verdict.race(f"future body ran {atom_deref(runs)} times for one committed swap")
    return Verdict.ok()


def s_atoms_futprom_deliver(ctx: ScenarioContext) -> Verdict:
    counter = atom_new(0)
    result = promise_new()
    delivered: List[bool] = []
    attempt = _first_attempt_counter()

    def deliver_result(n: int) -> int:
        k = attempt()
        delivered.append(promise_deliver(result, f"attempt-{k}"))
        if k == 1:
            ctx.force_atom_conflict(counter)
        return n + 1

    atom_swap(counter, deliver_result)
    observed = blocking_deref(result)
    committed = f"attempt-{len(delivered)}"
    if observed != committed or delivered != [True]:
        return Verdict.race(f"deliver results {delivered}; readers see {observed!r}, committed {committed!r}")
    return Verdict.ok()


def s_atoms_channels(ctx: ScenarioContext) -> Verdict:
    counter = atom_new(0)
    outbox = chan_new()
    spawned = [0]
    attempt = _first_attempt_counter()

    def announce(n: int) -> int:
        spawned[0] += 1
        go_spawn(lambda: chan_put(outbox, f"mail-{n}"))
        if attempt() == 1:
            ctx.force_atom_conflict(counter)
        return n + 1

    atom_swap(counter, announce)
    received = [chan_take(outbox) for _ in range(spawned[0])]
    if len(received) != 1:
        return Verdict.race(f"{len(received)} messages for one committed swap: {received}")
    return Verdict.ok()


# ---------------------------------------------------------------------------
# Safety: agents row (each action runs exactly once, serially)
# ---------------------------------------------------------------------------

def s_agents_atoms(ctx: ScenarioContext) -> Verdict:
    counter = atom_new(0)
    workers = [agent_new(0) for _ in range(ctx.units)]
    deltas = ctx.deltas(ctx.units, ctx.ops)
    for j in range(ctx.ops):
        for i, worker in enumerate(workers):
            d = int(deltas[i, j])
            agent_send(worker, lambda s, d=d: (atom_swap(counter, lambda v: v + d), s + 1)[1])
    agent_await(*workers)
    ctx.raise_if_failed(*workers)
    expected = int(deltas.sum())
    if atom_deref(counter) != expected or any(agent_deref(w) != ctx.ops for w in workers):
        return Verdict.race(f"counter {atom_deref(counter)}, expected {expected}")
    return Verdict.ok()


def s_agents_agents(ctx: ScenarioContext) -> Verdict:
    sources = [agent_new(0) for _ in range(ctx.units)]
    sinks = [agent_new(0) for _ in range(ctx.units)]
    deltas = ctx.deltas(ctx.units, ctx.ops)
    for j in range(ctx.ops):
        for i, source in enumerate(sources):
            d = int(deltas[i, j])
            sink = sinks[(i + j) % ctx.units]

            def relay(s: int, d: int = d, sink: Agent = sink) -> int:
                agent_send(sink, lambda t: t + d)
                return s + 1

            agent_send(source, relay)
    agent_await(*sources)
    agent_await(*sinks)
    ctx.raise_if_failed(*sources, *sinks)
    total = sum(agent_deref(s) for s in sinks)
    if total != int(deltas.sum()):
        return Verdict.race(f"sinks hold {total}, expected {int(deltas.sum())}")
    return Verdict.ok()


def s_agents_refs(ctx: ScenarioContext) -> Verdict:
    balance = ref_new(0)
    workers = [agent_new(0) for _ in range(ctx.units)]
    deltas = ctx.deltas(ctx.units, ctx.ops)
    for j in range(ctx.ops):
        for i, worker in enumerate(workers):
            d = int(deltas[i, j])
            agent_send(worker, lambda s, d=d: (transaction_run(lambda: ref_alter(balance, lambda v: v + d)), s + 1)[1])
    agent_await(*workers)
    ctx.raise_if_failed(*workers)
    if ref_deref(balance) != int(deltas.sum()):
        return Verdict.race(f"balance {ref_deref(balance)}, expected {int(deltas.sum())}")
    return Verdict.ok()


def s_agents_futprom(ctx: ScenarioContext) -> Verdict:
    workers = [agent_new(0) for _ in range(ctx.units)]
    promises = [[promise_new() for _ in range(ctx.ops)] for _ in range(ctx.units)]
    children: List[Future] = []
    outcomes: List[bool] = []
    lock = threading.Lock()

    for j in range(ctx.ops):
        for i, worker in enumerate(workers):
            def reply(s: int, i: int = i, j: int = j) -> int:
                ok = promise_deliver(promises[i][j], (i, j))
                if j == 0:
                    with lock:
                        children.append(future_spawn(lambda: i * 100))
                with lock:
                    outcomes.append(ok)
                return s + 1

            agent_send(worker, reply)
    agent_await(*workers)
    ctx.raise_if_failed(*workers)
    values = [blocking_deref(promises[i][j]) for i in range(ctx.units) for j in range(ctx.ops)]
    expected = [(i, j) for i in range(ctx.units) for j in range(ctx.ops)]
    child_values = sorted(blocking_deref(f) for f in children)
    if values != expected or not all(outcomes) or child_values != [i * 100 for i in range(ctx.units)]:
        return Verdict.race("agent-delivered replies do not match the requests")
    return Verdict.ok()


def s_agents_channels(ctx: ScenarioContext) -> Verdict:
    inbox = chan_new()
    workers = [agent_new(0) for _ in range(ctx.units)]
    for j in range(ctx.ops):
        for i, worker in enumerate(workers):
            agent_send(worker, lambda s, i=i, j=j: (chan_put(inbox, (i, j)), s + 1)[1])
    received = Counter(chan_take(inbox) for _ in range(ctx.units * ctx.ops))
    agent_await(*workers)
    ctx.raise_if_failed(*workers)
    sent = Counter((i, j) for i in range(ctx.units) for j in range(ctx.ops))
    if received != sent:
        return Verdict.race("values received differ from values sent")
    return Verdict.ok()


# ---------------------------------------------------------------------------
# Safety: refs row (transaction bodies may re-execute)
# ---------------------------------------------------------------------------

FORCED_TXN_RETRIES = 5


def s_refs_atoms(ctx: ScenarioContext) -> Verdict:
    hits = atom_new(0)
    mail = ref_new(0)

    def body() -> None:
        atom_swap(hits, inc)
        ref_alter(mail, inc)
        if stm.current_attempt() < FORCED_TXN_RETRIES:
            ctx.force_ref_conflict(mail)

    transaction_run(body)
    if atom_deref(hits) != ref_deref(mail):
        return Verdict.race(f"atom bumped {atom_deref(hits)} times for {ref_deref(mail)} committed update")
    return Verdict.ok()


def s_refs_agents(ctx: ScenarioContext) -> Verdict:
    notifications = agent_new([])
    mail = ref_new({"subject": "Hi", "archived": False})

    def archive() -> None:
        ref_set(mail, {**ref_deref(mail), "archived": True})
        agent_send(notifications, lambda msgs: [(f"Archived mail {ref_deref(mail)['subject']}",
                                                 ref_deref(mail)["archived"])] + msgs)
        if stm.current_attempt() < FORCED_TXN_RETRIES:
            ctx.force_ref_conflict(mail)

    transaction_run(archive)
    agent_await(notifications)
    ctx.raise_if_failed(notifications)
    messages = agent_deref(notifications)
    if len(messages) != 1 or messages[0] != ("Archived mail Hi", True):
        return Verdict.race(f"notifications after one commit: {messages}")
    return Verdict.ok()


def s_refs_refs(ctx: ScenarioContext) -> Verdict:
    inner = ref_new(0)
    outer = ref_new(0)
    commits_before = stm.stats.commits

    def worker() -> None:
        for _ in range(ctx.ops):
            transaction_run(lambda: (transaction_run(lambda: ref_alter(inner, inc)), ref_alter(outer, inc)))

    ctx.join_all([ctx.spawn(f"nested-{i}", worker) for i in range(ctx.units)])
    expected = ctx.units * ctx.ops
    commits = stm.stats.commits - commits_before
    if ref_deref(inner) != expected or ref_deref(outer) != expected or commits != expected:
        return Verdict.race(f"inner={ref_deref(inner)} outer={ref_deref(outer)} commits={commits}, expected {expected}")
    return Verdict.ok()


def s_refs_futprom(ctx: ScenarioContext) -> Verdict:
    result = promise_new()
    counter = ref_new(0)
    retries = 3

    def body() -> None:
        promise_deliver(result, f"attempt-{stm.current_attempt()}")
        ref_alter(counter, inc)
        if stm.current_attempt() < retries:
            ctx.force_ref_conflict(counter)

    transaction_run(body)
    observed = blocking_deref(result)
    if observed != f"attempt-{retries}" or result.deliveries != 1:
        return Verdict.race(f"readers see {observed!r}, committed attempt was attempt-{retries}")
    return Verdict.ok()


def s_refs_futprom_spawn(ctx: ScenarioContext) -> Verdict:
    runs = atom_new(0)
    counter = ref_new(0)
    release = Gate("release-workers")
    futures: List[Future] = []

    def work() -> int:
        release.wait()
        cancellation_point()
        return atom_swap(runs, inc)

    def body() -> None:
        futures.append(future_spawn(work))
        ref_alter(counter, inc)
        if stm.current_attempt() < 1:
            ctx.force_ref_conflict(counter)

    transaction_run(body)
    release.open()
    cancelled = 0
    for future in futures:
        try:
            blocking_deref(future)
        except FutureCancelled:
            cancelled += 1
    if atom_deref(runs) != 1:
        return Verdict.race(f"{atom_deref(runs)} futures ran for one committed transaction ({cancelled} cancelled)")
    return Verdict.ok({"cancelled": cancelled})


def s_refs_channels(ctx: ScenarioContext) -> Verdict:
    wire = chan_new()
    counter = ref_new(0)
    received: List[Any] = []

    def consume() -> None:
        while True:
            value = chan_take(wire)
            if value == "END":
                return
            received.append(value)

    consumer = ctx.spawn("consumer", consume)

    def body() -> None:
        chan_put(wire, f"attempt-{stm.current_attempt()}")
        ref_alter(counter, inc)
        if stm.current_attempt() < 1:
            ctx.force_ref_conflict(counter)

    transaction_run(body)
    chan_put(wire, "END")
    consumer.join()
    if len(received) != 1:
        return Verdict.race(f"partner received {received} for one committed transaction")
    return Verdict.ok()


# ---------------------------------------------------------------------------
# Safety: futures and go-block rows (bodies run once on their own unit)
# ---------------------------------------------------------------------------

def _spawner(kind: str) -> Tuple[Callable[[Callable[[], Any]], Any], Callable[[Any], Any]]:
    """(spawn, join) for running workers as futures or as go blocks."""
    if kind == "futures":
        return future_spawn, blocking_deref
    return go_spawn, chan_take


def _stress_atoms(kind: str) -> Callable[[ScenarioContext], Verdict]:
    def script(ctx: ScenarioContext) -> Verdict:
        spawn, join = _spawner(kind)
        counter = atom_new(0)
        deltas = ctx.deltas(ctx.units, ctx.ops)

        def worker(row: np.ndarray) -> int:
            for d in row:
                atom_swap(counter, lambda v, d=int(d): v + d)
            return len(row)

        handles = [spawn(lambda row=deltas[i]: worker(row)) for i in range(ctx.units)]
        for handle in handles:
            join(handle)
        if atom_deref(counter) != int(deltas.sum()):
            return Verdict.race(f"counter {atom_deref(counter)}, expected {int(deltas.sum())}")
        return Verdict.ok()
    return script


def _stress_agents(kind: str) -> Callable[[ScenarioContext], Verdict]:
    def script(ctx: ScenarioContext) -> Verdict:
        spawn, join = _spawner(kind)
        tally = agent_new(0)

        def worker() -> int:
            for _ in range(ctx.ops):
                agent_send(tally, inc)
            agent_await(tally)
            return agent_deref(tally)

        handles = [spawn(worker) for _ in range(ctx.units)]
        seen = [join(handle) for handle in handles]
        ctx.raise_if_failed(tally)
        expected = ctx.units * ctx.ops
        if agent_deref(tally) != expected or max(seen) != expected:
            return Verdict.race(f"tally {agent_deref(tally)}, expected {expected}")
        return Verdict.ok()
    return script


def _stress_refs(kind: str) -> Callable[[ScenarioContext], Verdict]:
    def script(ctx: ScenarioContext) -> Verdict:
        spawn, join = _spawner(kind)
        a, b = ref_new(0), ref_new(0)
        deltas = ctx.deltas(ctx.units, ctx.ops)

        def move(d: int) -> None:
            ref_alter(a, lambda v: v + d)
            ref_alter(b, lambda v: v - d)

        def worker(row: np.ndarray) -> None:
            for d in row:
                transaction_run(lambda d=int(d): move(d))

        handles = [spawn(lambda row=deltas[i]: worker(row)) for i in range(ctx.units)]
        for handle in handles:
            join(handle)
        if ref_deref(a) != int(deltas.sum()) or ref_deref(a) + ref_deref(b) != 0:
            return Verdict.race(f"a={ref_deref(a)} b={ref_deref(b)}, expected a={int(deltas.sum())} and a+b=0")
        return Verdict.ok()
    return script


def _stress_futprom(kind: str) -> Callable[[ScenarioContext], Verdict]:
    def script(ctx: ScenarioContext) -> Verdict:
        spawn, join = _spawner(kind)

        def worker(i: int) -> bool:
            child = future_spawn(lambda: i)
            for j in range(ctx.ops):
                p = promise_new()
                if not promise_deliver(p, (i, j)) or promise_deliver(p, None) or blocking_deref(p) != (i, j):
                    return False
            return blocking_deref(child) == i

        handles = [spawn(lambda i=i: worker(i)) for i in range(ctx.units)]
        results = [join(handle) for handle in handles]
        if not all(results):
            return Verdict.race(f"worker results {results}")
        return Verdict.ok()
    return script


def _stress_channels(kind: str) -> Callable[[ScenarioContext], Verdict]:
    def script(ctx: ScenarioContext) -> Verdict:
        spawn, join = _spawner(kind)
        wire = chan_new()

        def produce(i: int) -> int:
            for j in range(ctx.ops):
                chan_put(wire, (i, j))
            return ctx.ops

        def consume() -> List[Tuple[int, int]]:
            return [chan_take(wire) for _ in range(ctx.ops)]

        producers = [spawn(lambda i=i: produce(i)) for i in range(ctx.units)]
        consumers = [spawn(consume) for _ in range(ctx.units)]
        received: Counter = Counter()
        for handle in consumers:
            received.update(join(handle))
        for handle in producers:
            join(handle)
        sent = Counter((i, j) for i in range(ctx.units) for j in range(ctx.ops))
        if received != sent:
            return Verdict.race("values received differ from values sent")
        return Verdict.ok()
    return script


# ---------------------------------------------------------------------------
# Liveness: atoms row
# ---------------------------------------------------------------------------

def l_atoms_atoms(ctx: ScenarioContext) -> Verdict:
    a, b = atom_new(0), atom_new(0)
    start = Gate("start")

    def bump(first: Atom, second: Atom) -> None:
        start.wait()
        atom_swap(first, lambda x: (atom_swap(second, inc), x + 1)[1])

    tasks = [ctx.spawn("swap-a", lambda: bump(a, b)), ctx.spawn("swap-b", lambda: bump(b, a))]
    start.open()
    ctx.join_all(tasks)
    return Verdict.ok({"a": atom_deref(a), "b": atom_deref(b)})


def x_atoms_atoms_same_atom(ctx: ScenarioContext) -> Verdict:
    a = atom_new(0)
    atom_swap(a, lambda x: atom_swap(a, inc))
    return Verdict.ok()


def l_atoms_agents(ctx: ScenarioContext) -> Verdict:
    ag = agent_new(0)
    at = atom_new(0)
    attempt = _first_attempt_counter()

    def fn(x: int) -> int:
        agent_send(ag, inc)
        if attempt() == 1:
            ctx.force_atom_conflict(at)
        return x + 1

    atom_swap(at, fn)
    agent_await(ag)
    ctx.raise_if_failed(ag)
    return Verdict.ok()


def x_atoms_agents_await(ctx: ScenarioContext) -> Verdict:
    at = atom_new(0)
    ag = agent_new(0)

    def fn(x: int) -> int:
        agent_send(ag, lambda _: atom_swap(at, inc))
        agent_await(ag)
        return x + 1

    atom_swap(at, fn)
    return Verdict.ok()


def l_atoms_refs(ctx: ScenarioContext) -> Verdict:
    at = atom_new(0)
    r = ref_new(0)
    attempt = _first_attempt_counter()

    def fn(x: int) -> int:
        transaction_run(lambda: ref_alter(r, inc))
        if attempt() == 1:
            ctx.force_atom_conflict(at)
        return x + 1

    atom_swap(at, fn)
    return Verdict.ok()


def l_atoms_futprom(ctx: ScenarioContext) -> Verdict:
    at = atom_new(0)
    release = Gate("release")
    slow = future_spawn(lambda: (release.wait(), 5)[1])
    attempt = _first_attempt_counter()

    def fn(x: int) -> int:
        release.open()
        v = blocking_deref(slow)
        if attempt() == 1:
            ctx.force_atom_conflict(at)
        return x + v

    atom_swap(at, fn)
    return Verdict.ok()


def l_atoms_channels(ctx: ScenarioContext) -> Verdict:
    at = atom_new(0)
    wire = chan_new()
    go_spawn(lambda: chan_put(wire, "only-value"))
    attempt = _first_attempt_counter()

    def fn(x: int) -> int:
        chan_take(wire)
        if attempt() == 1:
            ctx.force_atom_conflict(at)
        return x + 1

    atom_swap(at, fn)
    return Verdict.ok()


def _take_once(wire: Channel, taken: Gate) -> Callable[[], Any]:
    def body() -> Any:
        value = chan_take(wire)
        taken.open()
        return value
    return body


def l_atoms_channels_go(ctx: ScenarioContext) -> Verdict:
    at = atom_new(0)
    wire = chan_new()
    taken = Gate("first-take")
    go_spawn(lambda: chan_put(wire, "only-value"))
    readers: List[Channel] = []
    attempt = _first_attempt_counter()

    def fn(x: int) -> int:
        readers.append(go_spawn(_take_once(wire, taken)))
        if attempt() == 1:
            taken.wait()
            ctx.force_atom_conflict(at)
        return x + 1

    atom_swap(at, fn)
    chan_take(readers[-1])
    return Verdict.ok()


# ---------------------------------------------------------------------------
# Liveness: agents row
# ---------------------------------------------------------------------------

def l_agents_atoms(ctx: ScenarioContext) -> Verdict:
    counter = atom_new(0)
    workers = [agent_new(0) for _ in range(ctx.units)]
    for _ in range(ctx.light_ops):
        for worker in workers:
            agent_send(worker, lambda s: (atom_swap(counter, inc), s + 1)[1])
    agent_await(*workers)
    ctx.raise_if_failed(*workers)
    return Verdict.ok()


def l_agents_agents(ctx: ScenarioContext) -> Verdict:
    workers = [agent_new(0) for _ in range(ctx.units)]
    for j in range(ctx.light_ops):
        for i, worker in enumerate(workers):
            peer = workers[(i + 1) % ctx.units]
            agent_send(worker, lambda s, peer=peer: (agent_send(peer, inc), s + 1)[1])
    agent_await(*workers)
    agent_await(*workers)
    ctx.raise_if_failed(*workers)
    return Verdict.ok()


def l_agents_agents_await(ctx: ScenarioContext) -> Verdict:
    ag = agent_new(0)
    other = agent_new(0)
    agent_send(ag, lambda s: (agent_await(other), s)[1])
    agent_await(ag)
    ctx.raise_if_failed(ag)
    return Verdict.ok()


def l_agents_refs(ctx: ScenarioContext) -> Verdict:
    r = ref_new(0)
    workers = [agent_new(0) for _ in range(ctx.units)]
    for _ in range(ctx.light_ops):
        for worker in workers:
            agent_send(worker, lambda s: (transaction_run(lambda: ref_alter(r, inc)), s + 1)[1])
    agent_await(*workers)
    ctx.raise_if_failed(*workers)
    return Verdict.ok()


def l_agents_futprom(ctx: ScenarioContext) -> Verdict:
    p = promise_new()
    ag = agent_new(0)
    agent_send(ag, lambda _: blocking_deref(p))
    agent_send(ag, lambda s: (promise_deliver(p, 1), s)[1])
    agent_await(ag)
    ctx.raise_if_failed(ag)
    return Verdict.ok()


def l_agents_channels(ctx: ScenarioContext) -> Verdict:
    wire = chan_new()
    ag = agent_new(0)
    agent_send(ag, lambda _: chan_take(wire))
    agent_send(ag, lambda s: (chan_put(wire, 1), s)[1])
    agent_await(ag)
    ctx.raise_if_failed(ag)
    return Verdict.ok()


# ---------------------------------------------------------------------------
# Liveness: refs row
# ---------------------------------------------------------------------------

def l_refs_atoms(ctx: ScenarioContext) -> Verdict:
    at = atom_new(0)
    r = ref_new(0)

    def body() -> None:
        atom_swap(at, inc)
        ref_alter(r, inc)
        if stm.current_attempt() < 1:
            ctx.force_ref_conflict(r)

    transaction_run(body)
    return Verdict.ok()


def l_refs_agents(ctx: ScenarioContext) -> Verdict:
    ag = agent_new(0)
    r = ref_new(0)

    def body() -> None:
        ref_alter(r, inc)
        agent_send(ag, inc)
        if stm.current_attempt() < 1:
            ctx.force_ref_conflict(r)

    transaction_run(body)
    agent_await(ag)
    ctx.raise_if_failed(ag)
    return Verdict.ok()


def l_refs_agents_await(ctx: ScenarioContext) -> Verdict:
    ag = agent_new(0)
    r = ref_new(0)
    transaction_run(lambda: (ref_alter(r, inc), agent_await(ag)))
    return Verdict.ok()


def l_refs_refs(ctx: ScenarioContext) -> Verdict:
    r = ref_new(0)
    start = Gate("start")

    def contend() -> None:
        start.wait()
        for _ in range(ctx.light_ops):
            transaction_run(lambda: ref_alter(r, inc))

    tasks = [ctx.spawn("contender-a", contend), ctx.spawn("contender-b", contend)]
    start.open()
    ctx.join_all(tasks)
    return Verdict.ok({"final": ref_deref(r)})


def l_refs_futprom(ctx: ScenarioContext) -> Verdict:
    r = ref_new(0)
    release = Gate("release")
    slow = future_spawn(lambda: (release.wait(), 3)[1])

    def body() -> None:
        release.open()
        ref_alter(r, lambda v: v + blocking_deref(slow))
        if stm.current_attempt() < 1:
            ctx.force_ref_conflict(r)

    transaction_run(body)
    return Verdict.ok()


def l_refs_channels(ctx: ScenarioContext) -> Verdict:
    r = ref_new(0)
    wire = chan_new()
    go_spawn(lambda: chan_put(wire, "only-value"))

    def body() -> None:
        chan_take(wire)
        ref_alter(r, inc)
        if stm.current_attempt() < 1:
            ctx.force_ref_conflict(r)

    transaction_run(body)
    return Verdict.ok()


def l_refs_channels_go(ctx: ScenarioContext) -> Verdict:
    r = ref_new(0)
    wire = chan_new()
    taken = Gate("first-take")
    go_spawn(lambda: chan_put(wire, "only-value"))
    readers: List[Channel] = []

    def body() -> None:
        readers.append(go_spawn(_take_once(wire, taken)))
        ref_alter(r, inc)
        if stm.current_attempt() < 1:
            taken.wait()
            ctx.force_ref_conflict(r)

    transaction_run(body)
    chan_take(readers[-1])
    return Verdict.ok()


# ---------------------------------------------------------------------------
# Liveness: futures row
# ---------------------------------------------------------------------------

def _light(kind: str, work: Callable[[ScenarioContext], Callable[[], Any]]) -> Callable[[ScenarioContext], Verdict]:
    def script(ctx: ScenarioContext) -> Verdict:
        spawn, join = _spawner(kind)
        body = work(ctx)
        handles = [spawn(body) for _ in range(ctx.units)]
        for handle in handles:
            join(handle)
        return Verdict.ok()
    return script


def _swap_work(ctx: ScenarioContext) -> Callable[[], Any]:
    counter = atom_new(0)
    return lambda: [atom_swap(counter, inc) for _ in range(ctx.light_ops)]


def _txn_work(ctx: ScenarioContext) -> Callable[[], Any]:
    r = ref_new(0)
    return lambda: [transaction_run(lambda: ref_alter(r, inc)) for _ in range(ctx.light_ops)]


def _read_future_work(ctx: ScenarioContext) -> Callable[[], Any]:
    release = Gate("release")
    slow = future_spawn(lambda: (release.wait(), 1)[1])

    def work() -> int:
        release.open()
        return blocking_deref(slow)

    return work


def l_futures_agents(ctx: ScenarioContext) -> Verdict:
    mail_ui = agent_new({"subject": "Hi", "thumbnails": []})
    action_started = Gate("ui-action-started")

    def generate_thumbnail() -> bool:
        action_started.wait()
        thumbnail = "thumb-1"
        agent_send(mail_ui, lambda m: {**m, "thumbnails": m["thumbnails"] + [thumbnail]})
        agent_await(mail_ui)
        return True

    thumbnail1 = future_spawn(generate_thumbnail)

    def update_ui(m: Dict[str, Any]) -> Dict[str, Any]:
        action_started.open()
        return {**m, "has_thumbnail": blocking_deref(thumbnail1)}

    agent_send(mail_ui, update_ui)
    agent_await(mail_ui)
    ctx.raise_if_failed(mail_ui)
    blocking_deref(thumbnail1)
    return Verdict.ok()


def l_futures_futprom(ctx: ScenarioContext) -> Verdict:
    ready = Gate("both-defined")
    holder: Dict[str, Future] = {}
    f1 = future_spawn(lambda: (ready.wait(), blocking_deref(holder["f2"]) + 1)[1])
    f2 = future_spawn(lambda: (ready.wait(), blocking_deref(f1) + 1)[1])
    holder["f2"] = f2
    ready.open()
    blocking_deref(f1)
    return Verdict.ok()


def l_futures_channels(ctx: ScenarioContext) -> Verdict:
    wire = chan_new()
    reader = future_spawn(lambda: chan_take(wire))
    blocking_deref(reader)
    return Verdict.ok()


def l_channels_agents(ctx: ScenarioContext) -> Verdict:
    wire = chan_new()
    ag = agent_new(0)
    agent_send(ag, lambda _: chan_take(wire))
    writer = go_spawn(lambda: (agent_await(ag), chan_put(wire, "test"))[1])
    chan_take(writer)
    return Verdict.ok()


def l_channels_channels(ctx: ScenarioContext) -> Verdict:
    forgotten = chan_new()
    reader = go_spawn(lambda: chan_take(forgotten))
    chan_take(reader)
    return Verdict.ok()


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def _expect(faithful: str, guarded: Optional[str] = None) -> Dict[Mode, Verdict]:
    return {Mode.FAITHFUL: Verdict.parse(faithful), Mode.GUARDED: Verdict.parse(guarded or faithful)}


S, L = Property.SAFETY, Property.LIVENESS

CATALOG: List[ScenarioSpec] = [
    # Safety, atoms row: irrevocable work inside a re-executed swap function.
    ScenarioSpec("S-atoms-atoms", "atoms", "atoms", S, _expect("Race"), s_atoms_atoms,
                 "two uncoordinated atoms: read/unread mail counters lose an update"),
    ScenarioSpec("S-atoms-agents", "atoms", "agents", S, _expect("Race"), s_atoms_agents,
                 "send inside swap: one forced retry sends the notification twice"),
    ScenarioSpec("S-atoms-refs", "atoms", "refs", S, _expect("Race"), s_atoms_refs,
                 "transaction inside swap: re-executed swap commits the read-count twice"),
    ScenarioSpec("S-atoms-futprom", "atoms", "futprom", S, _expect("Race"), s_atoms_futprom,
                 "future created inside swap: the body runs once per attempt"),
    ScenarioSpec("S-atoms-futprom-deliver", "atoms", "futprom", S, _expect("Race"), s_atoms_futprom_deliver,
                 "deliver inside swap: the aborted attempt's value wins, the second deliver fails silently"),
    ScenarioSpec("S-atoms-channels", "atoms", "channels", S, _expect("Race"), s_atoms_channels,
                 "go block started inside swap: the message goes out once per attempt"),
    # Safety, agents row: actions run exactly once.
    ScenarioSpec("S-agents-atoms", "agents", "atoms", S, _expect("OK"), s_agents_atoms,
                 "stress: agent actions swap a shared atom"),
    ScenarioSpec("S-agents-agents", "agents", "agents", S, _expect("OK"), s_agents_agents,
                 "stress: agent actions send to other agents (held until the action completes)"),
    ScenarioSpec("S-agents-refs", "agents", "refs", S, _expect("OK"), s_agents_refs,
                 "stress: agent actions run transactions"),
    ScenarioSpec("S-agents-futprom", "agents", "futprom", S, _expect("OK"), s_agents_futprom,
                 "stress: agents reply through promises and start futures"),
    ScenarioSpec("S-agents-channels", "agents", "channels", S, _expect("OK"), s_agents_channels,
                 "stress: agent actions put on a channel drained by the caller"),
    # Safety, refs row: only agent sends and nested transactions are retry-safe.
    ScenarioSpec("S-refs-atoms", "refs", "atoms", S, _expect("Race"), s_refs_atoms,
                 "swap inside a transaction with five forced retries"),
    ScenarioSpec("S-refs-agents", "refs", "agents", S, _expect("OK"), s_refs_agents,
                 "send inside a transaction with five forced retries is delayed to commit"),
    ScenarioSpec("S-refs-refs", "refs", "refs", S, _expect("OK"), s_refs_refs,
                 "stress: nested transactions merge into one commit"),
    ScenarioSpec("S-refs-futprom", "refs", "futprom", S, _expect("Race", "OK"), s_refs_futprom,
                 "deliver inside a transaction with three forced retries"),
    ScenarioSpec("S-refs-futprom-spawn", "refs", "futprom", S, _expect("Race", "OK"), s_refs_futprom_spawn,
                 "future started inside a transaction attempt that is retried"),
    ScenarioSpec("S-refs-channels", "refs", "channels", S, _expect("Race", "IrrevocableInRetryScope"),
                 s_refs_channels, "channel put inside a transaction with one forced retry"),
    # Safety, futures and go-block rows: bodies run once on a fresh unit.
    ScenarioSpec("S-futures-atoms", "futprom", "atoms", S, _expect("OK"), _stress_atoms("futures"),
                 "stress: futures swap a shared atom"),
    ScenarioSpec("S-futures-agents", "futprom", "agents", S, _expect("OK"), _stress_agents("futures"),
                 "stress: futures send to and await an agent"),
    ScenarioSpec("S-futures-refs", "futprom", "refs", S, _expect("OK"), _stress_refs("futures"),
                 "stress: futures run transfer transactions"),
    ScenarioSpec("S-futures-futprom", "futprom", "futprom", S, _expect("OK"), _stress_futprom("futures"),
                 "stress: futures deliver and read promises, start and read futures"),
    ScenarioSpec("S-futures-channels", "futprom", "channels", S, _expect("OK"), _stress_channels("futures"),
                 "stress: producer and consumer futures over one channel"),
    ScenarioSpec("S-channels-atoms", "channels", "atoms", S, _expect("OK"), _stress_atoms("go"),
                 "stress: go blocks swap a shared atom"),
    ScenarioSpec("S-channels-agents", "channels", "agents", S, _expect("OK"), _stress_agents("go"),
                 "stress: go blocks send to and await an agent"),
    ScenarioSpec("S-channels-refs", "channels", "refs", S, _expect("OK"), _stress_refs("go"),
                 "stress: go blocks run transfer transactions"),
    ScenarioSpec("S-channels-futprom", "channels", "futprom", S, _expect("OK"), _stress_futprom("go"),
                 "stress: go blocks deliver and read promises"),
    ScenarioSpec("S-channels-channels", "channels", "channels", S, _expect("OK"), _stress_channels("go"),
                 "stress: producer and consumer go blocks over one channel"),

    # Liveness, atoms row.
    ScenarioSpec("L-atoms-atoms", "atoms", "atoms", L, _expect("OK"), l_atoms_atoms,
                 "two units swap two atoms inside each other's swap functions; both terminate"),
    ScenarioSpec("X-atoms-atoms-same-atom", "atoms", "atoms", L, _expect("Livelock", "ReentrantSwap"),
                 x_atoms_atoms_same_atom, "swap inside a swap of the same atom re-executes forever",
                 role="exhibit"),
    ScenarioSpec("L-atoms-agents", "atoms", "agents", L, _expect("OK"), l_atoms_agents,
                 "send inside a retried swap; no await"),
    ScenarioSpec("X-atoms-agents-await", "atoms", "agents", L, _expect("Livelock", "AwaitProhibited"),
                 x_atoms_agents_await, "await inside swap on an agent whose action re-triggers the swap",
                 role="exhibit"),
    ScenarioSpec("L-atoms-refs", "atoms", "refs", L, _expect("OK"), l_atoms_refs,
                 "transaction inside a retried swap"),
    ScenarioSpec("L-atoms-futprom", "atoms", "futprom", L, _expect("OK"), l_atoms_futprom,
                 "future read inside a retried swap blocks only the first time"),
    ScenarioSpec("L-atoms-channels", "atoms", "channels", L, _expect("Deadlock", "IrrevocableInRetryScope"),
                 l_atoms_channels, "take inside swap: the retry waits for a value that was already consumed"),
    ScenarioSpec("L-atoms-channels-go", "atoms", "channels", L, _expect("Deadlock"), l_atoms_channels_go,
                 "go block started inside swap: the re-executed block takes a value the first one consumed"),
    # Liveness, agents row.
    ScenarioSpec("L-agents-atoms", "agents", "atoms", L, _expect("OK"), l_agents_atoms,
                 "agent actions swap an atom"),
    ScenarioSpec("L-agents-agents", "agents", "agents", L, _expect("OK"), l_agents_agents,
                 "agent actions send to peer agents"),
    ScenarioSpec("L-agents-agents-await", "agents", "agents", L, _expect("AwaitProhibited"),
                 l_agents_agents_await, "await inside an agent action is refused"),
    ScenarioSpec("L-agents-refs", "agents", "refs", L, _expect("OK"), l_agents_refs,
                 "agent actions run transactions"),
    ScenarioSpec("L-agents-futprom", "agents", "futprom", L, _expect("Deadlock", "BlockingReadProhibited"),
                 l_agents_futprom, "action reads a promise only a later action to the same agent delivers"),
    ScenarioSpec("L-agents-channels", "agents", "channels", L, _expect("Deadlock"), l_agents_channels,
                 "action takes from a channel only a later action to the same agent writes"),
    # Liveness, refs row.
    ScenarioSpec("L-refs-atoms", "refs", "atoms", L, _expect("OK"), l_refs_atoms,
                 "swap inside a retried transaction"),
    ScenarioSpec("L-refs-agents", "refs", "agents", L, _expect("OK"), l_refs_agents,
                 "send inside a retried transaction"),
    ScenarioSpec("L-refs-agents-await", "refs", "agents", L, _expect("AwaitProhibited"),
                 l_refs_agents_await, "await inside a transaction is refused"),
    ScenarioSpec("L-refs-refs", "refs", "refs", L, _expect("OK"), l_refs_refs,
                 "two units contend on one ref; bounded retries with backoff terminate"),
    ScenarioSpec("L-refs-futprom", "refs", "futprom", L, _expect("OK"), l_refs_futprom,
                 "future read inside a retried transaction blocks only the first time"),
    ScenarioSpec("L-refs-channels", "refs", "channels", L, _expect("Deadlock", "IrrevocableInRetryScope"),
                 l_refs_channels, "take inside a transaction: the retry waits for a consumed value"),
    ScenarioSpec("L-refs-channels-go", "refs", "channels", L, _expect("Deadlock"), l_refs_channels_go,
                 "go block started inside a transaction: the retried block takes a consumed value"),
    # Liveness, futures row.
    ScenarioSpec("L-futures-atoms", "futprom", "atoms", L, _expect("OK"), _light("futures", _swap_work),
                 "futures swap an atom"),
    ScenarioSpec("L-futures-agents", "futprom", "agents", L, _expect("Deadlock", "BlockingReadProhibited"),
                 l_futures_agents, "thumbnail future awaits the UI agent whose action reads the future"),
    ScenarioSpec("L-futures-refs", "futprom", "refs", L, _expect("OK"), _light("futures", _txn_work),
                 "futures run transactions"),
    ScenarioSpec("L-futures-futprom", "futprom", "futprom", L, _expect("Deadlock"), l_futures_futprom,
                 "two mutually recursive futures read each other"),
    ScenarioSpec("L-futures-channels", "futprom", "channels", L, _expect("Deadlock"), l_futures_channels,
                 "future takes from a channel nobody writes"),
    # Liveness, go-block row.
    ScenarioSpec("L-channels-atoms", "channels", "atoms", L, _expect("OK"), _light("go", _swap_work),
                 "go blocks swap an atom"),
    ScenarioSpec("L-channels-agents", "channels", "agents", L, _expect("Deadlock"), l_channels_agents,
                 "go block awaits an agent before writing the channel the agent's action reads"),
    ScenarioSpec("L-channels-refs", "channels", "refs", L, _expect("OK"), _light("go", _txn_work),
                 "go blocks run transactions"),
    ScenarioSpec("L-channels-futprom", "channels", "futprom", L, _expect("OK"), _light("go", _read_future_work),
                 "go blocks read a future that resolves"),
    ScenarioSpec("L-channels-channels", "channels", "channels", L, _expect("Deadlock"), l_channels_channels,
                 "go block takes from a channel nobody writes"),
]

BY_ID: Dict[str, ScenarioSpec] = {spec.id: spec for spec in CATALOG}
