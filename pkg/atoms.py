"""
Atoms: uncoordinated atomic references.

An atom holds one immutable value. swap() applies a function through a
compare-and-swap loop and re-runs the function whenever another writer
got in first. The CAS compares versions rather than values, so a reset
to an equal value still forces a concurrent swap to retry.
"""

import itertools
import threading
from typing import Any, Callable, Tuple

import exec_context
import liveness
from errors import ReentrantSwap
from exec_context import Scope, ScopeType

_atom_ids = itertools.count(1)
_swap_ids = itertools.count(1)


class Atom:
    def __init__(self, value: Any):
        self.atom_id = next(_atom_ids)
        self._lock = threading.Lock()
        # (value, version) replaced as a unit, so readers never see a torn pair.
        self._cell: Tuple[Any, int] = (value, 0)
        self.retry_count = 0

    @property
    def version(self) -> int:
        return self._cell[1]

    def deref(self) -> Any:
        return self._cell[0]

    def snapshot(self) -> Tuple[Any, int]:
        return self._cell

    def reset(self, value: Any) -> Any:
        with self._lock:
            self._cell = (value, self._cell[1] + 1)
        liveness.progress()
        return value

    def compare_and_set(self, expected_version: int, value: Any) -> bool:
        with self._lock:
            if self._cell[1] != expected_version:
                return False
            self._cell = (value, expected_version + 1)
        liveness.progress()
        return True

    def swap(self, fn: Callable[[Any], Any]) -> Any:
        context = exec_context.current_context()
        if context.mode is exec_context.Mode.GUARDED and context.contains(ScopeType.SWAP_FN, self.atom_id):
            raise ReentrantSwap(f"swap on atom {self.atom_id} from inside its own swap function")

        loop = f"atom:{self.atom_id}/swap:{next(_swap_ids)}"
        scope = Scope(ScopeType.SWAP_FN, self.atom_id)
        attempts = 0
        while True:
            value, version = self._cell
            new_value = exec_context.with_scope(scope, lambda: fn(value))
            if self.compare_and_set(version, new_value):
                return new_value
            attempts += 1
            with self._lock:
                self.retry_count += 1
            liveness.check_aborted()
            liveness.note_retry(liveness.RetryKind.SWAP_RETRY, loop, attempts)

    def __repr__(self) -> str:
        value, version = self._cell
        return f"Atom({self.atom_id} v{version} {value!r})"


def atom_new(value: Any) -> Atom:
    return Atom(value)


def atom_deref(atom: Atom) -> Any:
    return atom.deref()


def atom_reset(atom: Atom, value: Any) -> Any:
    return atom.reset(value)


def atom_swap(atom: Atom, fn: Callable[[Any], Any]) -> Any:
    return atom.swap(fn)


def atom_cas(atom: Atom, expected_version: int, value: Any) -> bool:
    return atom.compare_and_set(expected_version, value)
