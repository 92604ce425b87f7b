"""
Scenario sessions for the conc-compose harness.

A session brackets one scenario run: it fixes the runtime mode, installs
a fresh liveness monitor so the scenario's units, waits and retry
counters are isolated from every other run, and on exit kills whatever
units are still alive.

Key Features:
- One in-flight scenario at a time (mode changes are refused meanwhile)
- Per-session liveness monitor with a tripping retry watchdog
- Reaping of scenario units on session end
- History of finished sessions
"""

import sys
import time
import uuid
from datetime import datetime
from typing import Dict, List, Optional

import exec_context
import liveness
import stm
from config import HarnessConfig

REAP_TIMEOUT_SECONDS = 2.0
MAX_HISTORY = 200


class ScenarioSession:
    """One scenario run: its mode, monitor and timing."""

    def __init__(self, scenario_id: str, mode: exec_context.Mode, config: HarnessConfig):
        self.scenario_id = scenario_id
        self.session_id = str(uuid.uuid4())
        self.mode = mode
        self.config = config
        self.created_at = datetime.utcnow()
        self.ended_at: Optional[datetime] = None
        self.monitor = liveness.Monitor(retry_threshold=config.retry_threshold, trip=True, name=scenario_id)
        self.is_active = True
        self.leaked_units: List[int] = []

    @property
    def notes(self) -> List[str]:
        return list(self.monitor.notes)

    def get_status(self) -> Dict:
        return {
            "session_id": self.session_id,
            "scenario_id": self.scenario_id,
            "mode": self.mode.value,
            "is_active": self.is_active,
            "live_units": len(self.monitor.live_units()),
            "created_at": self.created_at.isoformat(),
            "ended_at": self.ended_at.isoformat() if self.ended_at else None,
        }


class SessionManager:
    """Ensures at most one scenario session is active."""

    def __init__(self):
        self.active: Optional[ScenarioSession] = None
        self.history: List[ScenarioSession] = []
        self._previous_monitor: Optional[liveness.Monitor] = None
        self._previous_detectors = True

    def start_session(self, scenario_id: str, mode: "exec_context.Mode | str",
                      config: HarnessConfig) -> ScenarioSession:
        mode = exec_context.Mode.parse(mode)
        exec_context.set_mode(mode)
        exec_context.begin_scenario()
        session = ScenarioSession(scenario_id, mode, config)
        stm.set_max_retries(config.txn_max_retries)
        self._previous_monitor = liveness.install_monitor(session.monitor)
        # Verdicts depend on the detectors.
        self._previous_detectors = liveness.set_detectors(True)
        self.active = session
        print(f"[Session] Started {scenario_id} ({mode.value}) {session.session_id[:8]}", file=sys.stderr)
        return session

    def end_session(self) -> ScenarioSession:
        session = self.active
        if session is None:
            raise RuntimeError("No active scenario session")

        session.monitor.abort()
        deadline = time.monotonic() + REAP_TIMEOUT_SECONDS
        while session.monitor.live_units() and time.monotonic() < deadline:
            time.sleep(liveness.WAIT_SLICE_SECONDS)
        session.leaked_units = session.monitor.live_units()
        if session.leaked_units:
            print(f"[Session] {session.scenario_id}: {len(session.leaked_units)} unit(s) did not exit",
                  file=sys.stderr)

        liveness.install_monitor(self._previous_monitor)
        liveness.set_detectors(self._previous_detectors)
        stm.set_max_retries(stm.DEFAULT_MAX_RETRIES)
        session.is_active = False
        session.ended_at = datetime.utcnow()
        self.history.append(session)
        del self.history[:-MAX_HISTORY]
        self.active = None
        exec_context.end_scenario()
        print(f"[Session] Ended {session.scenario_id}", file=sys.stderr)
        return session

    def get_status(self) -> Dict:
        return {
            "active_session": self.active.get_status() if self.active else None,
            "total_history": len(self.history),
            "timestamp": datetime.utcnow().isoformat(),
        }


manager = SessionManager()
