import json
import os
import sys
from datetime import datetime
from typing import Dict, List, Optional

from matrix_harness import MatrixReport

MAX_RUNS_PER_MODE = 50


def cell_key(cell: Dict) -> str:
    return f"{cell['property']}:{cell['outer']}×{cell['inner']}"


class ReportStore:
    """
    Small JSON-backed history of matrix runs, one list per mode.
    Used to spot verdict drift between runs, not for analytics.
    """

    def __init__(self, path: str):
        self.path = path
        self._data: Dict[str, List[Dict]] = {}
        self._load()

    def _load(self):
        if not os.path.isfile(self.path):
            self._data = {}
            self._persist()
            return
        try:
            with open(self.path, "r", encoding="utf-8") as f:
                self._data = json.load(f)
        except (OSError, ValueError):
            print(f"[Reports] Could not read {self.path}, starting empty", file=sys.stderr)
            self._data = {}

    def _persist(self):
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(self._data, f, indent=2, ensure_ascii=False)

    def summarize(self, report: MatrixReport) -> Dict:
        body = report.to_dict()
        return {
            "recorded_at": datetime.utcnow().isoformat(),
            "mode": body["mode"],
            "config": body["config"],
            "pass": body["pass"],
            "cells": {cell_key(c): c["observed"] for c in body["cells"]},
            "scenarios": {r.id: r.observed.label for r in report.results},
        }

    def last_run(self, mode: str) -> Optional[Dict]:
        runs = self._data.get(mode, [])
        return runs[-1] if runs else None

    def drift(self, summary: Dict, previous: Optional[Dict]) -> Dict[str, Dict[str, str]]:
        """Scenario verdicts that changed since previous (same mode)."""
        if previous is None:
            return {}
        changed = {}
        for scenario_id, verdict in summary["scenarios"].items():
            before = previous.get("scenarios", {}).get(scenario_id)
            if before is not None and before != verdict:
                changed[scenario_id] = {"before": before, "after": verdict}
        return changed

    def record(self, report: MatrixReport) -> Dict:
        summary = self.summarize(report)
        summary["drift"] = self.drift(summary, self.last_run(summary["mode"]))
        runs = self._data.setdefault(summary["mode"], [])
        runs.append(summary)
        del runs[:-MAX_RUNS_PER_MODE]
        self._persist()
        return summary

    def list_runs(self, mode: Optional[str] = None) -> List[Dict]:
        if mode is not None:
            return list(self._data.get(mode, []))
        return [run for runs in self._data.values() for run in runs]
