import os
import sys
import threading

from flask import Flask, jsonify, request
from flask_cors import CORS

from config import HarnessConfig
from errors import ConfigError, UnknownScenario
from exec_context import Mode
from matrix_harness import get_spec, matrix_run, scenario_run, scenario_specs
from report_store import ReportStore
from scenario_session import manager

app = Flask(__name__)
CORS(app)

config = HarnessConfig.from_env()
DATA_DIR = config.data_dir if os.path.isabs(config.data_dir) else os.path.join(os.path.dirname(__file__), config.data_dir)
REPORTS_PATH = os.path.join(DATA_DIR, "reports.json")

print("[Startup] Initializing ReportStore...", file=sys.stderr)
report_store = ReportStore(REPORTS_PATH)
print(f"[Startup] ReportStore ready at {REPORTS_PATH}", file=sys.stderr)

# One scenario at a time; a second request gets 409 instead of queueing.
_run_lock = threading.Lock()


def _busy():
    return jsonify({
        "status": "error",
        "message": "A scenario is already running",
        "active_session": manager.get_status()["active_session"],
    }), 409


def _mode_from(body):
    try:
        return Mode.parse(body.get("mode") or config.mode)
    except ValueError:
        raise ConfigError(f"mode must be faithful or guarded, got {body.get('mode')!r}")


@app.route("/")
def index():
    return jsonify({"status": "ok", "service": "conc-compose", "scenarios": len(scenario_specs())})


@app.route("/api/scenarios", methods=["GET"])
def list_scenarios():
    """
    List scenarios, optionally filtered by ?property=&outer=&inner=.
    """
    try:
        specs = scenario_specs(request.args.get("property"), request.args.get("outer"), request.args.get("inner"))
    except ValueError as e:
        return jsonify({"status": "error", "message": str(e)}), 400
    return jsonify({
        "status": "ok",
        "scenarios": [
            {
                "id": s.id,
                "outer": s.outer,
                "inner": s.inner,
                "property": s.property.value,
                "role": s.role,
                "expected": {mode.value: verdict.label for mode, verdict in s.expected.items()},
                "description": s.source,
            }
            for s in specs
        ],
    })


@app.route("/api/scenarios/<scenario_id>/run", methods=["POST"])
def run_scenario(scenario_id):
    """
    Run one scenario. Body (optional): {"mode": "faithful"|"guarded", "timeout_ms": n}
    """
    body = request.get_json(silent=True) or {}
    try:
        get_spec(scenario_id)
        mode = _mode_from(body)
        run_config = config.with_overrides(timeout_ms=body.get("timeout_ms"))
    except UnknownScenario as e:
        return jsonify({"status": "error", "message": str(e)}), 404
    except ConfigError as e:
        return jsonify({"status": "error", "message": str(e)}), 400

    if not _run_lock.acquire(blocking=False):
        return _busy()
    try:
        print(f"[API] Running {scenario_id} ({mode.value})", file=sys.stderr)
        result = scenario_run(scenario_id, mode, config=run_config)
    finally:
        _run_lock.release()
    return jsonify({"status": "ok", "result": result.to_dict()})


@app.route("/api/matrix", methods=["POST"])
def run_matrix():
    """
    Run the matrix. Body (optional): {"mode": ..., "which": "safety"|"liveness"|"all"}
    """
    body = request.get_json(silent=True) or {}
    which = str(body.get("which", "all")).lower()
    if which not in ("safety", "liveness", "all"):
        return jsonify({"status": "error", "message": f"which must be safety, liveness or all, got {which!r}"}), 400
    try:
        mode = _mode_from(body)
    except ConfigError as e:
        return jsonify({"status": "error", "message": str(e)}), 400

    if not _run_lock.acquire(blocking=False):
        return _busy()
    try:
        report = matrix_run(mode, which, config)
        summary = report_store.record(report)
    finally:
        _run_lock.release()
    return jsonify({"status": "ok", "report": report.to_dict(), "drift": summary["drift"]})


@app.route("/api/reports", methods=["GET"])
def list_reports():
    mode = request.args.get("mode")
    return jsonify({"status": "ok", "reports": report_store.list_runs(mode)})


@app.route("/api/status", methods=["GET"])
def get_status():
    return jsonify({"status": "ok", "busy": _run_lock.locked(), "sessions": manager.get_status()})


if __name__ == "__main__":
    app.run(host="0.0.0.0", port=config.port, debug=False, use_reloader=False)
