"""
conc-compose command line.

    conc-compose list   [--property P] [--outer M] [--inner M]
    conc-compose run    --scenario ID [--mode M] [--format text|json]
    conc-compose matrix [--mode M] [--property safety|liveness|all] [--repeat N]

Exit status: 0 when the report passes, 1 on any mismatch (or verdict
drift between repeated runs), 2 on usage errors.
"""

import argparse
import os
import sys
from typing import List, Optional

from config import MODES, HarnessConfig
from errors import ConcComposeError, ConfigError, SinkUnwritable, UnknownScenario
from matrix_harness import matrix_run, report_emit, scenario_list, scenario_run, write_sink
from report_store import ReportStore
from scenarios import MODELS

EXIT_PASS, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="conc-compose",
        description="Run the concurrency-model composition matrix and its scenarios.",
    )
    parser.add_argument("command", choices=["matrix", "run", "list"])
    parser.add_argument("--mode", choices=MODES, help="runtime mode (default: CONC_COMPOSE_MODE)")
    parser.add_argument("--property", choices=["safety", "liveness", "all"], default=None)
    parser.add_argument("--outer", choices=MODELS, help="list: filter by outer model")
    parser.add_argument("--inner", choices=MODELS, help="list: filter by inner model")
    parser.add_argument("--scenario", help="run: scenario id")
    parser.add_argument("--format", choices=["text", "json"], default="text")
    parser.add_argument("--out", help="write the report to this path instead of stdout")
    parser.add_argument("--timeout-ms", type=int)
    parser.add_argument("--retry-threshold", type=int)
    parser.add_argument("--quiescence-ms", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--repeat", type=int, default=1, help="matrix: run N times and fail on verdict drift")
    parser.add_argument("--history", action="store_true", help="matrix: append the summary to the report history")
    return parser.parse_args(argv)


def _config(args: argparse.Namespace) -> HarnessConfig:
    return HarnessConfig.from_env().with_overrides(
        mode=args.mode,
        timeout_ms=args.timeout_ms,
        retry_threshold=args.retry_threshold,
        quiescence_ms=args.quiescence_ms,
        seed=args.seed,
    )


def _list(args: argparse.Namespace) -> int:
    prop = None if args.property in (None, "all") else args.property
    ids = scenario_list(prop, args.outer, args.inner)
    write_sink("\n".join(ids) + "\n", args.out)
    return EXIT_PASS


def _run(args: argparse.Namespace, config: HarnessConfig) -> int:
    if not args.scenario:
        print("conc-compose run: --scenario is required", file=sys.stderr)
        return EXIT_USAGE
    result = scenario_run(args.scenario, config.mode, config=config)
    report_emit(result, args.format, args.out)
    return EXIT_PASS if result.matches else EXIT_MISMATCH


def _matrix(args: argparse.Namespace, config: HarnessConfig) -> int:
    if args.repeat < 1:
        print("conc-compose matrix: --repeat must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    which = args.property or "all"
    store = ReportStore(os.path.join(config.data_dir, "reports.json")) if args.history else None

    status = EXIT_PASS
    first = None
    for i in range(args.repeat):
        report = matrix_run(config.mode, which, config)
        labels = {r.id: r.observed.label for r in report.results}
        if first is None:
            first = labels
            report_emit(report, args.format, args.out)
        else:
            drift = {k: (first[k], v) for k, v in labels.items() if first.get(k) != v}
            if drift:
                print(f"[CLI] Run {i + 1}: verdict drift in {sorted(drift)}", file=sys.stderr)
                status = EXIT_MISMATCH
        if store is not None:
            store.record(report)
        if not report.passed:
            status = EXIT_MISMATCH
    return status


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    try:
        if args.command == "list":
            return _list(args)
        config = _config(args)
        if args.command == "run":
            return _run(args, config)
        return _matrix(args, config)
    except (UnknownScenario, ConfigError, SinkUnwritable) as exc:
        print(f"conc-compose: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConcComposeError as exc:
        print(f"conc-compose: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
