"""
Harness configuration, read from the environment (.env supported).

CLI flags and HTTP request bodies override these values through
HarnessConfig.with_overrides().
"""

import os
from dataclasses import dataclass, replace, asdict
from typing import Dict, Optional

from dotenv import load_dotenv

from errors import ConfigError

load_dotenv()

MODES = ("faithful", "guarded")


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if value < 0:
        raise ConfigError(f"{name} must be non-negative, got {value}")
    return value


@dataclass(frozen=True)
class HarnessConfig:
    mode: str = "faithful"
    timeout_ms: int = 10_000
    retry_threshold: int = 1000
    quiescence_ms: int = 500
    seed: int = 7
    stress_units: int = 4
    stress_ops: int = 1000
    txn_max_retries: int = 10_000
    data_dir: str = "data"
    port: int = 8080

    @classmethod
    def from_env(cls) -> "HarnessConfig":
        mode = os.getenv("CONC_COMPOSE_MODE", "faithful").strip().lower()
        if mode not in MODES:
            raise ConfigError(f"CONC_COMPOSE_MODE must be one of {MODES}, got {mode!r}")
        return cls(
            mode=mode,
            timeout_ms=_env_int("CONC_COMPOSE_TIMEOUT_MS", 10_000),
            retry_threshold=_env_int("CONC_COMPOSE_RETRY_THRESHOLD", 1000),
            quiescence_ms=_env_int("CONC_COMPOSE_QUIESCENCE_MS", 500),
            seed=_env_int("CONC_COMPOSE_SEED", 7),
            stress_units=_env_int("CONC_COMPOSE_STRESS_UNITS", 4),
            stress_ops=_env_int("CONC_COMPOSE_STRESS_OPS", 1000),
            txn_max_retries=_env_int("CONC_COMPOSE_TXN_MAX_RETRIES", 10_000),
            data_dir=os.getenv("CONC_COMPOSE_DATA_DIR", "data"),
            port=_env_int("PORT", 8080),
        )

    def with_overrides(self, **overrides: Optional[object]) -> "HarnessConfig":
        """Return a copy with every non-None override applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(changes) - set(asdict(self))
        if unknown:
            raise ConfigError(f"Unknown config fields: {sorted(unknown)}")
        if "mode" in changes:
            changes["mode"] = str(changes["mode"]).lower()
            if changes["mode"] not in MODES:
                raise ConfigError(f"mode must be one of {MODES}, got {changes['mode']!r}")
        for key, value in changes.items():
            if key in ("mode", "data_dir"):
                continue
            if not isinstance(value, int) or value < 0:
                raise ConfigError(f"{key} must be a non-negative integer, got {value!r}")
        if changes.get("stress_units") == 0:
            raise ConfigError("stress_units must be at least 1")
        return replace(self, **changes)

    def report_fields(self) -> Dict[str, int]:
        """The config block embedded in JSON reports."""
        return {
            "timeout_ms": self.timeout_ms,
            "retry_threshold": self.retry_threshold,
            "quiescence_ms": self.quiescence_ms,
            "seed": self.seed,
        }
