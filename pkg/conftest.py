import pytest

import exec_context
import liveness
import stm
from config import HarnessConfig


@pytest.fixture(autouse=True)
def faithful_runtime():
    """Every test starts in faithful mode with the default monitor and retry cap."""
    exec_context.end_scenario()
    exec_context.set_mode("faithful")
    liveness.install_monitor(None)
    liveness.set_detectors(True)
    stm.set_max_retries(stm.DEFAULT_MAX_RETRIES)
    yield
    exec_context.end_scenario()
    exec_context.set_mode("faithful")
    liveness.install_monitor(None)
    liveness.set_detectors(True)


@pytest.fixture
def guarded():
    exec_context.set_mode("guarded")
    yield
    exec_context.set_mode("faithful")


@pytest.fixture
def monitor():
    """A fresh liveness monitor for the test, aborted afterwards so stuck units exit."""
    m = liveness.Monitor(retry_threshold=1000, name="test")
    liveness.install_monitor(m)
    yield m
    m.abort()
    liveness.install_monitor(None)


@pytest.fixture
def small_config():
    """Harness config with a light stress workload."""
    return HarnessConfig().with_overrides(stress_units=2, stress_ops=50, timeout_ms=10_000)
