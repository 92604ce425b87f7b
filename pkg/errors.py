"""
Error types for the conc-compose runtime.

Every user-visible error is a RuntimeError subclass with an f-string
message. Control-flow signals derive from BaseException so that user
bodies catching ``Exception`` cannot swallow them.
"""

from typing import Optional


class ConcComposeError(RuntimeError):
    """Root of every user-visible runtime error."""


class NotInTransaction(ConcComposeError):
    pass


class ModeChangeWhileRunning(ConcComposeError):
    pass


class ReentrantSwap(ConcComposeError):
    pass


class AgentFailed(ConcComposeError):
    def __init__(self, message: str, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.cause = cause


class AwaitProhibited(ConcComposeError):
    pass


class WaitTimeout(ConcComposeError):
    pass


class TxnRetryLimit(ConcComposeError):
    pass


class BlockingReadProhibited(ConcComposeError):
    pass


class FutureFailed(ConcComposeError):
    def __init__(self, message: str, cause: BaseException):
        super().__init__(message)
        self.cause = cause


class FutureCancelled(ConcComposeError):
    pass


class IrrevocableInRetryScope(ConcComposeError):
    pass


class ChannelClosed(ConcComposeError):
    def __init__(self, message: str, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.cause = cause


class UnknownScenario(ConcComposeError):
    pass


class ScenarioInFlight(ConcComposeError):
    pass


class SinkUnwritable(ConcComposeError):
    pass


class ConfigError(ConcComposeError):
    pass


# Guard errors the harness treats as a documented prevention, not a defect.
PREVENTION_ERRORS = (
    AwaitProhibited,
    BlockingReadProhibited,
    IrrevocableInRetryScope,
    ReentrantSwap,
)


class ScenarioAborted(BaseException):
    """Raised inside a scenario unit once the harness kills the scenario."""


class CancellationRequested(BaseException):
    """Raised at a cancellation point of a future whose cancel flag is set."""


class LivelockAbort(BaseException):
    """Unwinds a retry loop after the watchdog tripped on it."""

    def __init__(self, loop: str, count: int):
        super().__init__(f"retry loop {loop} re-executed {count} times")
        self.loop = loop
        self.count = count


def root_cause(exc: BaseException) -> BaseException:
    """Strip FutureFailed / AgentFailed / ChannelClosed wrappers."""
    seen = 0
    while isinstance(exc, (FutureFailed, AgentFailed, ChannelClosed)) and exc.cause is not None and seen < 16:
        exc = exc.cause
        seen += 1
    return exc
