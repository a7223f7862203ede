from __future__ import annotations

import logging
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Iterator, TypeVar

from app.intervals import DEFAULT_PRECISION_BITS, PrecisionError, working_precision
from app.logger import log_certificate_event
from app.metrics import MetricsCollector

logger = logging.getLogger(__name__)

T = TypeVar("T")

_escalation_metrics: ContextVar[MetricsCollector | None] = ContextVar("escalation_metrics", default=None)

DEFAULT_PRECISION_CAP_BITS = 1024


@dataclass(frozen=True)
class PrecisionPolicy:
    start_bits: int = DEFAULT_PRECISION_BITS
    cap_bits: int = DEFAULT_PRECISION_CAP_BITS

    def __post_init__(self) -> None:
        if self.start_bits <= 0:
            raise ValueError("start_bits must be a positive integer")
        if self.cap_bits < self.start_bits:
            raise ValueError("cap_bits must be at least start_bits")

    def bits_for_attempt(self, attempt: int) -> int:
        return min(self.start_bits * (2 ** (attempt - 1)), self.cap_bits)


class PrecisionExhaustedError(RuntimeError):
    def __init__(self, message: str, code: str = "precision_exhausted", bits: int = 0) -> None:
        super().__init__(message)
        self.code = code
        self.bits = bits


_default_policy = PrecisionPolicy()


def set_default_policy(policy: PrecisionPolicy) -> None:
    global _default_policy
    _default_policy = policy


def default_policy() -> PrecisionPolicy:
    return _default_policy


@contextmanager
def counting_escalations(metrics: MetricsCollector | None) -> Iterator[None]:
    """Count every precision escalation inside the block on metrics."""
    token = _escalation_metrics.set(metrics)
    try:
        yield
    finally:
        _escalation_metrics.reset(token)


def is_precision_error(exc: Exception) -> bool:
    return isinstance(exc, PrecisionError)


def run_with_precision(
    operation: Callable[[], T],
    should_escalate: Callable[[Exception], bool] = is_precision_error,
    policy: PrecisionPolicy | None = None,
    on_escalate: Callable[[int], None] | None = None,
) -> T:
    """Run operation under doubling working precision until it stops asking for more.

    Errors that are not precision related propagate unchanged; they are verdicts.
    """
    active = policy or _default_policy
    last_error: Exception | None = None
    attempt = 1
    while True:
        bits = active.bits_for_attempt(attempt)
        try:
            with working_precision(bits):
                return operation()
        except Exception as exc:  # noqa: BLE001
            if not should_escalate(exc):
                raise
            last_error = exc
            if bits >= active.cap_bits:
                break
        attempt += 1
        next_bits = active.bits_for_attempt(attempt)
        metrics = _escalation_metrics.get()
        if metrics is not None:
            metrics.increment("precision_escalations")
        log_certificate_event(logger, logging.DEBUG, "Escalating working precision", precision_bits=next_bits)
        if on_escalate is not None:
            on_escalate(next_bits)
    log_certificate_event(
        logger, logging.WARNING, "Precision cap reached", outcome="precision_exhausted", precision_bits=active.cap_bits
    )
    raise PrecisionExhaustedError(
        f"Enclosure still too wide at the precision cap of {active.cap_bits} bits",
        bits=active.cap_bits,
    ) from last_error
