from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from typing import Any

_EXTRA_FIELDS = ("certificate_id", "command", "edge", "stage", "outcome", "latency_ms", "precision_bits")


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for name in _EXTRA_FIELDS:
            if hasattr(record, name):
                payload[name] = getattr(record, name)
        return json.dumps(payload, ensure_ascii=True)


def configure_logging(level: str = "INFO", json_logs: bool = True) -> None:
    root = logging.getLogger()
    root.setLevel(level.upper())
    formatter: logging.Formatter = JsonFormatter() if json_logs else logging.Formatter("%(levelname)s %(name)s %(message)s")
    if root.handlers:
        for handler in root.handlers:
            handler.setFormatter(formatter)
        return
    handler = logging.StreamHandler()
    handler.setFormatter(formatter)
    root.addHandler(handler)


def log_certificate_event(
    logger: logging.Logger,
    level: int,
    message: str,
    *,
    certificate_id: str | None = None,
    command: str | None = None,
    edge: str | None = None,
    stage: str | None = None,
    outcome: str | None = None,
    latency_ms: int | None = None,
    precision_bits: int | None = None,
) -> None:
    extra: dict[str, Any] = {}
    if certificate_id is not None:
        extra["certificate_id"] = certificate_id
    if command is not None:
        extra["command"] = command
    if edge is not None:
        extra["edge"] = edge
    if stage is not None:
        extra["stage"] = stage
    if outcome is not None:
        extra["outcome"] = outcome
    if latency_ms is not None:
        extra["latency_ms"] = latency_ms
    if precision_bits is not None:
        extra["precision_bits"] = precision_bits
    logger.log(level, message, extra=extra)
