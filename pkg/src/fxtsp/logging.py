"""Structured logging for fxtsp.

Records go to stderr so that stdout carries nothing but JSON artifacts. Numbers
attached to a record travel in ``extra={"extra_data": {...}}`` and may be numpy
scalars or arrays.
"""

from __future__ import annotations

import json
import logging
import sys
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Any

UTC = timezone.utc  # datetime.UTC alias (3.11+)

if TYPE_CHECKING:
    from collections.abc import Mapping, MutableMapping

PLAIN_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def _jsonable(value: Any) -> Any:
    # numpy scalars and arrays both expose tolist()
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


class JSONFormatter(logging.Formatter):
    """One JSON object per record: timestamp, level, logger, message, exception and data."""

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, UTC).isoformat(timespec="milliseconds"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        data = getattr(record, "extra_data", None)
        if data:
            payload["data"] = data
        return json.dumps(payload, default=_jsonable)


if TYPE_CHECKING:
    _LoggerAdapter = logging.LoggerAdapter[logging.Logger]
else:  # LoggerAdapter is not subscriptable at runtime before 3.11
    _LoggerAdapter = logging.LoggerAdapter


class ContextLogger(_LoggerAdapter):
    """Adapter merging bound context under each record's ``extra_data``; per-call values win."""

    def process(self, msg: str, kwargs: MutableMapping[str, Any]) -> tuple[str, MutableMapping[str, Any]]:
        extra = dict(kwargs.get("extra") or {})
        call_data = extra.get("extra_data")
        merged = dict(self.extra or {})
        if isinstance(call_data, dict):
            merged.update(call_data)
        extra["extra_data"] = merged
        kwargs["extra"] = extra
        return msg, kwargs

    def bind(self, **context: Any) -> ContextLogger:
        """Child adapter carrying this adapter's context plus ``context``."""
        return ContextLogger(self.logger, {**(self.extra or {}), **context})


def get_logger(name: str, context: Mapping[str, Any] | None = None) -> ContextLogger:
    """Get a context-aware logger.

    Args:
        name: Logger name, typically __name__
        context: Values attached to every record, e.g. the benchmark name or eps

    Returns:
        A ContextLogger instance
    """
    return ContextLogger(logging.getLogger(name), dict(context or {}))


def setup_logging(level: str = "INFO", json_format: bool = True) -> None:
    """Route all records to stderr, replacing any handlers already on the root logger.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        json_format: JSON lines when true, plain text otherwise
    """
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JSONFormatter() if json_format else logging.Formatter(PLAIN_FORMAT))
    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level.upper())
