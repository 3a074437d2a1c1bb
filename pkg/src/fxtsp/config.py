"""Environment settings and run-configuration loading."""

from __future__ import annotations

import json
import os
from typing import TYPE_CHECKING, Any

from dotenv import load_dotenv
from pydantic import ValidationError

from fxtsp.exceptions import ConfigError
from fxtsp.logging import get_logger
from fxtsp.models import RunConfig

if TYPE_CHECKING:
    from pathlib import Path

load_dotenv()

logger = get_logger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings:
    """Process-wide settings read from the environment."""

    def __init__(self) -> None:
        self.threads: int = self._read_int("FXTSP_THREADS", 1)
        self.log_level: str = os.getenv("FXTSP_LOG_LEVEL", "INFO").upper()
        self.json_logs: bool = os.getenv("FXTSP_LOG_JSON", "1").strip().lower() not in ("0", "false", "no")

        if self.threads < 1:
            raise ConfigError(f"FXTSP_THREADS must be at least 1, got {self.threads}")
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(f"FXTSP_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {self.log_level}")

    @staticmethod
    def _read_int(name: str, default: int) -> int:
        raw = os.getenv(name)
        if raw is None or not raw.strip():
            return default
        try:
            return int(raw)
        except ValueError as e:
            raise ConfigError(f"{name} must be an integer, got {raw!r}") from e


def read_config_file(path: Path) -> dict[str, Any]:
    """Read a JSON config file into a dict.

    Raises:
        ConfigError: If the file is missing, is not valid JSON, or is not an object.
    """
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def format_validation_error(error: ValidationError) -> str:
    """Render pydantic errors as 'field.path: message' lines."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def load_run_config(command: str, file_path: Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Merge defaults, a JSON config file and flag overrides into a RunConfig.

    Precedence is flags > file > defaults. The integrator section merges
    key by key so a flag can override a single tolerance.

    Raises:
        ConfigError: If the file is malformed or the merged config is invalid.
    """
    merged: dict[str, Any] = {}
    if file_path is not None:
        merged.update(read_config_file(file_path))

    flags = {key: value for key, value in (overrides or {}).items() if value is not None}
    integrator_flags = flags.pop("integrator", None)
    merged.update(flags)
    if integrator_flags:
        base = merged.get("integrator") or {}
        if not isinstance(base, dict):
            raise ConfigError("integrator: must be a JSON object")
        merged["integrator"] = {**base, **integrator_flags}
    merged["command"] = command

    try:
        config = RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {format_validation_error(e)}") from e

    logger.debug("Loaded run configuration", extra={"extra_data": config.model_dump(mode="json")})
    return config
