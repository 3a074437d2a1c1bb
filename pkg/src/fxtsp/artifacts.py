"""JSON and CSV artifact writers, plus loading of custom system descriptions."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path
from typing import TYPE_CHECKING

from pydantic import BaseModel, ValidationError

from fxtsp.config import format_validation_error, read_config_file
from fxtsp.exceptions import ConfigError
from fxtsp.logging import get_logger
from fxtsp.models import SystemDescription

if TYPE_CHECKING:
    from collections.abc import Iterable

    from fxtsp.simulate import SweepTable, Trajectory

logger = get_logger(__name__)


def _number(value: float | None) -> str:
    if value is None:
        return ""
    return format(value, ".17g")


def to_json(record: BaseModel) -> str:
    """Serialize a record with stable field order; non-finite floats are kept as Infinity/NaN."""
    return json.dumps(record.model_dump(), indent=2, allow_nan=True, default=str)


def write_json(record: BaseModel, out: Path | None = None) -> None:
    """Write a record to out, or to stdout when out is None."""
    text = to_json(record) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    logger.info("Wrote JSON artifact", extra={"extra_data": {"path": str(out)}})


def _write_rows(path: Path, header: list[str], rows: Iterable[list[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_trajectory_csv(traj: Trajectory, path: Path) -> None:
    """Columns t, x1..xN, z1..zM, V, W, Psi at 17 significant digits."""
    header = [
        "t",
        *(f"x{i + 1}" for i in range(traj.slow_dim)),
        *(f"z{i + 1}" for i in range(traj.fast_dim)),
        "V",
        "W",
        "Psi",
    ]
    rows = (
        [_number(float(t)), *(_number(float(v)) for v in state), *(_number(float(d)) for d in diagnostics)]
        for t, state, diagnostics in zip(traj.times, traj.states, traj.diagnostics, strict=True)
    )
    _write_rows(path, header, rows)
    logger.info("Wrote trajectory CSV", extra={"extra_data": {"path": str(path), "samples": len(traj)}})


def write_sweep_csv(table: SweepTable, path: Path) -> None:
    """Columns magnitude, direction_index, settle_time; unsettled cells are empty."""
    rows = ([_number(row.magnitude), str(row.direction_index), _number(row.settle_time)] for row in table.rows)
    _write_rows(path, ["magnitude", "direction_index", "settle_time"], rows)
    logger.info("Wrote sweep CSV", extra={"extra_data": {"path": str(path), "cells": len(table.rows)}})


def summary_path(out: Path) -> Path:
    return out.with_name(out.name + ".summary.json")


def load_system_description(path: Path) -> SystemDescription:
    """Read and validate a custom system JSON file.

    Raises:
        ConfigError: If the file is unreadable, malformed or fails validation.
    """
    data = read_config_file(Path(path))
    try:
        return SystemDescription.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{path}: {format_validation_error(e)}") from e
