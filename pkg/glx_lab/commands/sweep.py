"""Handler for ``sweep``: one run per value of a scalar parameter.

Runs are independent and execute on worker threads, at most ``workers`` at a
time. Each writes its artifacts under ``<out>/<axis>=<value>/``; failures are
recorded and the sweep carries on. The summary CSV is sorted by value.
"""

from __future__ import annotations

import asyncio
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

import pandas as pd

from glx_lab import config as cfg
from glx_lab.commands.params import require
from glx_lab.commands.simulate import load_with_overrides, run_simulation
from glx_lab.numerics.diagnostics import max_abs_residual
from glx_lab.numerics.field import MIN_POINTS_PER_AXIS
from glx_lab.observability import classify_error
from glx_lab.utils.serialization import write_csv

logger = logging.getLogger(__name__)

SUMMARY_CSV = "summary.csv"

# axis -> (config section, field)
_DIRECT_AXES = {
    "theta": ("params", "theta"),
    "m": ("params", "m"),
    "mu": ("forcing", "mu"),
    "dt": ("scheme", "dt"),
    "L": ("grid", "half_width"),
}
SWEEP_AXES = (*_DIRECT_AXES, "a_modulus", "h")


class SweepFailedError(RuntimeError):
    """Every run of a sweep failed."""


@dataclass(frozen=True)
class SweepRow:
    value: float
    status: str
    t_star_observed: float | None = None
    t_star_bound: float | None = None
    envelope_violation: float | None = None
    ledger_max_abs_residual: float | None = None
    error: str | None = None


def apply_axis(config: cfg.RunConfig, axis: str, value: float) -> cfg.RunConfig:
    """Config with the sweep parameter set to ``value``.

    ``a_modulus`` keeps the phase of ``a``; ``h`` keeps L and picks the
    nearest point count with spacing 2L/(n+1).
    """
    if axis in _DIRECT_AXES:
        section, name = _DIRECT_AXES[axis]
        return config.with_updates(section, **{name: value})
    match axis:
        case "a_modulus":
            a = complex(config.params.a)
            phase = a / abs(a) if a != 0 else 1.0 + 0j
            return config.with_updates("params", a=value * phase)
        case "h":
            if not value > 0:
                msg = f"grid spacing must be positive, got {value!r}"
                raise cfg.ConfigError(msg)
            points = round(2.0 * config.grid.half_width / value) - 1
            if points < MIN_POINTS_PER_AXIS:
                msg = f"spacing h={value!r} leaves fewer than 3 points per axis"
                raise cfg.ConfigError(msg)
            return config.with_updates("grid", points_per_axis=points)
        case _:
            msg = f"unknown sweep axis {axis!r}; choose one of {list(SWEEP_AXES)}"
            raise cfg.ConfigError(msg)


def _value_dir(out_dir: Path, axis: str, value: float) -> Path:
    return out_dir / f"{axis}={value!r}"


def _run_one(
    config: cfg.RunConfig, axis: str, value: float, out_dir: Path
) -> SweepRow:
    try:
        run_config = apply_axis(config, axis, value)
        value_dir = _value_dir(out_dir, axis, value)
        outcome = run_simulation(run_config, value_dir, workers=1)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        logger.warning("sweep %s=%r failed: %s", axis, value, exc)
        return SweepRow(
            value=value,
            status="failed",
            error=f"{classify_error(exc)}: {exc}",
        )
    extinction = outcome.extinction
    return SweepRow(
        value=value,
        status="ok",
        t_star_observed=outcome.run.t_star_observed,
        t_star_bound=extinction.t_star_bound if extinction else None,
        envelope_violation=extinction.envelope_max_violation if extinction else None,
        ledger_max_abs_residual=(
            max_abs_residual(outcome.ledger) if outcome.ledger is not None else None
        ),
    )


async def run_sweep(
    config: cfg.RunConfig,
    axis: str,
    values: list[float],
    out_dir: Path,
    workers: int,
) -> list[SweepRow]:
    """Run every value with at most ``workers`` runs in flight; sorted by value."""
    semaphore = asyncio.Semaphore(workers)

    async def bounded(value: float) -> SweepRow:
        async with semaphore:
            return await asyncio.to_thread(_run_one, config, axis, value, out_dir)

    rows = await asyncio.gather(*(bounded(v) for v in values))
    return sorted(rows, key=lambda row: row.value)


def summary_frame(rows: list[SweepRow]) -> pd.DataFrame:
    columns = [f.name for f in fields(SweepRow)]
    return pd.DataFrame([asdict(row) for row in rows], columns=columns)


def handle_sweep(arguments: dict[str, Any]) -> dict[str, Any]:
    axis = require(arguments, "axis")
    if axis not in SWEEP_AXES:
        msg = f"unknown sweep axis {axis!r}; choose one of {list(SWEEP_AXES)}"
        raise cfg.ConfigError(msg)
    values = list(arguments.get("values") or [])
    if not values:
        msg = "sweep needs at least one value"
        raise cfg.ConfigError(msg)
    if not all(math.isfinite(v) for v in values):
        msg = f"sweep values must be finite, got {values!r}"
        raise cfg.ConfigError(msg)
    config = load_with_overrides(arguments)
    out_dir = config.output_dir(arguments.get("out"))
    workers = cfg.resolve_workers(arguments.get("workers"))
    # The handler already runs on a worker thread, so it owns this event loop.
    rows = asyncio.run(run_sweep(config, axis, values, out_dir, workers))
    summary = write_csv(summary_frame(rows), out_dir / SUMMARY_CSV)
    failed = [row for row in rows if row.status != "ok"]
    if len(failed) == len(rows):
        msg = f"all {len(rows)} sweep runs failed; first error: {failed[0].error}"
        raise SweepFailedError(msg)
    return {
        "axis": axis,
        "runs": len(rows),
        "failed": len(failed),
        "summary_csv": str(summary),
        "rows": [asdict(row) for row in rows],
    }
