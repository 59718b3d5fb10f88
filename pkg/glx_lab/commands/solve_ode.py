"""Handler for ``solve-ode``: two comparison-ODE trajectories as CSV.

Sources are given as a number (constant level), ``"scheduled"`` (the
scheduled-extinction source with horizon ``horizon``) or ``"random"`` (seeded
piecewise-constant levels). The CSV holds both trajectories and both sides of
the stability estimate from ``t0``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from glx_lab.commands.params import require
from glx_lab.config import env_output_dir
from glx_lab.numerics.comparison_ode import (
    PiecewiseConstantSource,
    ScheduledSource,
    Source,
    solve_comparison,
    stability_gap,
)
from glx_lab.utils.serialization import write_csv

SOLVE_ODE_CSV = "solve_ode.csv"
DEFAULT_OUTPUT_POINTS = 200


def parse_source(
    source: Any,
    *,
    alpha: float,
    delta: float,
    t0: float,
    t_end: float,
    horizon: float,
    rng: np.random.Generator,
    pieces: int = 8,
) -> Source:
    match source:
        case None:
            return PiecewiseConstantSource.constant(0.0)
        case "scheduled":
            return ScheduledSource(alpha, delta, horizon)
        case "random":
            return PiecewiseConstantSource.random(rng, t0, t_end, pieces=pieces)
        case int() | float():
            return PiecewiseConstantSource.constant(float(source))
        case str():
            try:
                return PiecewiseConstantSource.constant(float(source))
            except ValueError as exc:
                msg = (
                    f"source must be a number, 'scheduled' or 'random', got {source!r}"
                )
                raise ValueError(msg) from exc
        case _:
            msg = f"source must be a number, 'scheduled' or 'random', got {source!r}"
            raise ValueError(msg)


def handle_solve_ode(arguments: dict[str, Any]) -> dict[str, Any]:
    alpha = float(require(arguments, "alpha"))
    delta = float(require(arguments, "delta"))
    z1_0 = float(require(arguments, "z1"))
    z2_raw = arguments.get("z2")
    z2_0 = z1_0 if z2_raw is None else float(z2_raw)
    t0 = float(arguments.get("t0") or 0.0)
    t_end = float(require(arguments, "t_end"))
    dt_out = arguments.get("dt_out") or (t_end - t0) / DEFAULT_OUTPUT_POINTS
    horizon = float(arguments.get("horizon") or t_end)
    seed = int(arguments.get("seed") or 0)
    pieces = int(arguments.get("pieces") or 8)
    common = {
        "alpha": alpha,
        "delta": delta,
        "t0": t0,
        "t_end": t_end,
        "horizon": horizon,
        "pieces": pieces,
    }
    g1_source = arguments.get("g1")
    g2_source = arguments.get("g2")
    if g2_source is None:
        g2_source = g1_source
    g1 = parse_source(g1_source, rng=np.random.default_rng([seed, 1]), **common)
    g2 = parse_source(g2_source, rng=np.random.default_rng([seed, 2]), **common)
    z1 = solve_comparison(alpha, delta, g1, z1_0, t0, t_end, float(dt_out))
    z2 = solve_comparison(alpha, delta, g2, z2_0, t0, t_end, float(dt_out))
    sides = [stability_gap(z1, z2, g1, g2, t0, float(t)) for t in z1.times]
    frame = pd.DataFrame(
        {
            "t": z1.times,
            "z1": z1.values,
            "z2": z2.values,
            "g1": [g1(float(t)) for t in z1.times],
            "g2": [g2(float(t)) for t in z1.times],
            "gap": [lhs for lhs, _ in sides],
            "gap_bound": [rhs for _, rhs in sides],
        }
    )
    data: dict[str, Any] = {
        "points": len(frame),
        "max_excess": float(max(lhs - rhs for lhs, rhs in sides)),
        "z1_final": float(z1.values[-1]),
        "z2_final": float(z2.values[-1]),
    }
    out = arguments.get("out")
    out_dir = Path(out) if out is not None else env_output_dir()
    data["csv"] = str(write_csv(frame, out_dir / SOLVE_ODE_CSV))
    return data
