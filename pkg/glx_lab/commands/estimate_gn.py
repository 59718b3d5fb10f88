"""Handler for ``estimate-gn``: the GN constant estimate as JSON."""

from __future__ import annotations

from pathlib import Path
from typing import Any

from glx_lab import config as cfg
from glx_lab.commands.params import require
from glx_lab.numerics.field import Grid
from glx_lab.numerics.gn import build_trial, check_family, estimate_cgn
from glx_lab.utils.serialization import write_json

GN_JSON = "gn.json"


def handle_estimate_gn(arguments: dict[str, Any]) -> dict[str, Any]:
    grid = Grid(
        int(arguments.get("dim") or 1),
        float(arguments.get("half_width") or 10.0),
        int(arguments.get("points") or 255),
    )
    m = float(require(arguments, "m"))
    family_size = int(arguments.get("family_size") or 64)
    seed = int(arguments.get("seed") or 0)
    estimate = estimate_cgn(
        m,
        grid,
        family_size,
        seed,
        workers=cfg.resolve_workers(arguments.get("workers")),
    )
    # the energy form of the inequality, rechecked over the same family
    trials = [build_trial(grid, seed, j)[0] for j in range(family_size)]
    checks = check_family(trials, m, estimate.c_gn)
    data = {
        "grid": grid.to_dict(),
        **estimate.to_dict(),
        "energy_form_holds": all(check.holds for check in checks),
    }
    out = arguments.get("out")
    if out is not None:
        write_json(data, Path(out) / GN_JSON)
    return data
