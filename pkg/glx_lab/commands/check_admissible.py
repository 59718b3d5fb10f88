"""Handler for ``check-admissible``: validation report for a run config.

Nothing is simulated; the report lists every violated hypothesis instead of
stopping at the first one.
"""

from __future__ import annotations

from typing import Any

from glx_lab.commands.simulate import load_with_overrides
from glx_lab.numerics.forcing import ForcingKind, check_profile
from glx_lab.numerics.gn import estimate_cgn
from glx_lab.numerics.params import derived_constants, validate


def handle_check_admissible(arguments: dict[str, Any]) -> dict[str, Any]:
    config = load_with_overrides(arguments)
    params = config.physical_params()
    report = validate(params)
    data: dict[str, Any] = {"params": report.to_dict(), "forcing": None}
    if report.ok:
        grid = config.grid.build()
        k = None
        c_gn = config.diagnostics.c_gn
        scheduled = config.forcing.kind == ForcingKind.SCHEDULED
        if params.m < 1.0 and c_gn is None and scheduled:
            c_gn = estimate_cgn(
                params.m, grid, config.diagnostics.gn_family_size, config.seed
            ).c_gn
        if params.m < 1.0 and c_gn is not None:
            k = derived_constants(params, c_gn, t0=config.envelope_t0())
            data["constants"] = k.to_dict()
        try:
            forcing = config.forcing.build(params, grid, k)
        except ValueError as exc:
            violations = getattr(exc, "violations", None) or [str(exc)]
            data["forcing"] = {"ok": False, "violations": list(violations)}
        else:
            horizon = config.scheme.t_end
            data["forcing"] = check_profile(
                forcing, params, k, grid, horizon=horizon
            ).to_dict()
    forcing_ok = data["forcing"] is None or not data["forcing"]["violations"]
    data["ok"] = report.ok and forcing_ok
    return data
