"""Handler for ``simulate``: one configured run plus its diagnostics.

Artifacts written to the output directory:

* ``run.json``: config, derived constants, GN estimate and trajectories
* ``trajectory.csv``: snapshot norms, decay envelope and mass minus envelope
* ``ledger.csv``: energy ledger rows (when enabled)
* ``report.json``: forcing check and diagnostic verdicts
* ``fields.nc``: stored field snapshots (with ``scheme.store_fields``)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from glx_lab import config as cfg
from glx_lab.commands.params import require
from glx_lab.numerics.diagnostics import (
    DecayCheck,
    EnergyLedgerRow,
    ExtinctionReport,
    energy_ledger,
    envelope_trajectory,
    exp_decay_check,
    extinction_report,
    ledger_frame,
    mass_monotonicity,
    max_abs_residual,
)
from glx_lab.numerics.dynamics import (
    RunRecord,
    SchemeConfig,
    SimulationAbortedError,
    simulate,
)
from glx_lab.numerics.field import ComplexField, Grid, mass_l2
from glx_lab.numerics.forcing import (
    ForcingKind,
    ForcingProfile,
    ProfileReport,
    check_profile,
)
from glx_lab.numerics.gn import GnEstimate, estimate_cgn
from glx_lab.numerics.params import (
    AdmissibilityError,
    DerivedConstants,
    PhysicalParams,
    derived_constants,
    validate,
)
from glx_lab.utils.serialization import (
    to_jsonable,
    write_csv,
    write_json,
    write_netcdf,
)

if TYPE_CHECKING:
    import pandas as pd

logger = logging.getLogger(__name__)

RUN_JSON = "run.json"
TRAJECTORY_CSV = "trajectory.csv"
FIELDS_NC = "fields.nc"
LEDGER_CSV = "ledger.csv"
REPORT_JSON = "report.json"


@dataclass
class PreparedRun:
    """Everything ``simulate`` needs, validated before any time stepping."""

    config: cfg.RunConfig
    params: PhysicalParams
    grid: Grid
    scheme: SchemeConfig
    u0: ComplexField
    forcing: ForcingProfile
    profile_report: ProfileReport
    constants: DerivedConstants | None = None
    gn: GnEstimate | None = None
    extinction_applicable: bool = False


@dataclass
class SimulationOutcome:
    prepared: PreparedRun
    run: RunRecord
    ledger: list[EnergyLedgerRow] | None = None
    extinction: ExtinctionReport | None = None
    decay: DecayCheck | None = None
    artifacts: dict[str, Path] = field(default_factory=dict)

    def report(self) -> dict[str, Any]:
        prepared = self.prepared
        data: dict[str, Any] = {
            "forcing_check": prepared.profile_report.to_dict(),
            "completed": self.run.completed,
            "t_star_observed": self.run.t_star_observed,
            "extinction": self.extinction.to_dict() if self.extinction else None,
            "exp_decay": self.decay.to_dict() if self.decay else None,
            "ledger_max_abs_residual": (
                max_abs_residual(self.ledger) if self.ledger is not None else None
            ),
        }
        if prepared.forcing.kind == ForcingKind.ZERO:
            data["mass_max_increase"] = mass_monotonicity(self.run)
        return data

    def summary(self) -> dict[str, Any]:
        extinction = self.extinction
        return {
            "out_dir": str(self.artifacts[RUN_JSON].parent) if self.artifacts else None,
            "steps": self.run.steps_taken,
            "t_star_observed": self.run.t_star_observed,
            "t_star_bound": extinction.t_star_bound if extinction else None,
            "bound_satisfied": extinction.bound_satisfied if extinction else None,
            "envelope_max_violation": (
                extinction.envelope_max_violation if extinction else None
            ),
            "ledger_max_abs_residual": (
                max_abs_residual(self.ledger) if self.ledger is not None else None
            ),
            "exp_decay_holds": self.decay.holds if self.decay else None,
            "final_mass": self.run.mass[-1],
        }

    def trajectory_frame(self) -> pd.DataFrame:
        """Snapshot norms, with the envelope columns filled when it was checked."""
        k = self.prepared.constants
        if self.extinction is None or k is None:
            return self.run.to_frame()
        return self.run.to_frame(envelope_trajectory(self.run, k))


def _needs_constants(config: cfg.RunConfig, params: PhysicalParams) -> bool:
    if params.m >= 1.0:
        return False
    return (
        config.diagnostics.extinction_report
        or config.forcing.kind == ForcingKind.SCHEDULED
    )


def _extinction_applicable(
    forcing: ForcingProfile, params: PhysicalParams, f_sup: float
) -> bool:
    """Whether the finite-time extinction estimates cover this forcing after T0."""
    if forcing.is_feedback or params.m >= 1.0:
        return False
    if f_sup == 0.0:
        return True
    return params.m == 0.0 and f_sup < params.damping_rate


def prepare_run(config: cfg.RunConfig, *, workers: int | None = None) -> PreparedRun:
    """Validate parameters and forcing and build the initial field.

    Raises :class:`AdmissibilityError` (or another ``ValueError``) before any
    compute when a hypothesis is violated.
    """
    params = config.physical_params()
    validate(params).raise_for_violations()
    grid = config.grid.build()
    scheme = config.scheme.build()
    rng = np.random.default_rng(config.seed)
    u0 = config.initial.build(grid, rng)
    t0 = config.envelope_t0()
    gn: GnEstimate | None = None
    k: DerivedConstants | None = None
    if _needs_constants(config, params):
        c_gn = config.diagnostics.c_gn
        if c_gn is None:
            gn = estimate_cgn(
                params.m,
                grid,
                config.diagnostics.gn_family_size,
                config.seed,
                workers=workers,
            )
            c_gn = gn.c_gn
        k = derived_constants(params, c_gn, t0=t0)
    forcing = config.forcing.build(params, grid, k)
    profile_report = check_profile(forcing, params, k, grid, horizon=scheme.t_end)
    if not profile_report.ok:
        raise AdmissibilityError(list(profile_report.violations))
    f_sup = forcing.sup_after(grid, t0)
    applicable = k is not None and _extinction_applicable(forcing, params, f_sup)
    if k is not None and applicable and f_sup > 0:
        k = derived_constants(params, k.c_gn, f_sup=f_sup, t0=t0)
    u0 = _apply_initial_limit(config, forcing, u0)
    return PreparedRun(
        config=config,
        params=params,
        grid=grid,
        scheme=scheme,
        u0=u0,
        forcing=forcing,
        profile_report=profile_report,
        constants=k,
        gn=gn,
        extinction_applicable=applicable,
    )


def _apply_initial_limit(
    config: cfg.RunConfig, forcing: ForcingProfile, u0: ComplexField
) -> ComplexField:
    limit = forcing.max_initial_mass
    if config.initial.scale_to_limit:
        if limit is None:
            msg = "initial.scale_to_limit needs a scheduled forcing"
            raise cfg.ConfigError(msg)
        return cfg.rescale_to_mass(u0, limit * cfg.INITIAL_MASS_MARGIN)
    if limit is not None and mass_l2(u0) > limit:
        msg = (
            f"||u0|| = {mass_l2(u0)!r} exceeds the largest initial mass "
            f"{limit!r} admitted by the scheduled forcing"
        )
        raise AdmissibilityError([msg])
    return u0


def _forcing_vanishes_after(forcing: ForcingProfile, t0: float) -> bool:
    return forcing.kind == ForcingKind.ZERO or (
        not forcing.is_feedback and forcing.vanishes_after(t0)
    )


def run_diagnostics(prepared: PreparedRun, run: RunRecord) -> SimulationOutcome:
    diag = prepared.config.diagnostics
    outcome = SimulationOutcome(prepared=prepared, run=run)
    if diag.energy_ledger and len(run) >= 3:  # noqa: PLR2004
        outcome.ledger = energy_ledger(run)
    t0 = prepared.config.envelope_t0()
    k = prepared.constants
    if diag.extinction_report and k is not None and prepared.extinction_applicable:
        if run.times[0] <= t0 <= run.times[-1]:
            outcome.extinction = extinction_report(
                run,
                k,
                safety_factor=diag.safety_factor,
                envelope_tolerance=diag.envelope_tolerance,
            )
        else:
            logger.warning("envelope start t0=%g lies outside the run; skipped", t0)
    if (
        diag.exp_decay
        and prepared.params.m == 1.0
        and _forcing_vanishes_after(prepared.forcing, t0)
        and run.times[0] <= t0 <= run.times[-1]
    ):
        outcome.decay = exp_decay_check(run, t0=t0, tol=diag.decay_tolerance)
    return outcome


def _run_document(prepared: PreparedRun, run: RunRecord) -> dict[str, Any]:
    return {
        "config": to_jsonable(prepared.config.model_dump()),
        "constants": prepared.constants.to_dict() if prepared.constants else None,
        "gn_estimate": prepared.gn.to_dict() if prepared.gn else None,
        "run": run.to_dict(),
    }


def write_artifacts(outcome: SimulationOutcome, out_dir: Path) -> dict[str, Path]:
    run = outcome.run
    artifacts = {
        RUN_JSON: write_json(_run_document(outcome.prepared, run), out_dir / RUN_JSON),
        TRAJECTORY_CSV: write_csv(outcome.trajectory_frame(), out_dir / TRAJECTORY_CSV),
        REPORT_JSON: write_json(outcome.report(), out_dir / REPORT_JSON),
    }
    if outcome.ledger is not None:
        artifacts[LEDGER_CSV] = write_csv(
            ledger_frame(outcome.ledger), out_dir / LEDGER_CSV
        )
    if run.fields:
        artifacts[FIELDS_NC] = write_netcdf(run.to_dataset(), out_dir / FIELDS_NC)
    outcome.artifacts = artifacts
    return artifacts


def run_simulation(
    config: cfg.RunConfig,
    out_dir: Path | None = None,
    *,
    workers: int | None = None,
) -> SimulationOutcome:
    """Prepare, simulate, diagnose and (with ``out_dir``) write artifacts.

    An aborted run still leaves its partial ``run.json`` behind before the
    :class:`SimulationAbortedError` propagates.
    """
    prepared = prepare_run(config, workers=workers)
    try:
        run = simulate(prepared.u0, prepared.params, prepared.forcing, prepared.scheme)
    except SimulationAbortedError as exc:
        if out_dir is not None:
            write_json(_run_document(prepared, exc.record), out_dir / RUN_JSON)
        raise
    outcome = run_diagnostics(prepared, run)
    if out_dir is not None:
        write_artifacts(outcome, out_dir)
    return outcome


def load_with_overrides(arguments: dict[str, Any]) -> cfg.RunConfig:
    config = cfg.load_config(require(arguments, "config"))
    seed = arguments.get("seed")
    if seed is not None:
        config = config.model_copy(update={"seed": int(seed)})
    return config


def handle_simulate(arguments: dict[str, Any]) -> dict[str, Any]:
    config = load_with_overrides(arguments)
    out_dir = config.output_dir(arguments.get("out"))
    workers = cfg.resolve_workers(arguments.get("workers"))
    outcome = run_simulation(config, out_dir, workers=workers)
    return outcome.summary()
