"""Post-hoc checks of saved runs against the analytic estimates.

Everything here is a pure function of a :class:`RunRecord` (and, where the
forcing is needed again, the profile that drove it), so reports can be
recomputed from saved artifacts. Every verdict carries the tolerance it was
judged against.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd
from scipy import integrate

from glx_lab import observability
from glx_lab.numerics.dynamics import forcing_power
from glx_lab.numerics.field import mass_l2
from glx_lab.numerics.forcing import ForcingKind, ForcingProfile
from glx_lab.numerics.params import envelope

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from glx_lab.numerics.dynamics import RunRecord
    from glx_lab.numerics.params import DerivedConstants, PhysicalParams

logger = logging.getLogger(__name__)

MIN_LEDGER_SNAPSHOTS = 3
DEFAULT_SAFETY_FACTOR = 1.1
DEFAULT_DECAY_TOLERANCE = 1e-8
DEPENDENCE_TOLERANCE_STEPS = 5.0
DEPENDENCE_QUADRATURE_REFINEMENT = 8
LEDGER_COLUMNS = ("t", "mass_sq", "grad", "lm1", "lp1", "gamma", "forcing", "residual")


class DiagnosticsInputError(ValueError):
    """A run (or pair of runs) does not meet a check's preconditions."""


def _count(check: str) -> None:
    observability.count(observability.metric_name("diagnostics_checks_total", check))


# ---------------------- Energy ledger ---------------------- #


@dataclass(frozen=True)
class EnergyLedgerRow:
    """One interior snapshot of the L2 energy balance.

    ``residual`` is (mass_sq)'/2 + cos(theta) grad + Re(a e^{i theta}) lm1 +
    Re(b e^{i theta}) lp1 + gamma - forcing, where ``gamma`` already includes
    its factor Re(gamma e^{i theta}) mass_sq.
    """

    t: float
    mass_sq: float
    grad_term: float
    lm1_term: float
    lp1_term: float
    gamma_term: float
    forcing_term: float
    residual: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _forcing_terms(
    run: RunRecord, params: PhysicalParams, forcing: ForcingProfile | None
) -> NDArray[np.float64]:
    if forcing is None or forcing == run.forcing:
        return np.asarray(run.forcing_power, dtype=float)
    if run.fields is None:
        msg = (
            "recomputing the forcing term for a different profile needs stored "
            "field snapshots (scheme.store_fields)"
        )
        raise DiagnosticsInputError(msg)
    return np.array(
        [
            forcing_power(u, t, params, forcing)
            for t, u in zip(run.times, run.fields, strict=True)
        ]
    )


def energy_ledger(
    run: RunRecord,
    params: PhysicalParams | None = None,
    forcing: ForcingProfile | None = None,
) -> list[EnergyLedgerRow]:
    """Energy balance residual at every interior snapshot of ``run``.

    The time derivative of the squared mass is taken by (non-uniform)
    centered differences of the recorded trajectory.
    """
    if len(run) < MIN_LEDGER_SNAPSHOTS:
        msg = (
            f"energy ledger needs at least {MIN_LEDGER_SNAPSHOTS} snapshots, "
            f"run has {len(run)}"
        )
        raise DiagnosticsInputError(msg)
    params = run.params if params is None else params
    rot = params.rotation
    times = np.asarray(run.times, dtype=float)
    if np.any(np.diff(times) <= 0):
        msg = "snapshot times must be strictly increasing"
        raise DiagnosticsInputError(msg)
    mass_sq = np.asarray(run.mass, dtype=float) ** 2
    grad = np.asarray(run.grad_norm, dtype=float) ** 2
    lm1 = np.asarray(run.lm1_norm, dtype=float) ** (params.m + 1.0)
    lp1 = np.asarray(run.lp1_norm, dtype=float) ** (params.p + 1.0)
    gamma = (rot * complex(params.gamma)).real * mass_sq
    power = _forcing_terms(run, params, forcing)
    derivative = np.gradient(mass_sq, times)
    residual = (
        0.5 * derivative
        + math.cos(params.theta) * grad
        + params.damping_rate * lm1
        + params.power_rate * lp1
        + gamma
        - power
    )
    _count("energy_ledger")
    return [
        EnergyLedgerRow(
            t=float(times[i]),
            mass_sq=float(mass_sq[i]),
            grad_term=float(grad[i]),
            lm1_term=float(lm1[i]),
            lp1_term=float(lp1[i]),
            gamma_term=float(gamma[i]),
            forcing_term=float(power[i]),
            residual=float(residual[i]),
        )
        for i in range(1, len(times) - 1)
    ]


def ledger_frame(rows: Sequence[EnergyLedgerRow]) -> pd.DataFrame:
    """Ledger as a DataFrame with the CSV column names."""
    return pd.DataFrame(
        [
            (
                r.t,
                r.mass_sq,
                r.grad_term,
                r.lm1_term,
                r.lp1_term,
                r.gamma_term,
                r.forcing_term,
                r.residual,
            )
            for r in rows
        ],
        columns=list(LEDGER_COLUMNS),
    )


def max_abs_residual(rows: Sequence[EnergyLedgerRow]) -> float:
    if not rows:
        return 0.0
    return max(abs(r.residual) for r in rows)


# ---------------------- Finite-time extinction ---------------------- #


@dataclass(frozen=True)
class ExtinctionReport:
    """Observed extinction against the envelope and the extinction-time bound.

    ``bound_satisfied`` is True iff an extinction time was observed and it is
    at most ``t_star_bound * safety_factor``.
    """

    t_star_observed: float | None
    t_star_bound: float
    envelope_max_violation: float
    bound_satisfied: bool
    m_used: float
    mass_at_t0: float
    safety_factor: float
    envelope_tolerance: float
    c_gn: float

    @property
    def envelope_ok(self) -> bool:
        return self.envelope_max_violation <= self.envelope_tolerance

    @property
    def passed(self) -> bool:
        return self.bound_satisfied and self.envelope_ok

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["envelope_ok"] = self.envelope_ok
        return data


def observed_extinction_time(run: RunRecord, tolerance: float = 0.0) -> float | None:
    """First time the mass reached ``tolerance``; None if it never did.

    The in-loop detection of :func:`simulate` is used when present since it
    sees every step, not only snapshots.
    """
    candidates = []
    if run.t_star_observed is not None:
        candidates.append(run.t_star_observed)
    for t, mass in zip(run.times, run.mass, strict=True):
        if mass <= tolerance:
            candidates.append(t)
            break
    return min(candidates) if candidates else None


def _mass_at(run: RunRecord, t: float) -> float:
    times = np.asarray(run.times, dtype=float)
    if not times[0] <= t <= times[-1]:
        msg = f"t = {t!r} lies outside the recorded interval [{times[0]}, {times[-1]}]"
        raise DiagnosticsInputError(msg)
    return float(np.interp(t, times, np.asarray(run.mass, dtype=float)))


def envelope_trajectory(run: RunRecord, k: DerivedConstants) -> NDArray[np.float64]:
    """Envelope at every snapshot from ``k.t0`` on, started from the mass there.

    Snapshots before ``k.t0`` get NaN.
    """
    times = np.asarray(run.times, dtype=float)
    values = np.full(times.shape, np.nan)
    after = times >= k.t0
    values[after] = envelope(times[after], _mass_at(run, k.t0), k)
    return values


def extinction_report(
    run: RunRecord,
    k: DerivedConstants,
    *,
    safety_factor: float = DEFAULT_SAFETY_FACTOR,
    envelope_tolerance: float | None = None,
) -> ExtinctionReport:
    """Check envelope domination from ``k.t0`` and the extinction-time bound.

    The envelope starts from the mass measured at ``k.t0``. The default
    envelope tolerance is ``dt * mass(t0)``.
    """
    if k.m != run.params.m or k.dim != run.grid.dim:
        msg = "derived constants were computed for a different (m, dim)"
        raise DiagnosticsInputError(msg)
    if not run.completed:
        msg = "extinction report needs a completed run"
        raise DiagnosticsInputError(msg)
    if safety_factor < 1.0:
        msg = f"safety_factor must be >= 1, got {safety_factor!r}"
        raise DiagnosticsInputError(msg)
    mass_t0 = _mass_at(run, k.t0)
    tol = run.scheme.dt * mass_t0 if envelope_tolerance is None else envelope_tolerance
    times = np.asarray(run.times, dtype=float)
    masses = np.asarray(run.mass, dtype=float)
    after = times >= k.t0
    excess = masses[after] - envelope_trajectory(run, k)[after]
    violation = float(max(np.max(excess, initial=0.0), 0.0))
    t_star = observed_extinction_time(run, run.scheme.extinction_tolerance)
    t_bound = k.extinction_bound_for(mass_t0)
    satisfied = t_star is not None and t_star <= t_bound * safety_factor
    report = ExtinctionReport(
        t_star_observed=t_star,
        t_star_bound=t_bound,
        envelope_max_violation=violation,
        bound_satisfied=satisfied,
        m_used=k.big_m,
        mass_at_t0=mass_t0,
        safety_factor=safety_factor,
        envelope_tolerance=tol,
        c_gn=k.c_gn,
    )
    _count("extinction_report")
    logger.info(
        "extinction report: observed=%s bound=%.6g violation=%.3g",
        t_star,
        t_bound,
        violation,
        extra={"run_id": run.run_id},
    )
    return report


# ---------------------- Decay checks ---------------------- #


@dataclass(frozen=True)
class DecayCheck:
    max_excess: float
    holds: bool
    tolerance: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _forcing_vanishes(forcing: ForcingProfile, t0: float) -> bool:
    return forcing.kind == ForcingKind.ZERO or (
        not forcing.is_feedback and forcing.vanishes_after(t0)
    )


def exp_decay_check(
    run: RunRecord,
    params: PhysicalParams | None = None,
    t0: float = 0.0,
    *,
    tol: float = DEFAULT_DECAY_TOLERANCE,
) -> DecayCheck:
    """mass(t) <= mass(t0) exp(-Re(a e^{i theta}) (t - t0)) for m = 1."""
    params = run.params if params is None else params
    if params.m != 1.0:
        msg = f"exponential decay check needs m = 1, got m = {params.m!r}"
        raise DiagnosticsInputError(msg)
    if not _forcing_vanishes(run.forcing, t0):
        msg = "exponential decay check needs a forcing that vanishes after t0"
        raise DiagnosticsInputError(msg)
    mass_t0 = _mass_at(run, t0)
    times = np.asarray(run.times, dtype=float)
    after = times >= t0
    bound = mass_t0 * np.exp(-params.damping_rate * (times[after] - t0))
    excess = np.asarray(run.mass, dtype=float)[after] - bound
    max_excess = float(np.max(excess, initial=0.0))
    _count("exp_decay")
    return DecayCheck(max_excess=max_excess, holds=max_excess <= tol, tolerance=tol)


def mass_monotonicity(run: RunRecord) -> float:
    """Largest increase of the mass between consecutive snapshots (>= 0).

    Meaningful for unforced runs, where the mass is nonincreasing.
    """
    diffs = np.diff(np.asarray(run.mass, dtype=float))
    return float(max(np.max(diffs, initial=0.0), 0.0))


def decay_to_zero_check(run: RunRecord, fraction: float = 1e-6) -> DecayCheck:
    """Final mass at most ``fraction`` times the initial mass.

    ``max_excess`` is the final-to-initial mass ratio (0 for zero data).
    """
    if not 0.0 < fraction < 1.0:
        msg = f"fraction must lie in (0, 1), got {fraction!r}"
        raise DiagnosticsInputError(msg)
    initial = run.initial_mass
    final = run.mass[-1]
    ratio = 0.0 if initial == 0.0 else final / initial
    _count("decay_to_zero")
    return DecayCheck(max_excess=ratio, holds=ratio <= fraction, tolerance=fraction)


# ---------------------- Continuous dependence ---------------------- #


@dataclass(frozen=True)
class DependenceCheck:
    max_excess: float
    holds: bool
    tolerance: float
    pairs_checked: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _check_compatible(run_a: RunRecord, run_b: RunRecord) -> None:
    problems = []
    if run_a.grid != run_b.grid:
        problems.append("grids differ")
    if run_a.params != run_b.params:
        problems.append("params differ")
    if run_a.scheme != run_b.scheme:
        problems.append("schemes differ")
    if run_a.times != run_b.times:
        problems.append("snapshot times differ")
    if run_a.fields is None or run_b.fields is None:
        problems.append("both runs need stored field snapshots")
    if problems:
        msg = "runs cannot be compared: " + "; ".join(problems)
        raise DiagnosticsInputError(msg)


def _forcing_gap_integral(
    run: RunRecord, f_a: ForcingProfile, f_b: ForcingProfile
) -> NDArray[np.float64]:
    """int_{t_0}^{t_i} ||f_a - f_b|| at every snapshot time t_i."""
    grid = run.grid
    times = np.asarray(run.times, dtype=float)
    refine = DEPENDENCE_QUADRATURE_REFINEMENT
    fine = np.concatenate(
        [
            np.linspace(t_lo, t_hi, refine, endpoint=False)
            for t_lo, t_hi in zip(times[:-1], times[1:], strict=True)
        ]
        + [times[-1:]]
    )
    gaps = np.empty_like(fine)
    for i, t in enumerate(fine):
        va = f_a.source_values(float(t), grid)
        vb = f_b.source_values(float(t), grid)
        if va is None and vb is None:
            gaps[i] = 0.0
            continue
        diff = (0 if va is None else va) - (0 if vb is None else vb)
        gaps[i] = math.sqrt(grid.cell_volume * float(np.sum(np.abs(diff) ** 2)))
    cumulative = integrate.cumulative_trapezoid(gaps, fine, initial=0.0)
    return cumulative[::refine]


def dependence_check(
    run_a: RunRecord,
    run_b: RunRecord,
    f_a: ForcingProfile | None = None,
    f_b: ForcingProfile | None = None,
    *,
    tol: float | None = None,
) -> DependenceCheck:
    """||u(t) - v(t)|| <= ||u(s) - v(s)|| + int_s^t ||f_a - f_b|| for all s <= t.

    Every ordered pair of snapshots is checked. The default tolerance is
    ``5 dt``.
    """
    _check_compatible(run_a, run_b)
    f_a = run_a.forcing if f_a is None else f_a
    f_b = run_b.forcing if f_b is None else f_b
    if f_a.is_feedback or f_b.is_feedback:
        msg = "continuous dependence is checked for state-independent forcings only"
        raise DiagnosticsInputError(msg)
    assert run_a.fields is not None
    assert run_b.fields is not None
    gap = np.array(
        [
            mass_l2(u.with_values(u.values - v.values))
            for u, v in zip(run_a.fields, run_b.fields, strict=True)
        ]
    )
    source = _forcing_gap_integral(run_a, f_a, f_b)
    # excess[s, t] = gap[t] - gap[s] - (source[t] - source[s]) for s <= t
    excess = (gap - source)[None, :] - (gap - source)[:, None]
    upper = np.triu(np.ones_like(excess, dtype=bool))
    max_excess = float(np.max(excess[upper]))
    tolerance = DEPENDENCE_TOLERANCE_STEPS * run_a.scheme.dt if tol is None else tol
    _count("dependence")
    return DependenceCheck(
        max_excess=max_excess,
        holds=max_excess <= tolerance,
        tolerance=tolerance,
        pairs_checked=int(np.count_nonzero(upper)),
    )
