"""Time integration by operator splitting.

Each step composes a Crank-Nicolson solve of the rotated diffusion
u' = e^{i theta} Laplacian(u) with the pointwise flow

    u' = -e^{i theta} (a |u|^{m-1} u + b |u|^{p-1} u + gamma u)
         + e^{i theta} (f - i mu U)

where U = u/|u| away from zero. The singular term is never divided out: when
b = gamma = 0 and nothing forces the point the amplitude is advanced in closed
form, otherwise a vectorised Cash-Karp 5(4) integrator advances every grid
point with its own step size and sets a point to exactly zero once its
extinction inside the substep is certified.
"""

from __future__ import annotations

import cmath
import logging
import math
import uuid
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd
import xarray as xr

from glx_lab import observability
from glx_lab.numerics.field import (
    ComplexField,
    Grid,
    HelmholtzConvergenceError,
    apply_laplacian,
    grad_norm_sq,
    inner,
    mass_l2,
    norm_lq,
    solve_helmholtz,
)
from glx_lab.numerics.forcing import ZERO_FORCING, ForcingProfile
from glx_lab.numerics.params import PhysicalParams, validate

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

# Cash-Karp 5(4) tableau; the flow is autonomous within a substep so the
# stage times are not needed.
_CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_CK_B4 = np.array(
    [2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4]
)
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
# Relative to the substep length
MIN_STEP_FRACTION = 1e-14
MAX_ITERATIONS = 200_000


class DampingIntegrationError(ArithmeticError):
    """Raised when the pointwise integrator's step size underflows."""

    def __init__(
        self, index: int, state: complex, t_local: float, step: float
    ) -> None:
        self.index = index
        self.state = state
        self.t_local = t_local
        self.step = step
        msg = (
            f"damping integrator step underflow at point {index}: "
            f"u={state!r}, local time {t_local:.6g}, step {step:.3e}"
        )
        super().__init__(msg)


class SimulationAbortedError(RuntimeError):
    """Raised when a step fails; ``record`` holds the run up to the failure."""

    def __init__(self, record: RunRecord, cause: BaseException) -> None:
        self.record = record
        self.cause = cause
        t_fail = record.times[-1] if len(record.times) else float("nan")
        msg = f"simulation aborted after t={t_fail:.6g}: {cause}"
        super().__init__(msg)


class SplittingOrder(StrEnum):
    LIE = "lie"
    STRANG = "strang"


@dataclass(frozen=True)
class SchemeConfig:
    """Time stepping controls; ``t_start`` is where the run begins."""

    dt: float
    t_end: float
    snapshot_stride: int = 1
    extinction_tolerance: float = 0.0
    splitting_order: SplittingOrder = SplittingOrder.STRANG
    store_fields: bool = False
    t_start: float = 0.0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            msg = f"dt must be positive, got {self.dt!r}"
            raise ValueError(msg)
        if not self.t_end >= self.t_start:
            msg = f"t_end={self.t_end!r} must be >= t_start={self.t_start!r}"
            raise ValueError(msg)
        if self.snapshot_stride < 1:
            msg = f"snapshot_stride must be >= 1, got {self.snapshot_stride!r}"
            raise ValueError(msg)
        if self.extinction_tolerance < 0:
            msg = "extinction_tolerance must be nonnegative"
            raise ValueError(msg)
        object.__setattr__(
            self, "splitting_order", SplittingOrder(self.splitting_order)
        )

    @property
    def n_steps(self) -> int:
        span = (self.t_end - self.t_start) / self.dt
        return max(0, math.ceil(span - 1e-9))

    def time_at(self, k: int) -> float:
        if k >= self.n_steps:
            return self.t_end
        return self.t_start + k * self.dt

    def to_dict(self) -> dict[str, object]:
        return {
            "dt": self.dt,
            "t_end": self.t_end,
            "t_start": self.t_start,
            "snapshot_stride": self.snapshot_stride,
            "extinction_tolerance": self.extinction_tolerance,
            "splitting_order": str(self.splitting_order),
            "store_fields": self.store_fields,
        }


@dataclass(frozen=True)
class _Coefficients:
    rotation: complex
    a: complex
    b: complex
    gamma: complex
    m: float
    p: float
    damping_rate: float
    sin_theta: float

    @classmethod
    def from_params(cls, params: PhysicalParams) -> _Coefficients:
        return cls(
            rotation=params.rotation,
            a=complex(params.a),
            b=complex(params.b),
            gamma=complex(params.gamma),
            m=float(params.m),
            p=float(params.p),
            damping_rate=params.damping_rate,
            sin_theta=math.sin(params.theta),
        )


def _direction(
    u: NDArray[np.complex128], rho: NDArray[np.float64]
) -> NDArray[np.complex128]:
    """Saturated section U: u/|u| where u != 0 and 0 at zero."""
    out = np.zeros_like(u)
    nonzero = rho > 0
    out[nonzero] = u[nonzero] / rho[nonzero]
    return out


def _hold_zero(
    k: _Coefficients, f_abs: NDArray[np.float64], mu: float
) -> NDArray[np.bool_]:
    """Points where an exact zero is kept by the flow.

    For m = 0 the damping can absorb a source with |f| + mu sin(theta) <= Re(a
    e^{i theta}); otherwise zero only persists when nothing forces it.
    """
    if k.m == 0.0:
        return f_abs + mu * k.sin_theta <= k.damping_rate
    return f_abs == 0


def _pointwise_rhs(
    u: NDArray[np.complex128],
    source: NDArray[np.complex128],
    hold: NDArray[np.bool_],
    k: _Coefficients,
    mu: float,
) -> NDArray[np.complex128]:
    rho = np.abs(u)
    unit = _direction(u, rho)
    if k.m == 1.0:
        damping = k.a * u
    else:
        damping = k.a * rho**k.m * unit
    if k.b != 0:
        damping = damping + k.b * rho**k.p * unit
    if k.gamma != 0:
        damping = damping + k.gamma * u
    drive = source - 1j * mu * unit if mu else source
    out = k.rotation * (drive - damping)
    out[(rho == 0) & hold] = 0.0
    return out


def _certified_extinction(
    rho: NDArray[np.float64],
    remaining: NDArray[np.float64],
    f_abs: NDArray[np.float64],
    k: _Coefficients,
    mu: float,
) -> NDArray[np.bool_]:
    """Points that certainly reach zero (and stay there) within ``remaining``."""
    if k.m >= 1.0:
        return np.zeros(rho.shape, dtype=bool)
    if k.m == 0.0:
        # rho' <= -(Re(a e^{i theta}) - |f| - mu sin(theta))
        margin = k.damping_rate - f_abs - mu * k.sin_theta
        return (margin > 0) & (rho <= margin * remaining)
    if mu * k.sin_theta > 0:
        return np.zeros(rho.shape, dtype=bool)
    # rho' <= -Re(a e^{i theta}) rho^m, integrated exactly
    reach = (1.0 - k.m) * k.damping_rate * remaining
    return (f_abs == 0) & (rho ** (1.0 - k.m) <= reach)


def _integrate_pointwise(
    u0: NDArray[np.complex128],
    dt: float,
    k: _Coefficients,
    source: NDArray[np.complex128],
    mu: float,
    rtol: float,
    atol: float,
) -> NDArray[np.complex128]:
    u = u0.copy()
    n = u.size
    f_abs = np.abs(source)
    hold = _hold_zero(k, f_abs, mu)
    elapsed = np.zeros(n)
    step = np.full(n, dt)
    done = np.zeros(n, dtype=bool)
    min_step = MIN_STEP_FRACTION * dt
    rejected_total = 0
    zeroed_total = 0
    for _ in range(MAX_ITERATIONS):
        # Points sitting at a held zero are finished.
        done |= (u == 0) & hold
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        remaining = dt - elapsed[active]
        extinct = _certified_extinction(
            np.abs(u[active]), remaining, f_abs[active], k, mu
        )
        if np.any(extinct):
            hit = active[extinct]
            u[hit] = 0.0
            elapsed[hit] = dt
            done[hit] = True
            zeroed_total += int(hit.size)
            active = active[~extinct]
            remaining = remaining[~extinct]
            if active.size == 0:
                break
        h = np.minimum(step[active], remaining)
        y = u[active]
        f = source[active]
        hz = hold[active]
        stages = np.empty((6, active.size), dtype=np.complex128)
        stages[0] = _pointwise_rhs(y, f, hz, k, mu)
        for s in range(1, 6):
            increment = sum(
                coeff * stages[j] for j, coeff in enumerate(_CK_A[s])
            )
            stages[s] = _pointwise_rhs(y + h * increment, f, hz, k, mu)
        y5 = y + h * np.tensordot(_CK_B5, stages, axes=1)
        y4 = y + h * np.tensordot(_CK_B4, stages, axes=1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = np.abs(y5 - y4) / scale
        accept = err <= 1.0
        accepted = active[accept]
        u[accepted] = y5[accept]
        elapsed[accepted] += h[accept]
        finished = accept & (h >= remaining)
        elapsed[active[finished]] = dt
        done[active[finished]] = True
        with np.errstate(divide="ignore"):
            factor = np.where(
                err == 0, MAX_FACTOR, SAFETY * err ** (-0.2)
            )
        factor = np.clip(factor, MIN_FACTOR, MAX_FACTOR)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        step[active] = h * factor
        rejected = ~accept
        rejected_total += int(np.count_nonzero(rejected))
        tiny = rejected & (step[active] < min_step)
        if np.any(tiny):
            bad = int(active[np.flatnonzero(tiny)[0]])
            raise DampingIntegrationError(
                bad, complex(u[bad]), float(elapsed[bad]), float(step[bad])
            )
    else:
        bad = int(np.flatnonzero(~done)[0])
        raise DampingIntegrationError(
            bad, complex(u[bad]), float(elapsed[bad]), float(step[bad])
        )
    if rejected_total:
        observability.count("damping_rejected_steps_total", rejected_total)
    if zeroed_total:
        observability.count("damping_certified_zeros_total", zeroed_total)
    return u


def _closed_form_flow(
    u0: NDArray[np.complex128], dt: float, k: _Coefficients
) -> NDArray[np.complex128]:
    if k.m == 1.0:
        return u0 * cmath.exp(-k.rotation * (k.a + k.gamma) * dt)
    big_a = k.damping_rate
    big_b = (k.a * k.rotation).imag
    rho0 = np.abs(u0)
    inner_term = rho0 ** (1.0 - k.m) - (1.0 - k.m) * big_a * dt
    alive = (inner_term > 0) & (rho0 > 0)
    out = np.zeros_like(u0)
    ratio = inner_term[alive] ** (1.0 / (1.0 - k.m)) / rho0[alive]
    if big_b == 0:
        out[alive] = u0[alive] * ratio
    else:
        # phase follows amplitude: d(phi)/d(log rho) = B/A
        out[alive] = u0[alive] * ratio * np.exp(1j * (big_b / big_a) * np.log(ratio))
    return out


def damping_flow(
    values: NDArray[np.complex128],
    dt: float,
    params: PhysicalParams,
    source: NDArray[np.complex128] | None = None,
    mu: float = 0.0,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> NDArray[np.complex128]:
    """Advance the pointwise damping/forcing ODE at every point by ``dt``."""
    values = np.asarray(values, dtype=np.complex128)
    if dt == 0:
        return values.copy()
    k = _Coefficients.from_params(params)
    unforced = (source is None or not np.any(source)) and mu == 0
    closed_form = k.b == 0 and (k.gamma == 0 or k.m == 1.0)
    if unforced and closed_form:
        return _closed_form_flow(values, dt, k)
    flat = values.ravel()
    src = (
        np.zeros_like(flat)
        if source is None
        else np.asarray(source, dtype=np.complex128).ravel()
    )
    out = _integrate_pointwise(flat, dt, k, src, mu, rtol, atol)
    return out.reshape(values.shape)


def damping_substep(
    u_point: complex,
    dt: float,
    params: PhysicalParams,
    forcing_value: complex = 0.0,
    mu: float = 0.0,
) -> complex:
    """Advance a single point of the pointwise flow by ``dt``."""
    validate(params).raise_for_violations()
    source = np.array([forcing_value], dtype=np.complex128)
    out = damping_flow(
        np.array([u_point], dtype=np.complex128), dt, params, source, mu
    )
    return complex(out[0])


def diffusion_substep(u: ComplexField, dt: float, theta: float) -> ComplexField:
    """Crank-Nicolson step of u' = e^{i theta} Laplacian(u)."""
    if u.is_zero():
        return u.with_values(u.values.copy())
    sigma = 0.5 * dt * cmath.exp(1j * theta)
    rhs = u.values + sigma * apply_laplacian(u).values
    return solve_helmholtz(u.with_values(rhs), sigma)


def _nonlinear_substep(
    u: ComplexField,
    t_mid: float,
    dt: float,
    params: PhysicalParams,
    forcing: ForcingProfile,
) -> ComplexField:
    source = forcing.source_values(t_mid, u.grid)
    values = damping_flow(u.values, dt, params, source, forcing.feedback_gain)
    return u.with_values(values)


def step(
    u: ComplexField,
    t: float,
    dt: float,
    params: PhysicalParams,
    forcing: ForcingProfile = ZERO_FORCING,
    order: SplittingOrder = SplittingOrder.STRANG,
) -> ComplexField:
    """One splitting step from ``t`` to ``t + dt``; forcing sampled at t + dt/2."""
    t_mid = t + 0.5 * dt
    if order is SplittingOrder.LIE:
        v = diffusion_substep(u, dt, params.theta)
        return _nonlinear_substep(v, t_mid, dt, params, forcing)
    v = diffusion_substep(u, 0.5 * dt, params.theta)
    v = _nonlinear_substep(v, t_mid, dt, params, forcing)
    return diffusion_substep(v, 0.5 * dt, params.theta)


def forcing_power(
    u: ComplexField, t: float, params: PhysicalParams, forcing: ForcingProfile
) -> float:
    """Re(e^{i theta} <f(t), u>), the forcing term of the energy balance."""
    if forcing.is_feedback:
        f = forcing.evaluate(t, u.grid, u)
    else:
        values = forcing.source_values(t, u.grid)
        if values is None:
            return 0.0
        f = u.with_values(values)
    return (params.rotation * inner(f, u)).real


@dataclass
class RunRecord:
    """Snapshot trajectories of one simulation.

    ``fields`` holds every snapshot field when the scheme asked for it;
    ``completed`` is False for the partial record of an aborted run.
    """

    grid: Grid
    params: PhysicalParams
    scheme: SchemeConfig
    forcing: ForcingProfile
    times: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    lm1_norm: list[float] = field(default_factory=list)
    lp1_norm: list[float] = field(default_factory=list)
    forcing_power: list[float] = field(default_factory=list)
    fields: list[ComplexField] | None = None
    t_star_observed: float | None = None
    final_field: ComplexField | None = None
    steps_taken: int = 0
    completed: bool = False
    error: str | None = None
    run_id: str = ""

    def record(self, t: float, u: ComplexField) -> None:
        self.times.append(float(t))
        self.mass.append(mass_l2(u))
        self.grad_norm.append(math.sqrt(grad_norm_sq(u)))
        self.lm1_norm.append(norm_lq(u, self.params.m + 1.0))
        self.lp1_norm.append(norm_lq(u, self.params.p + 1.0))
        self.forcing_power.append(forcing_power(u, t, self.params, self.forcing))
        if self.fields is not None:
            self.fields.append(u)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def initial_mass(self) -> float:
        return self.mass[0]

    def mass_at(self, t: float) -> float:
        """Mass at the snapshot time closest to ``t``."""
        idx = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.mass[idx]

    def to_frame(self, envelope: ArrayLike | None = None) -> pd.DataFrame:
        """Snapshot norms, one row per snapshot.

        ``envelope`` holds the decay bound at every snapshot (NaN where it does
        not apply); ``residual`` is mass minus that bound. Both stay NaN without
        it and are written as empty CSV cells.
        """
        mass = np.asarray(self.mass, dtype=float)
        if envelope is None:
            bound = np.full(mass.shape, np.nan)
        else:
            bound = np.asarray(envelope, dtype=float)
        return pd.DataFrame(
            {
                "t": self.times,
                "mass": mass,
                "grad_norm": self.grad_norm,
                "lm1_norm": self.lm1_norm,
                "lp1_norm": self.lp1_norm,
                "envelope": bound,
                "residual": mass - bound,
            }
        )

    def to_dataset(self) -> xr.Dataset:
        """Norms on ``t``; stored snapshots as ``u_real`` and ``u_imag`` on the grid."""
        data_vars: dict[str, Any] = {
            name: ("t", np.asarray(getattr(self, name), dtype=float))
            for name in ("mass", "grad_norm", "lm1_norm", "lp1_norm", "forcing_power")
        }
        coords: dict[str, Any] = {"t": np.asarray(self.times, dtype=float)}
        if self.fields:
            axes = [f"x{i}" for i in range(self.grid.dim)]
            values = np.stack([f.values for f in self.fields])
            data_vars["u_real"] = (["t", *axes], values.real)
            data_vars["u_imag"] = (["t", *axes], values.imag)
            for name in axes:
                coords[name] = self.grid.axis()
        attrs = {
            "theta": self.params.theta,
            "m": self.params.m,
            "p": self.params.p,
            "dim": self.grid.dim,
            "dt": self.scheme.dt,
            "t_star_observed": -1.0
            if self.t_star_observed is None
            else self.t_star_observed,
            "completed": int(self.completed),
        }
        return xr.Dataset(data_vars, coords=coords, attrs=attrs)

    def to_dict(self) -> dict[str, Any]:
        params = self.params
        return {
            "params": {
                "theta": params.theta,
                "m": params.m,
                "p": params.p,
                "a": [complex(params.a).real, complex(params.a).imag],
                "b": [complex(params.b).real, complex(params.b).imag],
                "gamma": [complex(params.gamma).real, complex(params.gamma).imag],
                "dim": params.dim,
            },
            "grid": self.grid.to_dict(),
            "scheme": self.scheme.to_dict(),
            "forcing": self.forcing.to_dict(),
            "t_star_observed": self.t_star_observed,
            "steps_taken": self.steps_taken,
            "completed": self.completed,
            "error": self.error,
            "trajectories": {
                "t": self.times,
                "mass": self.mass,
                "grad_norm": self.grad_norm,
                "lm1_norm": self.lm1_norm,
                "lp1_norm": self.lp1_norm,
                "forcing_power": self.forcing_power,
            },
        }


def simulate(
    u0: ComplexField,
    params: PhysicalParams,
    forcing: ForcingProfile = ZERO_FORCING,
    scheme: SchemeConfig | None = None,
    *,
    run_id: str | None = None,
) -> RunRecord:
    """Integrate from ``scheme.t_start`` to ``scheme.t_end``.

    Extinction is detected after every step, not only at snapshots. Once the
    field is exactly zero and the source has switched off for good the
    remaining steps are skipped; stepping would reproduce the same zeros.
    """
    if scheme is None:
        msg = "simulate needs a SchemeConfig"
        raise ValueError(msg)
    validate(params).raise_for_violations()
    if params.dim != u0.grid.dim:
        msg = f"params.dim={params.dim} does not match grid dim {u0.grid.dim}"
        raise ValueError(msg)
    run = RunRecord(
        grid=u0.grid,
        params=params,
        scheme=scheme,
        forcing=forcing,
        fields=[] if scheme.store_fields else None,
        run_id=run_id or uuid.uuid4().hex[:12],
    )
    tol = scheme.extinction_tolerance
    u = u0
    t = scheme.t_start
    run.record(t, u)
    if run.mass[0] <= tol:
        run.t_star_observed = t
    n_steps = scheme.n_steps
    frozen = False
    with observability.trace_span("simulate", run_id=run.run_id):
        for k in range(1, n_steps + 1):
            t_next = scheme.time_at(k)
            if not frozen and u.is_zero() and forcing.vanishes_after(t):
                frozen = True
                logger.debug(
                    "field is zero and unforced; skipping remaining steps",
                    extra={"run_id": run.run_id, "sim_time": t},
                )
            if not frozen:
                try:
                    u = step(
                        u, t, t_next - t, params, forcing, scheme.splitting_order
                    )
                except (
                    DampingIntegrationError,
                    HelmholtzConvergenceError,
                    FloatingPointError,
                    ValueError,
                ) as exc:
                    run.final_field = u
                    run.steps_taken = k - 1
                    run.error = f"{type(exc).__name__}: {exc}"
                    logger.warning(
                        "simulation step failed",
                        extra={"run_id": run.run_id, "step": k, "sim_time": t},
                    )
                    raise SimulationAbortedError(run, exc) from exc
            t = t_next
            if run.t_star_observed is None and mass_l2(u) <= tol:
                run.t_star_observed = t
                observability.count("extinction_events_total")
                observability.gauge("last_extinction_time", t)
                logger.info(
                    "extinction observed",
                    extra={"run_id": run.run_id, "step": k, "sim_time": t},
                )
            if k % scheme.snapshot_stride == 0 or k == n_steps:
                run.record(t, u)
        observability.count("simulation_steps_total", n_steps)
    run.final_field = u
    run.steps_taken = n_steps
    run.completed = True
    return run
