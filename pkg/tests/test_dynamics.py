"""Tests for the splitting time stepper and the pointwise damping flow."""

from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
import xarray as xr
from scipy import integrate

from glx_lab.numerics import dynamics
from glx_lab.numerics.dynamics import (
    DampingIntegrationError,
    SchemeConfig,
    SimulationAbortedError,
    SplittingOrder,
    damping_flow,
    damping_substep,
    diffusion_substep,
    forcing_power,
    simulate,
    step,
)
from glx_lab.numerics.field import ComplexField, Grid, mass_l2, norm_lq, sine_mode
from glx_lab.numerics.forcing import ForcingKind, ForcingProfile, Shape
from glx_lab.numerics.params import PhysicalParams

SUBSTEP_RTOL = 1e-8
GAUGE_PHASE = 1.1
REFINEMENTS = (0.02, 0.01, 0.005)


def test_substep_m0_linear_amplitude_decay(unit_params):
    assert damping_substep(1.0, 0.5, unit_params) == pytest.approx(0.5)
    assert damping_substep(0.3, 0.5, unit_params) == 0


def test_substep_m1_is_exponential():
    params = PhysicalParams(theta=0.0, m=1.0)
    assert damping_substep(2.0, 0.7, params) == pytest.approx(2.0 * math.exp(-0.7))


def test_substep_closed_form_keeps_phase_for_real_rotated_a():
    params = PhysicalParams(theta=0.4, m=0.0, a=cmath.exp(-0.4j))
    out = damping_substep(1j, 0.25, params)
    assert out == pytest.approx(0.75j)


def test_substep_integrator_matches_exact_solution():
    # rho' = -rho^(1/2) - 0.2 rho, so sqrt(rho) = 6 e^(-t/10) - 5 from rho(0) = 1
    params = PhysicalParams(theta=0.0, m=0.5, gamma=0.2 + 0j)
    t = 0.5
    expected = (6.0 * math.exp(-0.1 * t) - 5.0) ** 2
    assert damping_substep(1.0, t, params) == pytest.approx(expected, rel=SUBSTEP_RTOL)


def test_substep_integrator_reaches_exact_zero():
    params = PhysicalParams(theta=0.0, m=0.5, gamma=0.2 + 0j)
    assert damping_substep(1.0, 3.0, params) == 0


def test_substep_m0_holds_zero_under_small_forcing(unit_params):
    assert damping_substep(0.0, 1.0, unit_params, forcing_value=0.5) == 0


def test_substep_positive_m_leaves_zero_under_forcing():
    params = PhysicalParams(theta=0.0, m=0.5)
    assert abs(damping_substep(0.0, 0.1, params, forcing_value=0.5)) > 0


def test_damping_flow_zero_dt_copies(unit_params):
    values = np.array([1.0, 0.5j])
    out = damping_flow(values, 0.0, unit_params)
    np.testing.assert_array_equal(out, values)
    assert out is not values


def test_diffusion_substep_is_contractive(gaussian_1d):
    for theta in (0.0, 0.8, -1.2):
        v = diffusion_substep(gaussian_1d, 0.1, theta)
        assert mass_l2(v) <= mass_l2(gaussian_1d) * (1 + 1e-14)


def test_step_orders_agree_to_first_order(unit_params, gaussian_1d):
    lie = step(gaussian_1d, 0.0, 1e-3, unit_params, order=SplittingOrder.LIE)
    strang = step(gaussian_1d, 0.0, 1e-3, unit_params)
    gap = mass_l2(lie.with_values(lie.values - strang.values))
    assert gap < 1e-2 * mass_l2(gaussian_1d)


def test_scheme_config_validation_and_times():
    scheme = SchemeConfig(dt=0.3, t_end=1.0)
    assert scheme.n_steps == 4  # noqa: PLR2004
    assert scheme.time_at(3) == pytest.approx(0.9)
    assert scheme.time_at(4) == 1.0
    assert scheme.splitting_order is SplittingOrder.STRANG
    with pytest.raises(ValueError, match="dt"):
        SchemeConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError, match="t_end"):
        SchemeConfig(dt=0.1, t_end=1.0, t_start=2.0)
    with pytest.raises(ValueError, match="snapshot_stride"):
        SchemeConfig(dt=0.1, t_end=1.0, snapshot_stride=0)


def test_simulate_needs_scheme_and_matching_dim(unit_params, gaussian_1d):
    with pytest.raises(ValueError, match="SchemeConfig"):
        simulate(gaussian_1d, unit_params)
    params_2d = PhysicalParams(theta=0.0, m=0.0, dim=2)
    with pytest.raises(ValueError, match="dim"):
        simulate(gaussian_1d, params_2d, scheme=SchemeConfig(dt=0.1, t_end=0.2))


def test_simulate_m0_reaches_exact_zero(unit_params, gaussian_1d):
    scheme = SchemeConfig(dt=0.01, t_end=1.5, snapshot_stride=10)
    run = simulate(gaussian_1d, unit_params, scheme=scheme)
    assert run.completed
    assert run.t_star_observed is not None
    assert run.t_star_observed <= 1.0 + 2 * scheme.dt
    assert run.mass[-1] == 0.0
    assert run.final_field is not None
    assert run.final_field.is_zero()
    assert np.all(np.diff(run.mass) <= 1e-14)


def test_simulate_m1_never_reaches_zero(gaussian_1d):
    params = PhysicalParams(theta=0.0, m=1.0)
    scheme = SchemeConfig(dt=0.05, t_end=3.0)
    run = simulate(gaussian_1d, params, scheme=scheme)
    assert run.t_star_observed is None
    assert run.mass[-1] > 0
    bound = run.mass[0] * np.exp(-np.asarray(run.times))
    assert np.all(np.asarray(run.mass) <= bound * (1 + 1e-10))


def test_simulate_snapshot_stride(unit_params, gaussian_1d):
    scheme = SchemeConfig(dt=0.01, t_end=0.1, snapshot_stride=3)
    run = simulate(gaussian_1d, unit_params, scheme=scheme)
    np.testing.assert_allclose(run.times, [0.0, 0.03, 0.06, 0.09, 0.1])
    assert run.steps_taken == 10  # noqa: PLR2004


def test_simulate_zero_initial_data(unit_params, grid_1d):
    scheme = SchemeConfig(dt=0.1, t_end=0.5)
    run = simulate(ComplexField.zeros(grid_1d), unit_params, scheme=scheme)
    assert run.t_star_observed == 0.0
    assert all(m == 0.0 for m in run.mass)


def test_simulate_records_fields_and_exports(unit_params, gaussian_1d):
    scheme = SchemeConfig(dt=0.02, t_end=0.1, store_fields=True)
    run = simulate(gaussian_1d, unit_params, scheme=scheme, run_id="abc")
    assert run.fields is not None
    assert len(run.fields) == len(run)
    frame = run.to_frame()
    assert list(frame.columns) == [
        "t",
        "mass",
        "grad_norm",
        "lm1_norm",
        "lp1_norm",
        "envelope",
        "residual",
    ]
    assert frame["envelope"].isna().all()
    bounded = run.to_frame(np.zeros(len(run)))
    assert bounded["residual"].tolist() == pytest.approx(run.mass)
    dataset = run.to_dataset()
    assert isinstance(dataset, xr.Dataset)
    shape = (len(run), gaussian_1d.grid.points_per_axis)
    assert dataset["u_real"].shape == shape
    np.testing.assert_allclose(
        dataset["u_real"].values[0] + 1j * dataset["u_imag"].values[0],
        gaussian_1d.values,
    )
    data = run.to_dict()
    assert "run_id" not in data
    assert data["trajectories"]["mass"] == run.mass
    assert run.lm1_norm[0] == pytest.approx(norm_lq(gaussian_1d, 1.0))


def test_simulate_is_deterministic(gaussian_1d):
    params = PhysicalParams(theta=0.3, m=0.5, a=cmath.exp(-0.3j), b=0.1 + 0j)
    forcing = ForcingProfile(
        kind=ForcingKind.DECAYING, rate=1.0, shape=Shape(amplitude=0.2)
    )
    scheme = SchemeConfig(dt=0.02, t_end=0.2)
    first = simulate(gaussian_1d, params, forcing, scheme)
    second = simulate(gaussian_1d, params, forcing, scheme)
    assert first.to_dict() == second.to_dict()


def test_simulate_abort_keeps_partial_record(monkeypatch, unit_params, gaussian_1d):
    calls = {"n": 0}
    real_step = dynamics.step

    def flaky_step(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:  # noqa: PLR2004
            raise DampingIntegrationError(0, 1.0 + 0j, 0.0, 1e-20)
        return real_step(*args, **kwargs)

    monkeypatch.setattr(dynamics, "step", flaky_step)
    scheme = SchemeConfig(dt=0.01, t_end=0.1)
    with pytest.raises(SimulationAbortedError) as excinfo:
        simulate(gaussian_1d, unit_params, scheme=scheme)
    record = excinfo.value.record
    assert not record.completed
    assert record.steps_taken == 2  # noqa: PLR2004
    assert len(record) == 3  # noqa: PLR2004
    assert "DampingIntegrationError" in (record.error or "")


def test_forcing_power_of_bangbang(gaussian_1d):
    theta, mu = 0.5, 0.3
    params = PhysicalParams(theta=theta, m=0.0, a=cmath.exp(-0.5j))
    profile = ForcingProfile(kind=ForcingKind.BANGBANG, mu=mu)
    expected = mu * math.sin(theta) * norm_lq(gaussian_1d, 1.0)
    assert forcing_power(gaussian_1d, 0.0, params, profile) == pytest.approx(expected)


def test_forcing_power_zero_without_source(unit_params, gaussian_1d):
    assert forcing_power(gaussian_1d, 0.0, unit_params, ForcingProfile()) == 0.0


def test_bangbang_run_2d_completes():
    grid = Grid(dim=2, half_width=4.0, points_per_axis=9)
    params = PhysicalParams(theta=0.0, m=0.0, dim=2)
    u0 = ComplexField(grid, np.exp(-(grid.radius() ** 2)))
    profile = ForcingProfile(kind=ForcingKind.BANGBANG, mu=0.5)
    run = simulate(u0, params, profile, SchemeConfig(dt=0.05, t_end=0.5))
    assert run.completed
    assert run.mass[-1] <= run.mass[0]


@pytest.mark.parametrize(
    "params",
    [
        PhysicalParams(theta=0.0, m=0.0),
        PhysicalParams(theta=0.3, m=0.5, a=cmath.exp(-0.3j), b=0.1 + 0j),
        PhysicalParams(theta=-0.6, m=1.0, a=1.0 + 0.4j, gamma=0.2 + 0j),
    ],
)
def test_step_commutes_with_global_phase(params, gaussian_1d):
    phase = cmath.exp(1j * GAUGE_PHASE)
    u = gaussian_1d.with_values(gaussian_1d.values * (0.8 + 0.6j))
    rotated = u.with_values(phase * u.values)
    expected = phase * step(u, 0.0, 0.05, params).values
    np.testing.assert_allclose(
        step(rotated, 0.0, 0.05, params).values, expected, rtol=1e-9, atol=1e-12
    )
    point = damping_substep(0.3 - 0.2j, 0.05, params)
    assert damping_substep(phase * (0.3 - 0.2j), 0.05, params) == pytest.approx(
        phase * point, rel=1e-9, abs=1e-12
    )


def test_half_power_closed_form_matches_reference_integration():
    theta = 0.3
    # a e^{i theta} = 1 + 1.2i sits inside C_theta(1/2)
    rotated = 1.0 + 1.2j
    params = PhysicalParams(theta=theta, m=0.5, a=rotated * cmath.exp(-1j * theta))
    u0, t = 0.8 + 0.6j, 1.0

    def rhs(_t, y):
        z = complex(y[0], y[1])
        dz = -rotated * z / math.sqrt(abs(z))
        return [dz.real, dz.imag]

    sol = integrate.solve_ivp(
        rhs, (0.0, t), [u0.real, u0.imag], method="DOP853", rtol=1e-13, atol=1e-15
    )
    reference = complex(sol.y[0, -1], sol.y[1, -1])
    out = damping_substep(u0, t, params)
    # sqrt|u| falls linearly from 1 at rate 1/2
    assert abs(out) == pytest.approx(0.25, rel=1e-12)
    assert out == pytest.approx(reference, rel=1e-10)


@pytest.mark.parametrize("theta", [0.0, 0.7])
@pytest.mark.parametrize("mode", [1, 3, 10])
def test_crank_nicolson_scales_eigenmodes(grid_1d, theta, mode):
    dt = 0.2
    n = grid_1d.points_per_axis
    mu = 4.0 / grid_1d.spacing**2 * math.sin(mode * math.pi / (2 * (n + 1))) ** 2
    half = 0.5 * dt * cmath.exp(1j * theta)
    factor = (1 - half * mu) / (1 + half * mu)
    u = sine_mode(grid_1d, (mode,))
    out = diffusion_substep(u, dt, theta)
    np.testing.assert_allclose(out.values, factor * u.values, rtol=1e-9, atol=1e-12)


def _observed_order(u0: ComplexField, params: PhysicalParams, t_end: float) -> float:
    finals = []
    for dt in REFINEMENTS:
        run = simulate(u0, params, scheme=SchemeConfig(dt=dt, t_end=t_end))
        assert run.final_field is not None
        finals.append(run.final_field.values)
    coarse = mass_l2(u0.with_values(finals[0] - finals[1]))
    fine = mass_l2(u0.with_values(finals[1] - finals[2]))
    return math.log2(coarse / fine)


def test_strang_is_second_order_for_smooth_damping(gaussian_1d):
    params = PhysicalParams(theta=0.2, m=1.0, a=1.0 + 0.3j, b=0.5 + 0j)
    assert _observed_order(gaussian_1d, params, 0.2) > 1.8  # noqa: PLR2004


def test_strang_is_at_least_first_order_at_the_kink(unit_params, gaussian_1d):
    assert _observed_order(gaussian_1d, unit_params, 0.2) > 0.9  # noqa: PLR2004
