"""Tests for forcing profiles and their hypothesis checks."""

from __future__ import annotations

import numpy as np
import pytest

from glx_lab.numerics.field import ComplexField, mass_l2
from glx_lab.numerics.forcing import (
    ZERO_FORCING,
    ForcingKind,
    ForcingProfile,
    ForcingUsageError,
    Shape,
    ShapeKind,
    bangbang_values,
    bounded_profile,
    check_profile,
    evaluate,
    scheduled_profile,
)
from glx_lab.numerics.params import (
    AdmissibilityError,
    PhysicalParams,
    derived_constants,
)

CUTOFF_T0 = 1.0
HORIZON = 2.0


@pytest.fixture
def shape() -> Shape:
    return Shape(kind=ShapeKind.GAUSSIAN, width=1.5, amplitude=0.5)


@pytest.fixture
def scheduled(unit_params, shape):
    k = derived_constants(unit_params, c_gn=1.0, t0=HORIZON)
    return k, scheduled_profile(unit_params, k, shape)


def test_zero_forcing_evaluates_to_zero(grid_1d):
    assert evaluate(ZERO_FORCING, 0.3, grid_1d).is_zero()
    assert ZERO_FORCING.vanishes_after(0.0)
    assert ZERO_FORCING.sup_after(grid_1d, 0.0) == 0.0


def test_shaped_kinds_need_a_shape():
    with pytest.raises(ForcingUsageError, match="needs a shape"):
        ForcingProfile(kind=ForcingKind.CUTOFF)
    with pytest.raises(ForcingUsageError, match="nonnegative"):
        ForcingProfile(kind=ForcingKind.BANGBANG, mu=-1.0)


def test_cutoff_switches_off_after_t0(grid_1d, shape):
    profile = ForcingProfile(kind=ForcingKind.CUTOFF, t0=CUTOFF_T0, shape=shape)
    assert not evaluate(profile, CUTOFF_T0, grid_1d).is_zero()
    assert evaluate(profile, CUTOFF_T0 + 1e-9, grid_1d).is_zero()
    assert profile.vanishes_after(CUTOFF_T0)
    assert profile.vanishes_after(CUTOFF_T0 + 0.1)
    assert not profile.vanishes_after(0.5)
    assert profile.sup_after(grid_1d) == 0.0
    assert profile.sup_after(grid_1d, 0.5) == pytest.approx(shape.sup(grid_1d))


def test_cutoff_profile_check_passes(unit_params, grid_1d, shape):
    profile = ForcingProfile(kind=ForcingKind.CUTOFF, t0=CUTOFF_T0, shape=shape)
    report = check_profile(profile, unit_params, None, grid_1d, horizon=3.0)
    assert report.ok
    assert report.max_violation == 0.0


def test_bounded_profile_accepts_small_sup(unit_params, grid_1d, shape):
    profile = bounded_profile(unit_params, shape, grid_1d)
    assert profile.kind is ForcingKind.BOUNDED
    assert check_profile(profile, unit_params, None, grid_1d).ok


def test_bounded_profile_rejects_sup_at_rate(unit_params, grid_1d):
    loud = Shape(amplitude=1.0)
    with pytest.raises(AdmissibilityError, match="sup"):
        bounded_profile(unit_params, loud, grid_1d)


def test_bounded_check_requires_m_zero(grid_1d, shape):
    params = PhysicalParams(theta=0.0, m=0.5)
    profile = ForcingProfile(kind=ForcingKind.BOUNDED, shape=shape)
    report = check_profile(profile, params, None, grid_1d)
    assert not report.ok
    assert any("m = 0" in v for v in report.violations)


def test_scheduled_profile_follows_schedule(scheduled, grid_1d):
    k, profile = scheduled
    assert profile.eps == k.eps_star
    assert profile.exponent == pytest.approx(k.exponent_schedule)
    for t in (0.0, 0.5, 1.9):
        f_sq = mass_l2(profile.evaluate(t, grid_1d)) ** 2
        expected = k.eps_star * (HORIZON - t) ** k.exponent_schedule
        assert f_sq == pytest.approx(expected, rel=1e-10)
    assert profile.evaluate(HORIZON, grid_1d).is_zero()
    assert profile.max_initial_mass == pytest.approx(k.initial_mass_limit())


def test_scheduled_profile_at_eps_star_is_admissible(scheduled, unit_params, grid_1d):
    k, profile = scheduled
    report = check_profile(profile, unit_params, k, grid_1d, horizon=HORIZON + 1)
    assert report.ok, report.violations


def test_scheduled_profile_rejects_large_eps(unit_params, shape):
    k = derived_constants(unit_params, c_gn=1.0, t0=HORIZON)
    with pytest.raises(AdmissibilityError, match="eps_star"):
        scheduled_profile(unit_params, k, shape, eps=2.0 * k.eps_star)


def test_scheduled_check_flags_oversized_profile(scheduled, unit_params, grid_1d):
    k, profile = scheduled
    loud = ForcingProfile(
        kind=ForcingKind.SCHEDULED,
        t0=profile.t0,
        shape=profile.shape,
        eps=2.0 * k.eps_star,
        exponent=profile.exponent,
    )
    report = check_profile(loud, unit_params, k, grid_1d)
    assert not report.ok
    assert report.max_violation > 0


def test_scheduled_profile_needs_m_below_one(shape):
    params = PhysicalParams(theta=0.0, m=0.5)
    k = derived_constants(params, c_gn=1.0, t0=HORIZON)
    with pytest.raises(AdmissibilityError):
        scheduled_profile(PhysicalParams(theta=0.0, m=1.0), k, shape)


def test_bangbang_needs_current_field(grid_1d):
    profile = ForcingProfile(kind=ForcingKind.BANGBANG, mu=0.3)
    with pytest.raises(ForcingUsageError, match="current field"):
        profile.evaluate(0.0, grid_1d)
    assert profile.is_feedback
    assert profile.amplitude(1.0) == pytest.approx(0.3)


def test_bangbang_values_are_zero_on_zero():
    values = np.array([0.0, 2.0, -1j], dtype=complex)
    out = bangbang_values(values, 0.5)
    assert out[0] == 0
    assert out[1] == pytest.approx(-0.5j)
    assert out[2] == pytest.approx(-0.5)


def test_bangbang_evaluate_with_state(gaussian_1d):
    profile = ForcingProfile(kind=ForcingKind.BANGBANG, mu=0.2)
    f = profile.evaluate(0.0, u_current=gaussian_1d)
    assert isinstance(f, ComplexField)
    np.testing.assert_allclose(np.abs(f.values), 0.2)


def test_bangbang_check_adds_note(unit_params, grid_1d):
    profile = ForcingProfile(kind=ForcingKind.BANGBANG, mu=0.2)
    report = check_profile(profile, unit_params, None, grid_1d)
    assert report.ok
    assert report.notes


def test_decaying_profile(unit_params, grid_1d, shape):
    profile = ForcingProfile(kind=ForcingKind.DECAYING, rate=2.0, shape=shape)
    assert profile.amplitude(1.0) == pytest.approx(np.exp(-2.0))
    assert not profile.vanishes_after(10.0)
    assert check_profile(profile, unit_params, None, grid_1d).ok
    flat = ForcingProfile(kind=ForcingKind.DECAYING, rate=0.0, shape=shape)
    assert not check_profile(flat, unit_params, None, grid_1d).ok


def test_normalized_shape_has_unit_mass(grid_1d):
    shape = Shape(width=2.0, amplitude=3j, normalized=True)
    u = ComplexField(grid_1d, shape.values(grid_1d))
    assert mass_l2(u) == pytest.approx(1.0)
    assert np.angle(u.values[grid_1d.points_per_axis // 2]) == pytest.approx(np.pi / 2)
