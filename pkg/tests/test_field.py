"""Tests for grids, discrete norms, the Laplacian and the Helmholtz solve."""

from __future__ import annotations

import math

import numpy as np
import pytest

from glx_lab.numerics.field import (
    ComplexField,
    Grid,
    apply_laplacian,
    compact_bump,
    from_function,
    gaussian_bump,
    grad_norm_sq,
    helmholtz_residual,
    inner,
    mass_l2,
    norm_lq,
    random_smooth,
    sine_mode,
    solve_helmholtz,
)
from tests import DIM_TWO, FLOAT_RTOL, SMALL_POINTS

SINGLE_SPIKE_GRAD_SQ = 4.0
HELMHOLTZ_TOL = 1e-10


@pytest.fixture
def spike() -> ComplexField:
    # h = 0.5; value 1 at the middle of three interior points
    grid = Grid(dim=1, half_width=1.0, points_per_axis=3)
    return ComplexField(grid, np.array([0.0, 1.0, 0.0]))


def test_grid_geometry():
    grid = Grid(dim=2, half_width=1.0, points_per_axis=3)
    assert grid.spacing == pytest.approx(0.5)
    assert grid.shape == (3, 3)
    assert grid.size == 9  # noqa: PLR2004
    assert grid.cell_volume == pytest.approx(0.25)
    np.testing.assert_allclose(grid.axis(), [-0.5, 0.0, 0.5])


@pytest.mark.parametrize(
    ("dim", "half_width", "points"),
    [(0, 1.0, 5), (4, 1.0, 5), (1, 0.0, 5), (1, 1.0, 2)],
)
def test_grid_rejects_bad_geometry(dim, half_width, points):
    with pytest.raises(ValueError, match="must be"):
        Grid(dim=dim, half_width=half_width, points_per_axis=points)


def test_field_validates_values(grid_1d):
    bad = np.zeros(grid_1d.shape, dtype=complex)
    bad[3] = np.nan
    with pytest.raises(ValueError, match="finite"):
        ComplexField(grid_1d, bad)
    with pytest.raises(ValueError, match="interior points"):
        ComplexField(grid_1d, np.zeros(grid_1d.size + 1))


def test_field_reshapes_flat_values():
    grid = Grid(dim=2, half_width=1.0, points_per_axis=3)
    u = ComplexField(grid, np.arange(9, dtype=float))
    assert u.values.shape == (3, 3)


def test_mass_of_single_spike(spike):
    assert mass_l2(spike) == pytest.approx(math.sqrt(0.5))


def test_grad_of_single_spike_includes_boundary_cells(spike):
    assert grad_norm_sq(spike) == pytest.approx(SINGLE_SPIKE_GRAD_SQ)


def test_zero_field_norms(grid_1d):
    zero = ComplexField.zeros(grid_1d)
    assert zero.is_zero()
    assert mass_l2(zero) == 0.0
    assert grad_norm_sq(zero) == 0.0
    assert norm_lq(zero, 1.0) == 0.0


def test_norm_lq(grid_1d, gaussian_1d):
    assert norm_lq(gaussian_1d, 2.0) == mass_l2(gaussian_1d)
    expected = grid_1d.cell_volume * np.sum(np.abs(gaussian_1d.values))
    assert norm_lq(gaussian_1d, 1.0) == pytest.approx(expected)
    with pytest.raises(ValueError, match="q >= 1"):
        norm_lq(gaussian_1d, 0.5)


def test_inner_is_mass_squared(gaussian_1d):
    assert inner(gaussian_1d, gaussian_1d) == pytest.approx(mass_l2(gaussian_1d) ** 2)


def test_inner_rejects_mismatched_grids(gaussian_1d):
    other = ComplexField.zeros(Grid(1, 5.0, SMALL_POINTS))
    with pytest.raises(ValueError, match="different grids"):
        inner(gaussian_1d, other)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_sine_mode_is_discrete_eigenvector(dim):
    grid = Grid(dim=dim, half_width=2.0, points_per_axis=9)
    modes = (1, 2, 3)[:dim]
    u = sine_mode(grid, modes)
    h = grid.spacing
    n1 = grid.points_per_axis + 1
    eigenvalue = sum(
        (2.0 * math.cos(k * math.pi / n1) - 2.0) / h**2 for k in modes
    )
    np.testing.assert_allclose(
        apply_laplacian(u).values, eigenvalue * u.values, atol=1e-10
    )


def test_grad_equals_minus_laplacian_inner(grid_1d):
    rng = np.random.default_rng(1)
    u = random_smooth(grid_1d, rng, n_modes=5)
    lap = apply_laplacian(u)
    assert grad_norm_sq(u) == pytest.approx(-inner(lap, u).real, rel=1e-10)


@pytest.mark.parametrize("dim", [1, DIM_TWO])
def test_helmholtz_solve_residual(dim):
    grid = Grid(dim=dim, half_width=3.0, points_per_axis=15)
    u = gaussian_bump(grid, amplitude=1 + 0.5j)
    sigma = 0.05 * np.exp(0.4j)
    w = solve_helmholtz(u, sigma)
    assert helmholtz_residual(w, u, sigma) <= HELMHOLTZ_TOL


def test_helmholtz_trivial_cases(grid_1d, gaussian_1d):
    same = solve_helmholtz(gaussian_1d, 0.0)
    np.testing.assert_array_equal(same.values, gaussian_1d.values)
    zero = ComplexField.zeros(grid_1d)
    assert solve_helmholtz(zero, 0.1).is_zero()


def test_compact_bump_support(grid_1d):
    u = compact_bump(grid_1d, width=2.0)
    outside = np.abs(grid_1d.axis()) >= 2.0  # noqa: PLR2004
    assert np.all(u.values[outside] == 0)
    assert np.abs(u.values).max() <= 1.0


def test_gaussian_center_dimension_check(grid_1d):
    with pytest.raises(ValueError, match="coordinates"):
        gaussian_bump(grid_1d, center=(0.0, 0.0))


def test_random_smooth_is_seeded(grid_1d):
    u1 = random_smooth(grid_1d, np.random.default_rng(7))
    u2 = random_smooth(grid_1d, np.random.default_rng(7))
    np.testing.assert_array_equal(u1.values, u2.values)


def test_snapshot_bytes_round_trip():
    grid = Grid(dim=2, half_width=1.5, points_per_axis=5)
    u = from_function(grid, lambda x, y: np.exp(-(x**2 + y**2)) * (1 + 1j * x))
    restored = ComplexField.from_bytes(u.to_bytes())
    assert restored.grid == grid
    np.testing.assert_array_equal(restored.values, u.values)
    with pytest.raises(ValueError, match="bytes"):
        ComplexField.from_bytes(u.to_bytes()[:-8])


def test_to_frame_columns(gaussian_1d):
    frame = gaussian_1d.to_frame()
    assert list(frame.columns) == ["x", "re", "im"]
    assert len(frame) == gaussian_1d.grid.size
    assert abs(frame["re"].sum() - gaussian_1d.values.real.sum()) < FLOAT_RTOL * 100
