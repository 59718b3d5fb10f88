"""Complex fields on a Dirichlet box, discrete norms and the discrete Laplacian.

The domain is the box (-L, L)^dim sampled at ``points_per_axis`` interior
points per axis with spacing h = 2L / (points_per_axis + 1). Boundary values
are implicitly zero; every stencil below pads with zeros instead of storing
them.
"""

from __future__ import annotations

import functools
import io
import logging
import math
import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
from scipy import linalg, sparse
from scipy.sparse import linalg as spla

from glx_lab import observability

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

MIN_POINTS_PER_AXIS = 3
MAX_DIM = 3
DEFAULT_HELMHOLTZ_RTOL = 1e-10
SNAPSHOT_HEADER = struct.Struct("<iid")


class HelmholtzConvergenceError(ArithmeticError):
    """Raised when the iterative Helmholtz solve misses its residual target."""

    def __init__(self, iterations: int, residual: float, rtol: float) -> None:
        self.iterations = iterations
        self.residual = residual
        self.rtol = rtol
        msg = (
            f"Helmholtz solve did not converge after {iterations} iterations: "
            f"relative residual {residual:.3e} > {rtol:.1e}"
        )
        super().__init__(msg)


@dataclass(frozen=True)
class Grid:
    """Uniform interior grid of the box (-half_width, half_width)^dim."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self) -> None:
        if self.dim not in range(1, MAX_DIM + 1):
            msg = f"dim must be 1, 2 or 3, got {self.dim!r}"
            raise ValueError(msg)
        if not self.half_width > 0:
            msg = f"half_width must be positive, got {self.half_width!r}"
            raise ValueError(msg)
        if self.points_per_axis < MIN_POINTS_PER_AXIS:
            msg = (
                f"points_per_axis must be >= {MIN_POINTS_PER_AXIS}, "
                f"got {self.points_per_axis!r}"
            )
            raise ValueError(msg)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis + 1)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def measure(self) -> float:
        """Discrete measure of the interior, size * h^dim."""
        return self.size * self.cell_volume

    def axis(self) -> NDArray[np.float64]:
        """Interior coordinates along one axis."""
        h = self.spacing
        return -self.half_width + h * np.arange(1, self.points_per_axis + 1)

    def mesh(self) -> tuple[NDArray[np.float64], ...]:
        axis = self.axis()
        return tuple(np.meshgrid(*([axis] * self.dim), indexing="ij"))

    def radius(self, center: tuple[float, ...] | None = None) -> NDArray[np.float64]:
        """Euclidean distance of every interior point from ``center``."""
        center = center or (0.0,) * self.dim
        if len(center) != self.dim:
            msg = f"center has {len(center)} coordinates, grid has dim {self.dim}"
            raise ValueError(msg)
        mesh = self.mesh()
        return np.sqrt(sum((x - c) ** 2 for x, c in zip(mesh, center, strict=True)))

    def to_dict(self) -> dict[str, object]:
        return {
            "dim": self.dim,
            "half_width": self.half_width,
            "points_per_axis": self.points_per_axis,
            "spacing": self.spacing,
        }


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex values at the interior points of ``grid`` (boundary is zero)."""

    grid: Grid
    values: NDArray[np.complex128]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                msg = (
                    f"field has {values.size} values, grid has {self.grid.size} "
                    "interior points"
                )
                raise ValueError(msg)
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            msg = "field values must be finite (no NaN or Inf)"
            raise ValueError(msg)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> ComplexField:
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def zeros_like(self) -> ComplexField:
        return ComplexField.zeros(self.grid)

    def with_values(self, values: NDArray[np.complex128]) -> ComplexField:
        return ComplexField(self.grid, values)

    def scaled(self, factor: complex) -> ComplexField:
        return ComplexField(self.grid, self.values * factor)

    def is_zero(self) -> bool:
        return not np.any(self.values)

    # Snapshot serialisation: little-endian header (dim, points_per_axis, L)
    # followed by interleaved (re, im) float64 pairs in C order.
    def to_bytes(self) -> bytes:
        header = SNAPSHOT_HEADER.pack(
            self.grid.dim, self.grid.points_per_axis, self.grid.half_width
        )
        body = np.ascontiguousarray(self.values).astype("<c16").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, payload: bytes) -> ComplexField:
        if len(payload) < SNAPSHOT_HEADER.size:
            msg = "snapshot payload is shorter than its header"
            raise ValueError(msg)
        dim, points, half_width = SNAPSHOT_HEADER.unpack_from(payload)
        grid = Grid(dim=dim, half_width=half_width, points_per_axis=points)
        body = payload[SNAPSHOT_HEADER.size :]
        expected = grid.size * 16
        if len(body) != expected:
            msg = f"snapshot body has {len(body)} bytes, expected {expected}"
            raise ValueError(msg)
        values = np.frombuffer(body, dtype="<c16").astype(np.complex128)
        return cls(grid, values.reshape(grid.shape))

    def to_frame(self) -> pd.DataFrame:
        """One row per interior point: coordinates then re/im."""
        columns = {
            name: x.ravel()
            for name, x in zip(("x", "y", "z"), self.grid.mesh(), strict=False)
        }
        columns["re"] = self.values.real.ravel()
        columns["im"] = self.values.imag.ravel()
        return pd.DataFrame(columns)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, float_format="%.17g")
        return buffer.getvalue()


def _check_same_grid(u: ComplexField, v: ComplexField) -> None:
    if u.grid != v.grid:
        msg = f"fields live on different grids: {u.grid} vs {v.grid}"
        raise ValueError(msg)


def inner(u: ComplexField, v: ComplexField) -> complex:
    """Discrete inner product h^dim sum(u conj(v))."""
    _check_same_grid(u, v)
    return complex(u.grid.cell_volume * np.sum(u.values * np.conj(v.values)))


def mass_l2(u: ComplexField) -> float:
    return float(np.sqrt(u.grid.cell_volume * np.sum(np.abs(u.values) ** 2)))


def norm_lq(u: ComplexField, q: float) -> float:
    if q < 1:
        msg = f"norm_lq needs q >= 1, got {q!r}"
        raise ValueError(msg)
    if q == 2:  # noqa: PLR2004
        return mass_l2(u)
    total = u.grid.cell_volume * np.sum(np.abs(u.values) ** q)
    return float(total ** (1.0 / q))


def _pad(values: NDArray[np.complex128]) -> NDArray[np.complex128]:
    return np.pad(values, 1, mode="constant", constant_values=0)


def grad_norm_sq(u: ComplexField) -> float:
    """h^dim * sum over axes of |forward difference / h|^2, boundary cells included."""
    h = u.grid.spacing
    padded = _pad(u.values)
    total = 0.0
    for axis in range(u.grid.dim):
        # Trim the padding on the other axes, keep it on this one.
        index = tuple(
            slice(None) if k == axis else slice(1, -1) for k in range(u.grid.dim)
        )
        diffs = np.diff(padded[index], axis=axis)
        total += float(np.sum(np.abs(diffs) ** 2))
    return u.grid.cell_volume * total / h**2


def _laplacian_values(
    values: NDArray[np.complex128], h: float
) -> NDArray[np.complex128]:
    dim = values.ndim
    padded = _pad(values)
    out = -2.0 * dim * values
    for axis in range(dim):
        for shift in (slice(2, None), slice(None, -2)):
            index = tuple(shift if k == axis else slice(1, -1) for k in range(dim))
            out = out + padded[index]
    return out / h**2


def apply_laplacian(u: ComplexField) -> ComplexField:
    return u.with_values(_laplacian_values(u.values, u.grid.spacing))


@functools.lru_cache(maxsize=32)
def _laplacian_matrix(grid: Grid) -> sparse.csr_matrix:
    """Sparse (2*dim+1)-point Laplacian in C order, built from Kronecker sums."""
    n = grid.points_per_axis
    h2 = grid.spacing**2
    one_d = sparse.diags(
        [np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]
    ) / h2
    eye = sparse.identity(n, format="csr")
    total = sparse.csr_matrix((grid.size, grid.size))
    for axis in range(grid.dim):
        factors = [one_d if k == axis else eye for k in range(grid.dim)]
        term = factors[0]
        for factor in factors[1:]:
            term = sparse.kron(term, factor, format="csr")
        total = total + term
    return total.tocsr()


@functools.lru_cache(maxsize=32)
def _helmholtz_operator(grid: Grid, sigma: complex) -> sparse.csr_matrix:
    lap = _laplacian_matrix(grid).astype(np.complex128)
    eye = sparse.identity(grid.size, dtype=np.complex128, format="csr")
    return (eye - sigma * lap).tocsr()


def _solve_tridiagonal(
    rhs: NDArray[np.complex128], sigma: complex, h: float
) -> NDArray[np.complex128]:
    n = rhs.shape[0]
    off = -sigma / h**2
    banded = np.empty((3, n), dtype=np.complex128)
    banded[0, :] = off
    banded[1, :] = 1.0 + 2.0 * sigma / h**2
    banded[2, :] = off
    return linalg.solve_banded((1, 1), banded, rhs, check_finite=False)


def _solve_krylov(
    rhs: NDArray[np.complex128],
    grid: Grid,
    sigma: complex,
    rtol: float,
    maxiter: int | None,
) -> NDArray[np.complex128]:
    operator = _helmholtz_operator(grid, sigma)
    diagonal = operator.diagonal()
    preconditioner = spla.LinearOperator(
        operator.shape, matvec=lambda x: x / diagonal, dtype=np.complex128
    )
    flat = rhs.ravel()
    target = ComplexField(grid, rhs)

    def _residual(x: NDArray[np.complex128]) -> float:
        if not np.all(np.isfinite(x)):
            return math.inf
        return helmholtz_residual(ComplexField(grid, x), target, sigma)

    # Krylov stopping tests are preconditioned; leave headroom for the true residual.
    inner_rtol = 0.1 * rtol
    iterations = 0

    def _count(_: object) -> None:
        nonlocal iterations
        iterations += 1

    solution, info = spla.bicgstab(
        operator,
        flat,
        rtol=inner_rtol,
        atol=0.0,
        maxiter=maxiter,
        M=preconditioner,
        callback=_count,
    )
    residual = _residual(solution)
    if info != 0 or residual > rtol:
        logger.info(
            "bicgstab stalled (info=%s, residual=%.3e); retrying with gmres",
            info,
            residual,
        )
        solution, info = spla.gmres(
            operator,
            flat,
            x0=solution,
            rtol=rtol,
            atol=0.0,
            maxiter=maxiter,
            M=preconditioner,
            callback=_count,
            callback_type="pr_norm",
        )
        residual = _residual(solution)
    observability.count("helmholtz_krylov_iterations_total", iterations)
    if residual > rtol:
        raise HelmholtzConvergenceError(iterations, residual, rtol)
    return solution.reshape(grid.shape)


def solve_helmholtz(
    u_rhs: ComplexField,
    sigma: complex,
    *,
    rtol: float = DEFAULT_HELMHOLTZ_RTOL,
    maxiter: int | None = None,
) -> ComplexField:
    """Solve (I - sigma * Laplacian) w = u_rhs.

    1D uses a banded direct solve; 2D and 3D use preconditioned BiCGSTAB with
    a GMRES fallback and a final residual check against ``rtol``.
    """
    observability.count("helmholtz_solves_total")
    if sigma == 0 or u_rhs.is_zero():
        return u_rhs.with_values(u_rhs.values.copy())
    grid = u_rhs.grid
    if grid.dim == 1:
        values = _solve_tridiagonal(u_rhs.values, complex(sigma), grid.spacing)
    else:
        values = _solve_krylov(u_rhs.values, grid, complex(sigma), rtol, maxiter)
    return u_rhs.with_values(values)


def helmholtz_residual(w: ComplexField, rhs: ComplexField, sigma: complex) -> float:
    """Relative residual ||(I - sigma Laplacian) w - rhs|| / ||rhs||."""
    _check_same_grid(w, rhs)
    applied = w.values - sigma * _laplacian_values(w.values, w.grid.spacing)
    denom = np.linalg.norm(rhs.values)
    if denom == 0:
        return float(np.linalg.norm(applied))
    return float(np.linalg.norm(applied - rhs.values) / denom)


# Initial-condition builders. Each returns a ComplexField on ``grid``.


def gaussian_bump(
    grid: Grid,
    amplitude: complex = 1.0,
    width: float = 1.0,
    center: tuple[float, ...] | None = None,
) -> ComplexField:
    r = grid.radius(center)
    return ComplexField(grid, amplitude * np.exp(-((r / width) ** 2)))


def compact_bump(
    grid: Grid,
    amplitude: complex = 1.0,
    width: float = 1.0,
    center: tuple[float, ...] | None = None,
) -> ComplexField:
    """Smooth bump exp(1 - 1/(1 - (r/width)^2)) supported in r < width."""
    s = grid.radius(center) / width
    inside = s < 1.0
    values = np.zeros(grid.shape, dtype=np.complex128)
    values[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return ComplexField(grid, values)


def from_function(
    grid: Grid, func: Callable[..., NDArray[np.complex128]]
) -> ComplexField:
    """Sample ``func(x0, x1, ...)`` on the grid mesh."""
    return ComplexField(grid, np.asarray(func(*grid.mesh()), dtype=np.complex128))


def sine_mode(
    grid: Grid, modes: tuple[int, ...] | None = None, amplitude: complex = 1.0
) -> ComplexField:
    """Product of Dirichlet modes sin(k pi (x + L) / 2L) over the axes."""
    modes = modes or (1,) * grid.dim
    if len(modes) != grid.dim:
        msg = f"need one mode number per axis, got {modes!r}"
        raise ValueError(msg)
    big_l = grid.half_width

    def product(*mesh: NDArray[np.float64]) -> NDArray[np.complex128]:
        values = np.full(grid.shape, amplitude, dtype=np.complex128)
        for x, k in zip(mesh, modes, strict=True):
            values = values * np.sin(k * np.pi * (x + big_l) / (2.0 * big_l))
        return values

    return from_function(grid, product)


def random_smooth(
    grid: Grid,
    rng: np.random.Generator,
    n_modes: int = 6,
    decay: float = 2.0,
) -> ComplexField:
    """Seeded complex sine series with coefficients decaying like k^-decay."""
    values = np.zeros(grid.shape, dtype=np.complex128)
    big_l = grid.half_width
    mesh = grid.mesh()
    for index in np.ndindex(*((n_modes,) * grid.dim)):
        ks = np.asarray(index) + 1
        coeff = complex(rng.standard_normal(), rng.standard_normal())
        coeff /= float(np.sum(ks**2)) ** (decay / 2.0)
        mode = np.ones(grid.shape)
        for x, k in zip(mesh, ks, strict=True):
            mode = mode * np.sin(k * np.pi * (x + big_l) / (2.0 * big_l))
        values += coeff * mode
    return ComplexField(grid, values)
