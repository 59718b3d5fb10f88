"""Run configuration: TOML files validated by pydantic models.

A run config is a TOML file with ``[params]``, ``[grid]``, ``[scheme]``,
``[forcing]`` (optionally ``[forcing.shape]``), ``[initial]``,
``[diagnostics]`` and ``[output]`` tables plus a top-level ``seed``. Complex
coefficients are written as ``[re, im]`` arrays, plain numbers, or strings
such as ``"1-0.5j"``. See docs/README.md for the full grammar.

Process-level settings come from ``GLX_*`` environment variables; invalid
values are logged and replaced by the default.
"""

from __future__ import annotations

import logging
import os
import tomllib
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError

from glx_lab.numerics.dynamics import SchemeConfig, SplittingOrder
from glx_lab.numerics.field import (
    ComplexField,
    Grid,
    compact_bump,
    gaussian_bump,
    mass_l2,
    random_smooth,
    sine_mode,
)
from glx_lab.numerics.forcing import (
    ForcingKind,
    ForcingProfile,
    Shape,
    ShapeKind,
    bounded_profile,
    scheduled_profile,
)
from glx_lab.numerics.params import DerivedConstants, PhysicalParams

logger = logging.getLogger(__name__)

WORKERS_ENV = "GLX_WORKERS"
OUTPUT_DIR_ENV = "GLX_OUTPUT_DIR"
DEFAULT_WORKERS = 4
DEFAULT_OUTPUT_DIR = "glx-out"
# Keep scaled initial data strictly inside the admissible ball.
INITIAL_MASS_MARGIN = 1.0 - 1e-9
_COMPLEX_PAIR = 2


class ConfigError(ValueError):
    """A config file is missing, unparsable or fails validation."""


def parse_complex(value: Any) -> complex:
    """Accept ``[re, im]``, a real or complex number, or a literal string."""
    match value:
        case complex() | int() | float():
            return complex(value)
        case [re, im]:
            return complex(float(re), float(im))
        case list() | tuple():
            msg = f"complex value needs exactly {_COMPLEX_PAIR} entries, got {value!r}"
            raise ValueError(msg)
        case str():
            try:
                return complex(value.replace(" ", ""))
            except ValueError as exc:
                msg = f"cannot parse complex number from {value!r}"
                raise ValueError(msg) from exc
        case _:
            msg = f"cannot parse complex number from {value!r}"
            raise ValueError(msg)


ComplexValue = Annotated[complex, BeforeValidator(parse_complex)]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParamsBlock(_Block):
    theta: float = 0.0
    m: float = 0.0
    p: float = 3.0
    a: ComplexValue = 1.0 + 0j
    b: ComplexValue = 0j
    gamma: ComplexValue = 0j


class GridBlock(_Block):
    dim: int = 1
    half_width: float = 10.0
    points_per_axis: int = 255

    def build(self) -> Grid:
        return Grid(self.dim, self.half_width, self.points_per_axis)


class SchemeBlock(_Block):
    dt: float = 1e-3
    t_end: float = 1.0
    t_start: float = 0.0
    snapshot_stride: int = 1
    extinction_tolerance: float = 0.0
    splitting_order: SplittingOrder = SplittingOrder.STRANG
    store_fields: bool = False

    def build(self) -> SchemeConfig:
        return SchemeConfig(
            dt=self.dt,
            t_end=self.t_end,
            t_start=self.t_start,
            snapshot_stride=self.snapshot_stride,
            extinction_tolerance=self.extinction_tolerance,
            splitting_order=self.splitting_order,
            store_fields=self.store_fields,
        )


class ShapeBlock(_Block):
    kind: ShapeKind = ShapeKind.GAUSSIAN
    center: list[float] | None = None
    width: float = 1.0
    amplitude: ComplexValue = 1.0 + 0j
    normalized: bool = False

    def build(self) -> Shape:
        return Shape(
            kind=self.kind,
            center=tuple(self.center) if self.center is not None else None,
            width=self.width,
            amplitude=self.amplitude,
            normalized=self.normalized,
        )


class ForcingBlock(_Block):
    """``eps`` of a scheduled forcing defaults to eps_star."""

    kind: ForcingKind = ForcingKind.ZERO
    t0: float = 0.0
    shape: ShapeBlock | None = None
    mu: float = 0.0
    eps: float | None = None
    exponent: float = 1.0
    rate: float = 0.0
    frequency: float = 0.0

    def build(
        self, params: PhysicalParams, grid: Grid, k: DerivedConstants | None
    ) -> ForcingProfile:
        shape = self.shape.build() if self.shape is not None else None
        match self.kind:
            case ForcingKind.SCHEDULED:
                if k is None or shape is None:
                    msg = "scheduled forcing needs a shape and m < 1"
                    raise ConfigError(msg)
                return scheduled_profile(params, k, shape, self.eps)
            case ForcingKind.BOUNDED if shape is not None:
                profile = bounded_profile(params, shape, grid)
                return ForcingProfile(
                    kind=profile.kind,
                    t0=self.t0,
                    shape=shape,
                    frequency=self.frequency,
                )
            case _:
                return ForcingProfile(
                    kind=self.kind,
                    t0=self.t0,
                    shape=shape,
                    mu=self.mu,
                    eps=self.eps or 0.0,
                    exponent=self.exponent,
                    rate=self.rate,
                    frequency=self.frequency,
                )


class InitialBlock(_Block):
    """Initial condition.

    ``mass`` rescales the field to that L2 norm; ``scale_to_limit`` rescales
    it to the largest norm a scheduled forcing admits.
    """

    kind: Literal["gaussian", "compact", "sine", "random", "file"] = "gaussian"
    amplitude: ComplexValue = 1.0 + 0j
    width: float = 1.0
    center: list[float] | None = None
    modes: list[int] | None = None
    n_modes: int = 6
    decay: float = 2.0
    path: str | None = None
    mass: float | None = None
    scale_to_limit: bool = False

    def build(self, grid: Grid, rng: np.random.Generator) -> ComplexField:
        center = tuple(self.center) if self.center is not None else None
        match self.kind:
            case "gaussian":
                u = gaussian_bump(grid, self.amplitude, self.width, center)
            case "compact":
                u = compact_bump(grid, self.amplitude, self.width, center)
            case "sine":
                modes = tuple(self.modes) if self.modes is not None else None
                u = sine_mode(grid, modes, self.amplitude)
            case "random":
                u = random_smooth(grid, rng, self.n_modes, self.decay)
            case _:
                if self.path is None:
                    msg = "initial.kind = 'file' needs initial.path"
                    raise ConfigError(msg)
                u = load_snapshot(Path(self.path))
                if u.grid != grid:
                    msg = f"snapshot grid {u.grid} does not match the config grid"
                    raise ConfigError(msg)
        if self.mass is not None:
            u = rescale_to_mass(u, self.mass)
        return u


class DiagnosticsBlock(_Block):
    """``c_gn`` is estimated over ``gn_family_size`` trials when omitted."""

    energy_ledger: bool = True
    extinction_report: bool = True
    exp_decay: bool = True
    c_gn: float | None = None
    gn_family_size: int = 64
    safety_factor: float = 1.1
    envelope_t0: float | None = None
    envelope_tolerance: float | None = None
    decay_tolerance: float = 1e-8


class OutputBlock(_Block):
    directory: str | None = None


class RunConfig(_Block):
    params: ParamsBlock = Field(default_factory=ParamsBlock)
    grid: GridBlock = Field(default_factory=GridBlock)
    scheme: SchemeBlock = Field(default_factory=SchemeBlock)
    forcing: ForcingBlock = Field(default_factory=ForcingBlock)
    initial: InitialBlock = Field(default_factory=InitialBlock)
    diagnostics: DiagnosticsBlock = Field(default_factory=DiagnosticsBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)
    seed: int = 0

    def physical_params(self) -> PhysicalParams:
        p = self.params
        return PhysicalParams(
            theta=p.theta,
            m=p.m,
            p=p.p,
            a=p.a,
            b=p.b,
            gamma=p.gamma,
            dim=self.grid.dim,
        )

    def envelope_t0(self) -> float:
        """T0 of the extinction estimates: explicit, else the forcing horizon."""
        if self.diagnostics.envelope_t0 is not None:
            return self.diagnostics.envelope_t0
        if self.forcing.kind in {ForcingKind.CUTOFF, ForcingKind.SCHEDULED}:
            return self.forcing.t0
        return self.scheme.t_start

    def output_dir(self, override: str | Path | None = None) -> Path:
        if override is not None:
            return Path(override)
        if self.output.directory is not None:
            return Path(self.output.directory)
        return env_output_dir()

    def with_updates(self, section: str, **values: Any) -> RunConfig:
        """Copy with fields of one section replaced, re-validated."""
        data = self.model_dump()
        data[section] = {**data[section], **values}
        return RunConfig.model_validate(data)


def rescale_to_mass(u: ComplexField, mass: float) -> ComplexField:
    current = mass_l2(u)
    if current == 0.0:
        if mass == 0.0:
            return u
        msg = "cannot rescale the zero field to a positive mass"
        raise ConfigError(msg)
    return u.scaled(mass / current)


def load_snapshot(path: Path) -> ComplexField:
    try:
        return ComplexField.from_bytes(path.read_bytes())
    except FileNotFoundError as exc:
        msg = f"snapshot file not found: {path}"
        raise ConfigError(msg) from exc


def parse_config(data: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        msg = f"invalid run config: {exc}"
        raise ConfigError(msg) from exc


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a TOML run config."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        msg = f"config file not found: {path}"
        raise ConfigError(msg) from exc
    except tomllib.TOMLDecodeError as exc:
        msg = f"config file {path} is not valid TOML: {exc}"
        raise ConfigError(msg) from exc
    logger.debug("loaded config %s", path)
    return parse_config(data)


# ---------------------- Environment ---------------------- #


def env_workers(default: int = DEFAULT_WORKERS) -> int:
    raw = os.getenv(WORKERS_ENV)
    if raw is None:
        return default
    try:
        workers = int(raw)
    except (TypeError, ValueError):
        logger.warning("Invalid %s value %r; using %d", WORKERS_ENV, raw, default)
        return default
    if workers < 1:
        logger.warning(
            "%s must be >= 1, got %d; using %d", WORKERS_ENV, workers, default
        )
        return default
    return workers


def env_output_dir() -> Path:
    return Path(os.getenv(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


def resolve_workers(cli_value: int | None) -> int:
    """``--workers`` wins over ``GLX_WORKERS``."""
    if cli_value is not None:
        if cli_value < 1:
            msg = f"--workers must be >= 1, got {cli_value}"
            raise ConfigError(msg)
        return cli_value
    return env_workers()

