"""Forcing profiles f(t, x) and their hypothesis checks.

Every profile except bang-bang factors as ``time_factor(t) * shape(x)``. The
bang-bang feedback -i mu u/|u| depends on the state instead and is applied
inside the pointwise damping flow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np

from glx_lab.numerics.field import ComplexField, Grid, mass_l2
from glx_lab.numerics.params import AdmissibilityError

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from glx_lab.numerics.params import DerivedConstants, PhysicalParams

logger = logging.getLogger(__name__)

DEFAULT_CHECK_SAMPLES = 2001
# Relative slack when comparing a scheduled profile against its own bound;
# the profile is built to sit exactly on it.
SCHEDULE_RTOL = 1e-12


class ForcingUsageError(ValueError):
    """Raised when a profile is evaluated or built with inconsistent inputs."""


class ForcingKind(StrEnum):
    ZERO = "zero"
    CUTOFF = "cutoff"
    BOUNDED = "bounded"
    SCHEDULED = "scheduled"
    BANGBANG = "bangbang"
    DECAYING = "decaying"


class ShapeKind(StrEnum):
    GAUSSIAN = "gaussian"
    COMPACT = "compact"


@dataclass(frozen=True)
class Shape:
    """Spatial profile: a Gaussian or a compactly supported smooth bump.

    With ``normalized`` set the values are rescaled to unit discrete L2 norm
    on the evaluation grid and ``amplitude`` only contributes its phase.
    """

    kind: ShapeKind = ShapeKind.GAUSSIAN
    center: tuple[float, ...] | None = None
    width: float = 1.0
    amplitude: complex = 1.0
    normalized: bool = False

    def values(self, grid: Grid) -> NDArray[np.complex128]:
        r = grid.radius(self.center)
        s = r / self.width
        match self.kind:
            case ShapeKind.GAUSSIAN:
                base = np.exp(-(s**2))
            case ShapeKind.COMPACT:
                base = np.zeros(grid.shape)
                inside = s < 1.0
                base[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
            case _:  # pragma: no cover - enum is closed
                msg = f"unknown shape kind {self.kind!r}"
                raise ForcingUsageError(msg)
        values = self.amplitude * base.astype(np.complex128)
        if self.normalized:
            norm = mass_l2(ComplexField(grid, base.astype(np.complex128)))
            if norm == 0:
                msg = "shape vanishes on this grid and cannot be normalized"
                raise ForcingUsageError(msg)
            phase = self.amplitude / abs(self.amplitude) if self.amplitude else 1.0
            values = phase * base / norm
        return values

    def sup(self, grid: Grid) -> float:
        return float(np.max(np.abs(self.values(grid))))

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": str(self.kind),
            "center": list(self.center) if self.center is not None else None,
            "width": self.width,
            "amplitude": [complex(self.amplitude).real, complex(self.amplitude).imag],
            "normalized": self.normalized,
        }


@dataclass(frozen=True)
class ForcingProfile:
    """A time-dependent source term.

    ``t0`` is the switch-off time for ``cutoff`` and the horizon T0 for
    ``scheduled``; ``frequency`` rotates cutoff and bounded sources as
    e^{i frequency t}; ``rate`` is the decay rate of ``decaying``.
    """

    kind: ForcingKind = ForcingKind.ZERO
    t0: float = 0.0
    shape: Shape | None = None
    mu: float = 0.0
    eps: float = 0.0
    exponent: float = 1.0
    rate: float = 0.0
    frequency: float = 0.0
    max_initial_mass: float | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind in _SHAPED_KINDS and self.shape is None:
            msg = f"{self.kind} forcing needs a shape"
            raise ForcingUsageError(msg)
        if self.mu < 0 or self.eps < 0:
            msg = "mu and eps must be nonnegative"
            raise ForcingUsageError(msg)

    @property
    def is_feedback(self) -> bool:
        return self.kind is ForcingKind.BANGBANG

    @property
    def feedback_gain(self) -> float:
        return self.mu if self.is_feedback else 0.0

    def time_factor(self, t: float) -> complex:
        """Complex factor multiplying the shape at time ``t``."""
        match self.kind:
            case ForcingKind.ZERO | ForcingKind.BANGBANG:
                return 0.0j
            case ForcingKind.CUTOFF:
                if t > self.t0:
                    return 0.0j
                return complex(np.exp(1j * self.frequency * t))
            case ForcingKind.BOUNDED:
                return complex(np.exp(1j * self.frequency * t))
            case ForcingKind.SCHEDULED:
                remaining = self.t0 - t
                if remaining <= 0:
                    return 0.0j
                return complex(math.sqrt(self.eps * remaining**self.exponent))
            case ForcingKind.DECAYING:
                return complex(math.exp(-self.rate * t))
        msg = f"unknown forcing kind {self.kind!r}"  # pragma: no cover
        raise ForcingUsageError(msg)  # pragma: no cover

    def amplitude(self, t: float) -> float:
        """Modulus of the time factor; the gain mu for bang-bang."""
        if self.is_feedback:
            return self.mu
        return abs(self.time_factor(t))

    def source_values(self, t: float, grid: Grid) -> NDArray[np.complex128] | None:
        """External (state-independent) source on ``grid``, None when it is zero."""
        factor = self.time_factor(t)
        if factor == 0 or self.shape is None:
            return None
        return factor * self.shape.values(grid)

    def vanishes_after(self, t: float) -> bool:
        """True when the external source is zero at every time after ``t``.

        A cutoff source is still on at ``t0`` itself and zero after it. Bang-bang
        feedback counts as vanishing: it is zero on the zero state.
        """
        match self.kind:
            case ForcingKind.ZERO | ForcingKind.BANGBANG:
                return True
            case ForcingKind.CUTOFF | ForcingKind.SCHEDULED:
                return t >= self.t0
            case _:
                return self.shape is None or self.shape.amplitude == 0

    def sup_after(self, grid: Grid, t: float | None = None) -> float:
        """sup of |f| over all points and all times after ``t`` (default ``t0``)."""
        t = self.t0 if t is None else t
        if self.vanishes_after(t) and not self.is_feedback:
            return 0.0
        if self.is_feedback:
            return self.mu
        shape_sup = self.shape.sup(grid) if self.shape is not None else 0.0
        match self.kind:
            case ForcingKind.DECAYING:
                return math.exp(-self.rate * t) * shape_sup
            case ForcingKind.SCHEDULED:
                return abs(self.time_factor(t)) * shape_sup
            case _:
                return shape_sup

    def evaluate(
        self, t: float, grid: Grid | None = None, u_current: ComplexField | None = None
    ) -> ComplexField:
        """The forcing field at time ``t``."""
        if grid is None:
            if u_current is None:
                msg = "evaluate needs a grid or the current field"
                raise ForcingUsageError(msg)
            grid = u_current.grid
        if self.is_feedback:
            if u_current is None:
                msg = "bang-bang forcing needs the current field u"
                raise ForcingUsageError(msg)
            return ComplexField(grid, bangbang_values(u_current.values, self.mu))
        values = self.source_values(t, grid)
        if values is None:
            return ComplexField.zeros(grid)
        return ComplexField(grid, values)

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": str(self.kind),
            "t0": self.t0,
            "shape": self.shape.to_dict() if self.shape is not None else None,
            "mu": self.mu,
            "eps": self.eps,
            "exponent": self.exponent,
            "rate": self.rate,
            "frequency": self.frequency,
            "max_initial_mass": self.max_initial_mass,
        }


_SHAPED_KINDS = frozenset(
    {
        ForcingKind.CUTOFF,
        ForcingKind.BOUNDED,
        ForcingKind.SCHEDULED,
        ForcingKind.DECAYING,
    }
)

ZERO_FORCING = ForcingProfile()


def bangbang_values(
    values: NDArray[np.complex128], mu: float
) -> NDArray[np.complex128]:
    """-i mu u/|u| where u != 0 and 0 where u == 0."""
    rho = np.abs(values)
    direction = np.zeros_like(values)
    nonzero = rho > 0
    direction[nonzero] = values[nonzero] / rho[nonzero]
    return -1j * mu * direction


def evaluate(
    profile: ForcingProfile,
    t: float,
    grid: Grid | None = None,
    u_current: ComplexField | None = None,
) -> ComplexField:
    return profile.evaluate(t, grid, u_current)


def bounded_profile(params: PhysicalParams, shape: Shape, grid: Grid) -> ForcingProfile:
    """Sup-bounded source, rejected unless sup |f| < Re(a e^{i theta})."""
    sup = shape.sup(grid)
    if not sup < params.damping_rate:
        msg = (
            f"bounded forcing needs sup |f| < Re(a e^(i theta)) = "
            f"{params.damping_rate!r}, got {sup!r}"
        )
        raise AdmissibilityError([msg])
    return ForcingProfile(kind=ForcingKind.BOUNDED, shape=shape)


def scheduled_profile(
    params: PhysicalParams,
    k: DerivedConstants,
    shape: Shape,
    eps: float | None = None,
) -> ForcingProfile:
    """Source with ||f(t)||^2 = eps (T0 - t)_+^{(2 delta - 1)/(1 - delta)}.

    T0 is ``k.t0``; ``eps`` defaults to eps_star. The returned profile records
    the largest admissible ||u0|| in ``max_initial_mass``.
    """
    if params.m >= 1.0:
        msg = "scheduled forcing needs m < 1"
        raise AdmissibilityError([msg])
    if not k.t0 > 0:
        msg = f"scheduled forcing needs a positive horizon T0, got {k.t0!r}"
        raise ForcingUsageError(msg)
    eps = k.eps_star if eps is None else eps
    if eps > k.eps_star:
        msg = f"scheduled amplitude eps={eps!r} exceeds eps_star={k.eps_star!r}"
        raise AdmissibilityError([msg])
    unit_shape = Shape(
        kind=shape.kind,
        center=shape.center,
        width=shape.width,
        amplitude=shape.amplitude,
        normalized=True,
    )
    profile = ForcingProfile(
        kind=ForcingKind.SCHEDULED,
        t0=k.t0,
        shape=unit_shape,
        eps=eps,
        exponent=k.exponent_schedule,
        max_initial_mass=k.initial_mass_limit(eps),
    )
    logger.debug(
        "scheduled forcing: eps=%.6g exponent=%.6g max ||u0||=%.6g",
        eps,
        profile.exponent,
        profile.max_initial_mass,
    )
    return profile


@dataclass(frozen=True)
class ProfileReport:
    """Outcome of ``check_profile``; ``max_violation`` is 0 when ok."""

    violations: tuple[str, ...] = ()
    max_violation: float = 0.0
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, object]:
        return {
            "ok": self.ok,
            "violations": list(self.violations),
            "max_violation": self.max_violation,
            "notes": list(self.notes),
        }


def _sample_times(start: float, stop: float, samples: int) -> NDArray[np.float64]:
    return np.linspace(start, stop, samples)


def check_profile(
    profile: ForcingProfile,
    params: PhysicalParams,
    k: DerivedConstants | None,
    grid: Grid,
    *,
    horizon: float | None = None,
    samples: int = DEFAULT_CHECK_SAMPLES,
) -> ProfileReport:
    """Verify the kind-specific hypothesis by dense sampling in time."""
    violations: list[str] = []
    notes: list[str] = []
    worst = 0.0
    span = horizon if horizon is not None else max(1.0, 2.0 * profile.t0)
    match profile.kind:
        case ForcingKind.ZERO:
            pass
        case ForcingKind.CUTOFF:
            # strictly after t0: the first sample sits just past the switch-off
            times = profile.t0 + span * _sample_times(0.0, 1.0, samples)[1:]
            for t in times:
                sup = float(np.max(np.abs(profile.evaluate(float(t), grid).values)))
                worst = max(worst, sup)
            if worst > 0:
                violations.append(f"cutoff forcing is nonzero after t0: {worst!r}")
        case ForcingKind.BOUNDED:
            sup = profile.sup_after(grid)
            rate = params.damping_rate
            if not sup < rate:
                worst = sup - rate
                violations.append(
                    f"bounded forcing sup {sup!r} is not < Re(a e^(i theta)) = {rate!r}"
                )
            if params.m != 0.0:
                violations.append("sup-bounded forcing hypothesis needs m = 0")
        case ForcingKind.SCHEDULED:
            if k is None:
                violations.append("scheduled forcing needs derived constants")
            else:
                if profile.eps > k.eps_star:
                    violations.append(
                        f"eps={profile.eps!r} exceeds eps_star={k.eps_star!r}"
                    )
                    worst = profile.eps - k.eps_star
                exponent = k.exponent_schedule
                for t in _sample_times(0.0, profile.t0 + span, samples):
                    f_sq = mass_l2(profile.evaluate(float(t), grid)) ** 2
                    bound = k.eps_star * max(profile.t0 - float(t), 0.0) ** exponent
                    excess = f_sq - bound * (1.0 + SCHEDULE_RTOL)
                    if excess > 0:
                        worst = max(worst, excess)
                if worst > 0 and not violations:
                    violations.append(
                        f"||f(t)||^2 exceeds eps_star (T0 - t)_+^{exponent:.6g} "
                        f"by up to {worst!r}"
                    )
        case ForcingKind.BANGBANG:
            notes.append(
                "bang-bang feedback is a forcing-side experiment; the extinction "
                "estimates are not claimed for it"
            )
        case ForcingKind.DECAYING:
            if not profile.rate > 0:
                violations.append(
                    f"decaying forcing needs rate > 0 to be integrable, "
                    f"got {profile.rate!r}"
                )
    return ProfileReport(tuple(violations), float(worst), tuple(notes))
