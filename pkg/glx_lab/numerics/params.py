"""Physical parameters, admissibility cone and derived extinction constants.

The damped Ginzburg-Landau model is parametrised by the rotation angle
``theta``, the singular damping exponent ``m``, the power exponent ``p`` and
the complex coefficients ``a``, ``b`` and ``gamma``. Coefficients must lie in
the cone

    C_theta(m) = {z : Re(z e^{i theta}) > 0 and
                      2 sqrt(m) Re(z e^{i theta}) >= |1 - m| |Im(z e^{i theta})|}

All comparisons are plain IEEE comparisons; boundary cases are resolved by
floating-point arithmetic without tolerance fuzz so validation stays
deterministic.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2


class AdmissibilityError(ValueError):
    """Raised when parameters violate the admissibility conditions.

    Validation itself reports violations as values (see ``validate``); this
    error is raised by operations that cannot proceed on inadmissible input.
    """

    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DegenerateExponentError(ValueError):
    """Raised when a constant that needs ``m < 1`` is requested with ``m = 1``."""


def rotate(z: complex, theta: float) -> complex:
    """Return ``z * e^{i theta}``.

    Each product is rounded on its own, so e^{-i theta} rotates to an exactly
    real number and stays inside C_theta(0).
    """
    z = complex(z)
    c, s = math.cos(theta), math.sin(theta)
    return complex(z.real * c - z.imag * s, z.real * s + z.imag * c)


def in_c_theta(z: complex, theta: float, m: float) -> bool:
    """Return True iff ``z`` lies in the admissibility cone C_theta(m).

    ``theta`` may be anywhere in [-pi/2, pi/2] and ``m >= 0``. The real-part
    condition is strict, the second condition is not.
    """
    w = rotate(z, theta)
    if not w.real > 0:
        return False
    return 2.0 * math.sqrt(m) * w.real >= abs(1.0 - m) * abs(w.imag)


@dataclass(frozen=True)
class PhysicalParams:
    """Coefficients of the equation and the spatial dimension ``dim`` (N)."""

    theta: float
    m: float
    p: float = 3.0
    a: complex = 1.0 + 0.0j
    b: complex = 0.0j
    gamma: complex = 0.0j
    dim: int = 1

    @property
    def rotation(self) -> complex:
        return cmath.exp(1j * self.theta)

    @property
    def damping_rate(self) -> float:
        """Re(a e^{i theta}), the rate of the singular damping term."""
        return rotate(self.a, self.theta).real

    @property
    def power_rate(self) -> float:
        return rotate(self.b, self.theta).real

    @property
    def linear_rate(self) -> float:
        return rotate(self.gamma, self.theta).real


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of ``validate``; ``violations`` is empty iff the params are valid."""

    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_for_violations(self) -> None:
        if self.violations:
            raise AdmissibilityError(list(self.violations))

    def to_dict(self) -> dict[str, object]:
        return {"ok": self.ok, "violations": list(self.violations)}


def validate(params: PhysicalParams) -> AdmissibilityReport:
    """Check every admissibility condition and name each one that fails."""
    violations: list[str] = []
    theta_ok = math.isfinite(params.theta) and -HALF_PI < params.theta < HALF_PI
    if not theta_ok:
        violations.append(
            f"theta out of range: {params.theta!r} must lie strictly inside "
            "(-pi/2, pi/2)"
        )
    if not 0.0 <= params.m <= 1.0:
        violations.append(f"m out of range: {params.m!r} must lie in [0, 1]")
    if not params.p > 1.0:
        violations.append(f"p out of range: {params.p!r} must be > 1")
    if not (isinstance(params.dim, int) and params.dim >= 1):
        violations.append(f"dim must be a positive integer, got {params.dim!r}")
    # The cone tests are only meaningful once theta and the exponents are sane.
    if theta_ok and 0.0 <= params.m <= 1.0 and not in_c_theta(
        params.a, params.theta, params.m
    ):
        violations.append(
            f"a not in C_theta(m): a={params.a!r}, theta={params.theta!r}, "
            f"m={params.m!r}"
        )
    if (
        theta_ok
        and params.p > 1.0
        and params.b != 0
        and not in_c_theta(params.b, params.theta, params.p)
    ):
        violations.append(
            f"b not in C_theta(p) and not zero: b={params.b!r}, p={params.p!r}"
        )
    if theta_ok and not params.linear_rate >= 0.0:
        violations.append(
            f"Re(gamma e^(i theta)) must be >= 0, got {params.linear_rate!r}"
        )
    if violations:
        logger.debug("admissibility violations: %s", violations)
    return AdmissibilityReport(tuple(violations))


def extinction_exponents(m: float, dim: int) -> tuple[float, float]:
    """Return ``(delta, lambda)`` for ``m < 1``.

    delta = ((N+2) - m(N-2)) / (N(1-m)+4) and lambda = 2(1-delta).
    """
    if m >= 1.0:
        msg = "extinction exponents need m < 1 (they divide by 1 - m)"
        raise DegenerateExponentError(msg)
    denom = dim * (1.0 - m) + 4.0
    delta = ((dim + 2.0) - m * (dim - 2.0)) / denom
    lam = 4.0 * (1.0 - m) / denom
    return delta, lam


def exponent_identity_gap(m: float, dim: int) -> float:
    """Relative gap of (2 delta - 1)/(1 - delta) = (N(1-m)+4m)/(2(1-m))."""
    delta, _ = extinction_exponents(m, dim)
    lhs = (2.0 * delta - 1.0) / (1.0 - delta)
    rhs = (dim * (1.0 - m) + 4.0 * m) / (2.0 * (1.0 - m))
    return abs(lhs - rhs) / abs(rhs)


def eps_star(alpha: float, delta: float) -> float:
    """Largest admissible amplitude of a scheduled forcing."""
    first = (
        (2.0 * delta - 1.0) ** (-(2.0 * delta - 1.0) / delta)
        * (alpha * delta) ** (1.0 / (1.0 - delta))
        * (1.0 - delta) ** ((2.0 * delta - 1.0) / (delta * (1.0 - delta)))
    )
    return min(first, alpha * delta * (1.0 - delta))


@dataclass(frozen=True)
class DerivedConstants:
    """Constants of the finite-time extinction estimates.

    ``alpha`` is min{cos theta, Re(a e^{i theta})} C_GN^{-4/(N(1-m)+4)}, the
    rate used for scheduled extinction; ``alpha_envelope`` is the same with
    ``big_m`` (which subtracts the forcing sup-norm) and drives the decay
    envelope. They coincide whenever ``f_sup == 0``.
    """

    m: float
    dim: int
    delta: float
    lam: float
    alpha: float
    alpha_envelope: float
    big_m: float
    eps_star: float
    c_gn: float
    t0: float
    f_sup: float = 0.0
    extinction_bound: float | None = None

    @property
    def exponent_schedule(self) -> float:
        """(2 delta - 1)/(1 - delta), the decay exponent of scheduled forcing."""
        return (2.0 * self.delta - 1.0) / (1.0 - self.delta)

    @property
    def gn_power(self) -> float:
        """C_GN^{4/(N(1-m)+4)}."""
        return self.c_gn ** (4.0 / (self.dim * (1.0 - self.m) + 4.0))

    def extinction_bound_for(self, mass_at_t0: float) -> float:
        """Upper bound on the extinction time given the mass at ``t0``."""
        return mass_at_t0**self.lam / (self.lam * self.alpha_envelope) + self.t0

    def initial_mass_limit(
        self, eps: float | None = None, t0: float | None = None
    ) -> float:
        """Largest ||u0|| with ||u0||^{2(1-delta)} <= eps * t0."""
        eps = self.eps_star if eps is None else eps
        t0 = self.t0 if t0 is None else t0
        return (eps * t0) ** (1.0 / (2.0 * (1.0 - self.delta)))

    def to_dict(self) -> dict[str, object]:
        return {
            "m": self.m,
            "dim": self.dim,
            "delta": self.delta,
            "lambda": self.lam,
            "alpha": self.alpha,
            "alpha_envelope": self.alpha_envelope,
            "M": self.big_m,
            "eps_star": self.eps_star,
            "c_gn": self.c_gn,
            "t0": self.t0,
            "f_sup": self.f_sup,
            "extinction_bound": self.extinction_bound,
        }


def derived_constants(
    params: PhysicalParams,
    c_gn: float,
    f_sup: float = 0.0,
    t0: float = 0.0,
    mass_at_t0: float | None = None,
) -> DerivedConstants:
    """Compute delta, lambda, M, both alphas, eps_star and the extinction bound.

    A positive ``f_sup`` selects the weaker hypothesis where the forcing
    after ``t0`` is only sup-bounded; it is accepted for ``m = 0`` only and
    must stay strictly below Re(a e^{i theta}).
    """
    validate(params).raise_for_violations()
    if params.m >= 1.0:
        msg = (
            "m = 1 has no finite-time extinction constants; use the exponential "
            "decay estimate instead"
        )
        raise DegenerateExponentError(msg)
    if not c_gn > 0:
        msg = f"c_gn must be positive, got {c_gn!r}"
        raise ValueError(msg)
    if f_sup < 0:
        msg = f"f_sup must be nonnegative, got {f_sup!r}"
        raise ValueError(msg)
    rate = params.damping_rate
    if f_sup > 0:
        if params.m != 0.0:
            msg = "a sup-bounded forcing after t0 is only admissible when m = 0"
            raise AdmissibilityError([msg])
        if f_sup >= rate:
            msg = (
                f"forcing sup-norm {f_sup!r} must be strictly below "
                f"Re(a e^(i theta)) = {rate!r}"
            )
            raise AdmissibilityError([msg])
    delta, lam = extinction_exponents(params.m, params.dim)
    gn_factor = c_gn ** (-4.0 / (params.dim * (1.0 - params.m) + 4.0))
    cos_theta = math.cos(params.theta)
    big_m = min(cos_theta, rate - f_sup)
    alpha = min(cos_theta, rate) * gn_factor
    alpha_envelope = big_m * gn_factor
    constants = DerivedConstants(
        m=params.m,
        dim=params.dim,
        delta=delta,
        lam=lam,
        alpha=alpha,
        alpha_envelope=alpha_envelope,
        big_m=big_m,
        eps_star=eps_star(alpha, delta),
        c_gn=c_gn,
        t0=t0,
        f_sup=f_sup,
    )
    if mass_at_t0 is not None:
        bound = constants.extinction_bound_for(mass_at_t0)
        constants = replace(constants, extinction_bound=bound)
    return constants


def envelope(
    t: float | ArrayLike, mass_at_t0: float, k: DerivedConstants
) -> float | NDArray[np.float64]:
    """Decay envelope of the L2 norm from ``k.t0`` onward.

    (||u(t0)||^lambda - lambda alpha_envelope (t - t0))_+^{1/lambda}; exactly 0
    once the inner expression is nonpositive.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < k.t0):
        msg = f"envelope is defined for t >= t0 = {k.t0!r}"
        raise ValueError(msg)
    inner = mass_at_t0**k.lam - k.lam * k.alpha_envelope * (t_arr - k.t0)
    values = np.where(inner > 0, np.maximum(inner, 0.0) ** (1.0 / k.lam), 0.0)
    values = np.where(t_arr == k.t0, mass_at_t0, values)
    if values.ndim == 0:
        return float(values)
    return values
