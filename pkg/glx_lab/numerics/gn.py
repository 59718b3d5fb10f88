"""Lower estimates of the discrete Gagliardo-Nirenberg constant.

For a nonzero field u the ratio

    ||u||_2^{(N+2-m(N-2))/2} / (||u||_{m+1}^{m+1} ||grad u||_2^{N(1-m)/2})

is invariant under u -> c u. Its maximum over a trial family is a lower
estimate of C_GN on the given grid. Trial ``j`` is generated from the seed
sequence ``[seed, j]`` alone, so enlarging the family keeps every earlier
trial and the estimate can only grow.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np

from glx_lab import observability
from glx_lab.numerics.field import (
    ComplexField,
    Grid,
    compact_bump,
    gaussian_bump,
    grad_norm_sq,
    mass_l2,
    norm_lq,
    random_smooth,
    sine_mode,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

TRIAL_KINDS = ("gaussian", "compact", "sine", "random")
CHECK_RTOL = 1e-12


@dataclass(frozen=True)
class TrialDescriptor:
    """Enough to rebuild trial ``index`` of the family for ``seed``."""

    index: int
    seed: int
    kind: str
    parameters: dict[str, Any] = field(default_factory=dict, hash=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "seed": self.seed,
            "kind": self.kind,
            "parameters": self.parameters,
        }


def _center(rng: np.random.Generator, grid: Grid, spread: float) -> tuple[float, ...]:
    return tuple(float(c) for c in rng.uniform(-spread, spread, size=grid.dim))


def build_trial(
    grid: Grid, seed: int, index: int
) -> tuple[ComplexField, TrialDescriptor]:
    """Trial ``index`` of the deterministic family for ``seed``."""
    rng = np.random.default_rng([seed, index])
    kind = TRIAL_KINDS[index % len(TRIAL_KINDS)]
    big_l = grid.half_width
    h = grid.spacing
    # Widths from a few cells up to half the box, log-uniform.
    width = float(math.exp(rng.uniform(math.log(3.0 * h), math.log(0.5 * big_l))))
    phase = complex(np.exp(1j * rng.uniform(0.0, 2.0 * np.pi)))
    params: dict[str, Any]
    match kind:
        case "gaussian":
            center = _center(rng, grid, max(big_l - 2.0 * width, 0.0) * 0.5)
            u = gaussian_bump(grid, amplitude=phase, width=width, center=center)
            params = {"width": width, "center": list(center)}
        case "compact":
            width = max(width, 2.5 * h)
            center = _center(rng, grid, max(big_l - width, 0.0) * 0.5)
            u = compact_bump(grid, amplitude=phase, width=width, center=center)
            params = {"width": width, "center": list(center)}
        case "sine":
            modes = tuple(int(k) for k in rng.integers(1, 5, size=grid.dim))
            u = sine_mode(grid, modes=modes, amplitude=phase)
            params = {"modes": list(modes)}
        case _:
            n_modes = int(rng.integers(2, 9))
            decay = float(rng.uniform(1.0, 3.0))
            u = random_smooth(grid, rng, n_modes=n_modes, decay=decay)
            params = {"n_modes": n_modes, "decay": decay}
    return u, TrialDescriptor(index=index, seed=seed, kind=kind, parameters=params)


def gn_ratio(u: ComplexField, m: float) -> float:
    """The scale-invariant GN quotient of ``u``; undefined for u = 0."""
    if u.is_zero():
        msg = "GN ratio is undefined for the zero field"
        raise ValueError(msg)
    n = u.grid.dim
    mass = mass_l2(u)
    lm1 = norm_lq(u, m + 1.0)
    grad = math.sqrt(grad_norm_sq(u))
    numerator = mass ** ((n + 2.0 - m * (n - 2.0)) / 2.0)
    denominator = lm1 ** (m + 1.0) * grad ** (n * (1.0 - m) / 2.0)
    return numerator / denominator


@dataclass(frozen=True)
class GnEstimate:
    m: float
    dim: int
    c_gn: float
    family_size: int
    seed: int
    worst_field_descriptor: TrialDescriptor

    def worst_field(self, grid: Grid) -> ComplexField:
        u, _ = build_trial(grid, self.seed, self.worst_field_descriptor.index)
        return u

    def to_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "dim": self.dim,
            "c_gn": self.c_gn,
            "family_size": self.family_size,
            "seed": self.seed,
            "worst_field": self.worst_field_descriptor.to_dict(),
        }


def _trial_ratio(grid: Grid, seed: int, m: float, index: int) -> float:
    u, _ = build_trial(grid, seed, index)
    return gn_ratio(u, m)


def trial_ratios(
    m: float, grid: Grid, family_size: int, seed: int, workers: int | None = None
) -> list[float]:
    """GN ratio of every trial, in family order."""
    indices = range(family_size)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(
                executor.map(lambda j: _trial_ratio(grid, seed, m, j), indices)
            )
    return [_trial_ratio(grid, seed, m, j) for j in indices]


def estimate_cgn(
    m: float,
    grid: Grid,
    family_size: int = 64,
    seed: int = 0,
    *,
    workers: int | None = None,
) -> GnEstimate:
    """Max of the GN ratio over the first ``family_size`` trials."""
    if not 0.0 <= m <= 1.0:
        msg = f"m must lie in [0, 1], got {m!r}"
        raise ValueError(msg)
    if family_size < 1:
        msg = f"family_size must be >= 1, got {family_size!r}"
        raise ValueError(msg)
    ratios = trial_ratios(m, grid, family_size, seed, workers)
    observability.count("gn_trials_total", family_size)
    worst = int(np.argmax(ratios))
    _, descriptor = build_trial(grid, seed, worst)
    estimate = GnEstimate(
        m=m,
        dim=grid.dim,
        c_gn=float(ratios[worst]),
        family_size=family_size,
        seed=seed,
        worst_field_descriptor=descriptor,
    )
    logger.info(
        "estimated C_GN=%.6g over %d trials (worst: %s #%d)",
        estimate.c_gn,
        family_size,
        descriptor.kind,
        worst,
    )
    return estimate


class GnCheck(NamedTuple):
    ratio: float
    holds: bool


def check_gn(u: ComplexField, m: float, c_gn: float) -> GnCheck:
    """GN ratio of ``u`` relative to ``c_gn`` and whether the energy form holds.

    The energy form is ||u||^{2 delta} <= C_GN^{4/(N(1-m)+4)} (||grad u||^2 +
    ||u||_{m+1}^{m+1}); at m = 1 it degenerates to the ratio test itself.
    """
    ratio = gn_ratio(u, m) / c_gn
    if m >= 1.0:
        return GnCheck(ratio, ratio <= 1.0 + CHECK_RTOL)
    n = u.grid.dim
    denom = n * (1.0 - m) + 4.0
    delta = ((n + 2.0) - m * (n - 2.0)) / denom
    lhs = mass_l2(u) ** (2.0 * delta)
    rhs = c_gn ** (4.0 / denom) * (grad_norm_sq(u) + norm_lq(u, m + 1.0) ** (m + 1.0))
    return GnCheck(ratio, lhs <= rhs * (1.0 + CHECK_RTOL))


def check_family(
    fields: Sequence[ComplexField], m: float, c_gn: float
) -> list[GnCheck]:
    return [check_gn(u, m, c_gn) for u in fields]
