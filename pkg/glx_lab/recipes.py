"""Built-in verification recipes.

Each recipe is a self-contained experiment (no files, no network) that
checks one quantitative claim and reports every criterion with the value it
measured and the threshold it was held to. ``quick`` shrinks grids, step
counts and sample sizes for smoke testing; the thresholds do not change.
"""

from __future__ import annotations

import cmath
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from glx_lab import config as cfg
from glx_lab.commands.simulate import SimulationOutcome, run_simulation
from glx_lab.numerics.comparison_ode import (
    PiecewiseConstantSource,
    comparison_check,
    scheduled_reference,
    solve_comparison,
    stability_gap,
    young_split as split_source,
)
from glx_lab.numerics.diagnostics import (
    decay_to_zero_check,
    dependence_check,
    max_abs_residual,
)
from glx_lab.numerics.params import extinction_exponents, exponent_identity_gap

logger = logging.getLogger(__name__)

IDENTITY_RTOL = 1e-12
YOUNG_RTOL = 1e-12
ZETA_ATOL = 1e-8
STABILITY_ATOL = 1e-8
LEDGER_MIN_RATIO = 1.8
SCHEDULED_RESIDUAL_FRACTION = 1e-6
ASYMPTOTIC_FRACTION = 1e-6
EXP_DECAY_TOL = 1e-8
ROBUSTNESS_THETAS = (0.0, -1.0, -0.5, 0.5, 1.0)


@dataclass(frozen=True)
class Criterion:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class RecipeOptions:
    seed: int = 0
    workers: int | None = None
    quick: bool = False


@dataclass
class RecipeResult:
    recipe: str
    criteria: list[Criterion] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.criteria) and all(c.passed for c in self.criteria)

    def check(
        self,
        name: str,
        value: float | None,
        threshold: float | None,
        *,
        passed: bool | None = None,
        detail: str = "",
    ) -> Criterion:
        """Record ``value <= threshold`` (or an explicit verdict)."""
        if passed is None:
            passed = value is not None and threshold is not None and value <= threshold
        criterion = Criterion(name, passed, value, threshold, detail)
        self.criteria.append(criterion)
        return criterion

    def to_dict(self) -> dict[str, Any]:
        return {
            "recipe": self.recipe,
            "passed": self.passed,
            "criteria": [c.to_dict() for c in self.criteria],
        }


def _gaussian_config(
    *,
    theta: float,
    m: float,
    a: complex,
    points: int,
    dt: float,
    t_end: float,
    seed: int,
    **sections: dict[str, Any],
) -> cfg.RunConfig:
    data: dict[str, Any] = {
        "seed": seed,
        "params": {"theta": theta, "m": m, "a": [a.real, a.imag]},
        "grid": {"dim": 1, "half_width": 10.0, "points_per_axis": points},
        "scheme": {"dt": dt, "t_end": t_end},
        "initial": {"kind": "gaussian", "width": 1.0},
    }
    for name, values in sections.items():
        data[name] = {**data.get(name, {}), **values}
    return cfg.parse_config(data)


def _family_size(options: RecipeOptions) -> int:
    return 16 if options.quick else 64


# ---------------------- PDE recipes ---------------------- #


def finite_extinction(options: RecipeOptions) -> RecipeResult:
    """Unforced saturated damping: extinction, envelope and time bound.

    Repeated over several rotations with a = e^{-i theta}.
    """
    result = RecipeResult("finite-extinction")
    points, dt = (63, 4e-3) if options.quick else (255, 1e-3)
    for theta in ROBUSTNESS_THETAS:
        config = _gaussian_config(
            theta=theta,
            m=0.0,
            a=cmath.exp(-1j * theta),
            points=points,
            dt=dt,
            t_end=4.0,
            seed=options.seed,
            diagnostics={
                "gn_family_size": _family_size(options),
                "energy_ledger": False,
            },
        )
        outcome = run_simulation(config, workers=options.workers)
        report = outcome.extinction
        label = f"theta={theta:+.2f}"
        if report is None:
            result.check(f"{label}: extinction report", None, None, passed=False)
            continue
        observed = report.t_star_observed
        result.check(
            f"{label}: exact zero reached",
            observed,
            config.scheme.t_end,
            passed=observed is not None and outcome.run.mass[-1] == 0.0,
        )
        result.check(
            f"{label}: envelope violation",
            report.envelope_max_violation,
            report.envelope_tolerance,
        )
        result.check(
            f"{label}: extinction time within bound",
            observed,
            report.t_star_bound * report.safety_factor,
            passed=report.bound_satisfied,
        )
    return result


def scheduled_extinction(options: RecipeOptions) -> RecipeResult:
    """Forcing scheduled to die at T0 = 2 with u0 at the admissible limit."""
    result = RecipeResult("scheduled-extinction")
    points, dt = (63, 4e-3) if options.quick else (255, 1e-3)
    horizon = 2.0
    config = _gaussian_config(
        theta=0.0,
        m=0.0,
        a=1.0 + 0j,
        points=points,
        dt=dt,
        t_end=horizon + 0.5,
        seed=options.seed,
        forcing={
            "kind": "scheduled",
            "t0": horizon,
            "shape": {"kind": "gaussian", "width": 1.0},
        },
        initial={"scale_to_limit": True},
        diagnostics={"gn_family_size": _family_size(options), "energy_ledger": False},
    )
    outcome = run_simulation(config, workers=options.workers)
    result.check(
        "forcing within eps_star schedule",
        outcome.prepared.profile_report.max_violation,
        0.0,
    )
    initial = outcome.run.initial_mass
    result.check(
        "mass at T0 relative to ||u0||",
        outcome.run.mass_at(horizon) / initial if initial else 0.0,
        SCHEDULED_RESIDUAL_FRACTION,
    )
    return result


def exponential_decay(options: RecipeOptions) -> RecipeResult:
    """m = 1 without forcing: exponential envelope, never exactly zero."""
    result = RecipeResult("exponential-decay")
    points, dt = (63, 5e-2) if options.quick else (127, 1e-2)
    config = _gaussian_config(
        theta=0.5,
        m=1.0,
        a=1.0 + 0j,
        points=points,
        dt=dt,
        t_end=20.0,
        seed=options.seed,
        diagnostics={"decay_tolerance": EXP_DECAY_TOL, "energy_ledger": False},
    )
    outcome = run_simulation(config, workers=options.workers)
    decay = outcome.decay
    result.check(
        "mass below exponential envelope",
        decay.max_excess if decay else None,
        EXP_DECAY_TOL,
    )
    result.check(
        "no exact zero",
        outcome.run.mass[-1],
        0.0,
        passed=outcome.run.t_star_observed is None and outcome.run.mass[-1] > 0.0,
    )
    return result


def asymptotic_decay(options: RecipeOptions) -> RecipeResult:
    """m = 1 with an integrable forcing tail: the mass decays to zero."""
    result = RecipeResult("asymptotic-decay")
    points, dt = (63, 1e-1) if options.quick else (127, 5e-2)
    config = _gaussian_config(
        theta=0.0,
        m=1.0,
        a=1.0 + 0j,
        points=points,
        dt=dt,
        t_end=50.0,
        seed=options.seed,
        forcing={
            "kind": "decaying",
            "rate": 1.0,
            "shape": {"kind": "gaussian", "width": 2.0, "amplitude": 0.5},
        },
        diagnostics={"energy_ledger": False},
    )
    outcome = run_simulation(config, workers=options.workers)
    check = decay_to_zero_check(outcome.run, ASYMPTOTIC_FRACTION)
    result.check("final mass / initial mass", check.max_excess, ASYMPTOTIC_FRACTION)
    return result


def energy_ledger(options: RecipeOptions) -> RecipeResult:
    """Self-convergence of the energy ledger residual under dt halving."""
    result = RecipeResult("energy-ledger")
    if options.quick:
        points, dts, t_end = 63, (0.04, 0.02, 0.01), 0.8
    else:
        points, dts, t_end = 127, (0.02, 0.01, 0.005), 1.0
    residuals = []
    for dt in dts:
        config = _gaussian_config(
            theta=0.3,
            m=1.0,
            a=1.0 + 0j,
            points=points,
            dt=dt,
            t_end=t_end,
            seed=options.seed,
            params={"b": [0.5, 0.0], "p": 3.0, "gamma": [0.2, 0.0]},
            forcing={
                "kind": "decaying",
                "rate": 0.5,
                "shape": {"kind": "gaussian", "width": 1.5, "amplitude": [0.3, 0.1]},
            },
        )
        outcome = run_simulation(config, workers=options.workers)
        assert outcome.ledger is not None
        residuals.append(max_abs_residual(outcome.ledger))
    for coarse, fine, dt in zip(residuals, residuals[1:], dts[1:], strict=False):
        ratio = coarse / fine if fine > 0 else math.inf
        result.check(
            f"residual ratio at dt={dt:g}",
            ratio,
            LEDGER_MIN_RATIO,
            passed=ratio >= LEDGER_MIN_RATIO,
        )
    return result


def _dependence_pair(
    options: RecipeOptions, rng: np.random.Generator, same_forcing: bool
) -> tuple[SimulationOutcome, SimulationOutcome]:
    theta = float(rng.uniform(-0.5, 0.5))
    m = float(rng.choice([0.0, 0.5, 1.0]))
    a = cmath.exp(-1j * theta)
    points, dt = (31, 1e-2) if options.quick else (63, 5e-3)

    def forcing() -> dict[str, Any]:
        amp = rng.uniform(-0.3, 0.3, size=2)
        return {
            "kind": "decaying",
            "rate": float(rng.uniform(0.5, 2.0)),
            "shape": {
                "kind": "gaussian",
                "width": float(rng.uniform(1.0, 3.0)),
                "amplitude": [float(amp[0]), float(amp[1])],
            },
        }

    seeds = rng.integers(0, 2**31, size=2)
    f_a = forcing()
    f_b = f_a if same_forcing else forcing()
    seed_b = int(seeds[1]) if same_forcing else int(seeds[0])
    runs = []
    for seed, forcing_block in ((int(seeds[0]), f_a), (seed_b, f_b)):
        config = _gaussian_config(
            theta=theta,
            m=m,
            a=a,
            points=points,
            dt=dt,
            t_end=0.5,
            seed=seed,
            scheme={"store_fields": True},
            initial={"kind": "random", "n_modes": 4},
            forcing=forcing_block,
            diagnostics={"energy_ledger": False, "extinction_report": False},
        )
        runs.append(run_simulation(config, workers=options.workers))
    return runs[0], runs[1]


def continuous_dependence(options: RecipeOptions) -> RecipeResult:
    """Pairs of runs satisfy the L2 stability estimate up to 5 dt."""
    result = RecipeResult("continuous-dependence")
    rng = np.random.default_rng(options.seed)
    pairs = 4 if options.quick else 50
    worst = -math.inf
    failures = 0
    tolerance = 0.0
    for j in range(pairs):
        run_a, run_b = _dependence_pair(options, rng, same_forcing=j % 2 == 0)
        check = dependence_check(run_a.run, run_b.run)
        worst = max(worst, check.max_excess)
        tolerance = check.tolerance
        failures += 0 if check.holds else 1
    result.check(
        f"stability excess over {pairs} pairs",
        worst,
        tolerance,
        passed=failures == 0,
        detail=f"{failures} failing pairs",
    )
    return result


# ---------------------- Scalar recipes ---------------------- #


def comparison_ode(options: RecipeOptions) -> RecipeResult:
    """Closed-form scheduled solution, stability and comparison for the ODE."""
    result = RecipeResult("comparison-ode")
    alpha, delta, horizon = 1.0, 0.6, 1.0
    ref = scheduled_reference(alpha, delta, horizon)
    traj = solve_comparison(
        alpha, delta, ref.source, ref.zeta_star, 0.0, 1.5, dt_out=1e-2
    )
    zeta_error = float(np.max(np.abs(traj.values - ref.zeta(traj.times))))
    result.check("closed-form zeta error", zeta_error, ZETA_ATOL)

    rng = np.random.default_rng(options.seed)
    trials = 100 if options.quick else 1000
    t_end = 2.0
    t_eval = np.linspace(0.0, t_end, 201)
    worst = -math.inf
    for _ in range(trials):
        g1 = PiecewiseConstantSource.random(rng, 0.0, t_end)
        g2 = PiecewiseConstantSource.random(rng, 0.0, t_end)
        z0 = rng.uniform(0.0, 2.0, size=2)
        z1 = solve_comparison(alpha, delta, g1, float(z0[0]), 0.0, t_end, t_eval=t_eval)
        z2 = solve_comparison(alpha, delta, g2, float(z0[1]), 0.0, t_end, t_eval=t_eval)
        s, t = np.sort(rng.uniform(0.0, t_end, size=2))
        lhs, rhs = stability_gap(z1, z2, g1, g2, float(s), float(t))
        worst = max(worst, lhs - rhs)
    result.check(f"stability excess over {trials} pairs", worst, STABILITY_ATOL)

    comparisons = 20 if options.quick else 100
    violations = 0
    for _ in range(comparisons):
        g = PiecewiseConstantSource.random(rng, 0.0, t_end)
        halved = tuple(0.5 * v for v in g.levels)
        smaller = PiecewiseConstantSource(g.breakpoints, halved)
        y0 = float(rng.uniform(0.0, 2.0))
        y = solve_comparison(alpha, delta, smaller, y0, 0.0, t_end, t_eval=t_eval)
        t_star = float(rng.uniform(0.0, t_end))
        if not comparison_check(y, alpha, delta, g, t_star):
            violations += 1
    result.check(
        f"subsolutions stay below over {comparisons} trials",
        float(violations),
        0.0,
    )
    return result


def young_split(options: RecipeOptions) -> RecipeResult:
    """2 f sqrt(y) <= g + alpha y^delta on random draws."""
    result = RecipeResult("young-split")
    rng = np.random.default_rng(options.seed)
    draws = 10_000 if options.quick else 100_000
    alphas = rng.uniform(0.1, 5.0, size=draws)
    deltas = rng.uniform(0.55, 0.99, size=draws)
    forces = rng.uniform(0.0, 3.0, size=draws)
    ys = rng.uniform(0.0, 10.0, size=draws)
    violations = 0
    for alpha, delta, f, y in zip(alphas, deltas, forces, ys, strict=True):
        sides = split_source(float(alpha), float(delta), float(f), float(y))
        if sides.slack < -YOUNG_RTOL * max(1.0, sides.lhs):
            violations += 1
    result.check(f"violations over {draws} draws", float(violations), 0.0)
    return result


def exponent_identity(options: RecipeOptions) -> RecipeResult:  # noqa: ARG001
    """(2 delta - 1)/(1 - delta) identity and 1/2 < delta < 1 on the m, N grid."""
    result = RecipeResult("exponent-identity")
    worst = 0.0
    out_of_range = 0
    for m in np.round(np.arange(0.0, 0.95, 0.1), 10):
        for dim in (1, 2, 3):
            worst = max(worst, exponent_identity_gap(float(m), dim))
            delta, _ = extinction_exponents(float(m), dim)
            out_of_range += 0 if 0.5 < delta < 1.0 else 1
    result.check("relative identity gap", worst, IDENTITY_RTOL)
    result.check("delta outside (1/2, 1)", float(out_of_range), 0.0)
    return result


Recipe = Callable[[RecipeOptions], RecipeResult]

RECIPES: dict[str, Recipe] = {
    "finite-extinction": finite_extinction,
    "scheduled-extinction": scheduled_extinction,
    "exponential-decay": exponential_decay,
    "asymptotic-decay": asymptotic_decay,
    "comparison-ode": comparison_ode,
    "energy-ledger": energy_ledger,
    "continuous-dependence": continuous_dependence,
    "young-split": young_split,
    "exponent-identity": exponent_identity,
}


RECIPE_ALIASES: dict[str, str] = {
    "thm2_9_1": "finite-extinction",
    "thm2_9_2": "scheduled-extinction",
    "prop2_7": "exponential-decay",
    "thm2_6": "asymptotic-decay",
    "lemma3_2": "comparison-ode",
}


def resolve_recipe(name: str) -> str:
    """Canonical recipe name; the short identifiers are accepted as aliases."""
    name = RECIPE_ALIASES.get(name, name)
    if name not in RECIPES:
        available = sorted([*RECIPES, *RECIPE_ALIASES])
        msg = f"Unknown recipe: {name}. Available recipes: {available}"
        raise ValueError(msg)
    return name


def run_recipe(name: str, options: RecipeOptions | None = None) -> RecipeResult:
    canonical = resolve_recipe(name)
    options = options or RecipeOptions()
    logger.info("running recipe %s (quick=%s)", canonical, options.quick)
    return RECIPES[canonical](options)
