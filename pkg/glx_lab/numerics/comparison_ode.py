"""Nonnegative solutions of the scalar comparison equation z' + alpha z^delta = g.

The right-hand side is not Lipschitz at z = 0 when delta < 1, so the solver
never steps through the singularity blindly: on intervals where the source
vanishes it uses the separable closed form, elsewhere it runs DOP853 with a
terminal event at z = 0 and restarts from the exact zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np
import pandas as pd
from scipy import integrate

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
MAX_RESTARTS = 1000


class ComparisonIntegrationError(ArithmeticError):
    """Raised when the adaptive solver fails on a segment."""

    def __init__(self, t: float, message: str) -> None:
        self.t = t
        msg = f"comparison ODE integration failed near t={t:.6g}: {message}"
        super().__init__(msg)


@runtime_checkable
class Source(Protocol):
    """A nonnegative source g(t) that knows where it is smooth."""

    breakpoints: tuple[float, ...]

    def __call__(self, t: float) -> float: ...

    def vanishes_on(self, start: float, stop: float) -> bool: ...


@dataclass(frozen=True)
class ScalarTrajectory:
    """Sampled nonnegative scalar function of time."""

    times: NDArray[np.float64]
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            msg = "times and values must be 1-D arrays of equal length"
            raise ValueError(msg)
        if times.size > 1 and not np.all(np.diff(times) > 0):
            msg = "trajectory times must be strictly increasing"
            raise ValueError(msg)
        if np.any(values < 0):
            msg = f"trajectory values must be nonnegative, min {values.min()!r}"
            raise ValueError(msg)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def stop(self) -> float:
        return float(self.times[-1])

    def covers(self, t: float) -> bool:
        return self.start <= t <= self.stop

    def at(self, t: float | ArrayLike) -> float | NDArray[np.float64]:
        """Linear interpolation; exact at sample times."""
        out = np.interp(t, self.times, self.values)
        return float(out) if np.ndim(out) == 0 else out

    def to_frame(self, name: str = "z") -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, name: self.values})


@dataclass(frozen=True)
class PiecewiseConstantSource:
    """g(t) = levels[j] on [breakpoints[j-1], breakpoints[j]).

    ``levels`` has one more entry than ``breakpoints``; the first level holds
    before the first breakpoint and the last one after the final breakpoint.
    """

    breakpoints: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.levels) != len(self.breakpoints) + 1:
            msg = "need exactly one more level than breakpoints"
            raise ValueError(msg)
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            msg = "breakpoints must be strictly increasing"
            raise ValueError(msg)
        if any(level < 0 for level in self.levels):
            msg = "source levels must be nonnegative"
            raise ValueError(msg)

    @classmethod
    def constant(cls, level: float) -> PiecewiseConstantSource:
        return cls((), (float(level),))

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        start: float,
        stop: float,
        pieces: int = 8,
        scale: float = 1.0,
        zero_fraction: float = 0.25,
    ) -> PiecewiseConstantSource:
        """Random levels on ``pieces`` intervals of [start, stop]; some are zero."""
        edges = np.sort(rng.uniform(start, stop, size=pieces - 1))
        levels = scale * rng.uniform(0.0, 1.0, size=pieces)
        levels[rng.uniform(size=pieces) < zero_fraction] = 0.0
        return cls(tuple(map(float, edges)), tuple(map(float, levels)))

    def _index(self, t: float) -> int:
        return int(np.searchsorted(self.breakpoints, t, side="right"))

    def __call__(self, t: float) -> float:
        return self.levels[self._index(t)]

    def vanishes_on(self, start: float, stop: float) -> bool:
        """True when g is zero on the open interval (start, stop)."""
        first = self._index(start)
        last = int(np.searchsorted(self.breakpoints, stop, side="left"))
        return all(self.levels[j] == 0 for j in range(first, max(first, last) + 1))


@dataclass(frozen=True)
class ScheduledSource:
    """g(t) = z_star (T0 - t)_+^{delta/(1-delta)}.

    Together with z0 = zeta_star this source makes the closed-form
    ``scheduled_reference`` the exact solution.
    """

    alpha: float
    delta: float
    t_horizon: float

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.t_horizon,)

    @property
    def z_star(self) -> float:
        return (
            self.alpha * self.delta**self.delta * (1.0 - self.delta)
        ) ** (1.0 / (1.0 - self.delta))

    def __call__(self, t: float) -> float:
        remaining = self.t_horizon - t
        if remaining <= 0:
            return 0.0
        return self.z_star * remaining ** (self.delta / (1.0 - self.delta))

    def vanishes_on(self, start: float, stop: float) -> bool:  # noqa: ARG002
        return start >= self.t_horizon


@dataclass(frozen=True)
class _CallableSource:
    func: Callable[[float], float]
    breakpoints: tuple[float, ...] = ()

    def __call__(self, t: float) -> float:
        return float(self.func(t))

    def vanishes_on(self, start: float, stop: float) -> bool:  # noqa: ARG002
        return False


def as_source(g: Source | Callable[[float], float] | float) -> Source:
    """Wrap constants and plain callables so the solver can query breakpoints."""
    if isinstance(g, int | float):
        return PiecewiseConstantSource.constant(float(g))
    if isinstance(g, Source):
        return g
    return _CallableSource(g)


def separable_solution(
    z0: float, alpha: float, delta: float, elapsed: float | ArrayLike
) -> float | NDArray[np.float64]:
    """(z0^{1-delta} - alpha (1-delta) t)_+^{1/(1-delta)}, the g = 0 solution."""
    elapsed_arr = np.asarray(elapsed, dtype=float)
    if delta == 1.0:
        out = z0 * np.exp(-alpha * elapsed_arr)
    else:
        inner = z0 ** (1.0 - delta) - alpha * (1.0 - delta) * elapsed_arr
        out = np.where(inner > 0, np.maximum(inner, 0.0) ** (1.0 / (1.0 - delta)), 0.0)
    return float(out) if out.ndim == 0 else out


def extinction_time(z0: float, alpha: float, delta: float) -> float:
    """Time for the unforced solution to reach zero, z0^{1-delta}/(alpha(1-delta))."""
    if not 0 < delta < 1:
        msg = f"finite extinction needs 0 < delta < 1, got {delta!r}"
        raise ValueError(msg)
    return z0 ** (1.0 - delta) / (alpha * (1.0 - delta))


@dataclass(frozen=True)
class ScheduledReference:
    """Closed-form pair (g, zeta) of the scheduled-extinction construction."""

    alpha: float
    delta: float
    t_horizon: float

    @property
    def z_star(self) -> float:
        return ScheduledSource(self.alpha, self.delta, self.t_horizon).z_star

    @property
    def zeta_star(self) -> float:
        return (self.alpha * self.delta * (1.0 - self.delta) * self.t_horizon) ** (
            1.0 / (1.0 - self.delta)
        )

    @property
    def source(self) -> ScheduledSource:
        return ScheduledSource(self.alpha, self.delta, self.t_horizon)

    def zeta(self, t: float | ArrayLike) -> float | NDArray[np.float64]:
        """zeta_star T0^{-1/(1-delta)} (T0 - t)_+^{1/(1-delta)}."""
        power = 1.0 / (1.0 - self.delta)
        remaining = np.maximum(self.t_horizon - np.asarray(t, dtype=float), 0.0)
        out = self.zeta_star * self.t_horizon ** (-power) * remaining**power
        return float(out) if np.ndim(out) == 0 else out

    def zeta_derivative(self, t: float | ArrayLike) -> float | NDArray[np.float64]:
        power = 1.0 / (1.0 - self.delta)
        remaining = np.maximum(self.t_horizon - np.asarray(t, dtype=float), 0.0)
        out = -power * self.zeta_star * self.t_horizon ** (-power) * remaining ** (
            power - 1.0
        )
        return float(out) if np.ndim(out) == 0 else out


def scheduled_reference(
    alpha: float, delta: float, t_horizon: float
) -> ScheduledReference:
    if not 0 < delta < 1:
        msg = f"scheduled reference needs 0 < delta < 1, got {delta!r}"
        raise ValueError(msg)
    return ScheduledReference(alpha, delta, t_horizon)


def _output_times(t0: float, t_end: float, dt_out: float) -> NDArray[np.float64]:
    n = max(0, math.ceil((t_end - t0) / dt_out - 1e-9))
    times = t0 + dt_out * np.arange(n + 1, dtype=float)
    times[-1] = t_end
    return times


def _integrate_segment(
    source: Source,
    alpha: float,
    delta: float,
    z_start: float,
    start: float,
    stop: float,
    t_eval: NDArray[np.float64],
    rtol: float,
    atol: float,
) -> tuple[float, NDArray[np.float64]]:
    """Integrate over [start, stop]; return z(stop) and z at ``t_eval``."""
    out = np.empty(t_eval.size)
    if source.vanishes_on(start, stop):
        out[:] = separable_solution(z_start, alpha, delta, t_eval - start)
        return float(separable_solution(z_start, alpha, delta, stop - start)), out

    def rhs(t: float, z: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.array([source(t) - alpha * max(z[0], 0.0) ** delta])

    def hits_zero(_t: float, z: NDArray[np.float64]) -> float:
        return z[0]

    hits_zero.terminal = True  # type: ignore[attr-defined]
    hits_zero.direction = -1  # type: ignore[attr-defined]

    t, z = start, z_start
    filled = np.zeros(t_eval.size, dtype=bool)
    for _ in range(MAX_RESTARTS):
        if t >= stop:
            break
        sol = integrate.solve_ivp(
            rhs,
            (t, stop),
            [z],
            method="DOP853",
            rtol=rtol,
            atol=atol,
            dense_output=True,
            events=hits_zero if z > 0 else None,
        )
        if not sol.success:
            raise ComparisonIntegrationError(float(sol.t[-1]), sol.message)
        t_reached = float(sol.t[-1])
        window = (~filled) & (t_eval >= t) & (t_eval <= t_reached)
        if np.any(window):
            out[window] = np.maximum(sol.sol(t_eval[window])[0], 0.0)
            filled |= window
        if sol.status == 1:
            # Exact zero: the solution sits at 0 as long as the source is 0.
            t, z = t_reached, 0.0
            logger.debug("comparison solution reached zero at t=%.12g", t)
            if t_reached >= stop:
                break
            continue
        t, z = t_reached, max(float(sol.y[0, -1]), 0.0)
    else:
        raise ComparisonIntegrationError(t, "too many restarts at z = 0")
    out[~filled] = z
    return z, out


def solve_comparison(
    alpha: float,
    delta: float,
    g: Source | Callable[[float], float] | float,
    z0: float,
    t0: float,
    t_end: float,
    dt_out: float | None = None,
    *,
    t_eval: Sequence[float] | NDArray[np.float64] | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> ScalarTrajectory:
    """Solve z' + alpha z^delta = g from z(t0) = z0 up to ``t_end``.

    Output is sampled every ``dt_out`` (t_end always included) or at the
    explicit ``t_eval`` times.
    """
    if not alpha > 0 or not delta > 0:
        msg = f"alpha and delta must be positive, got {alpha!r}, {delta!r}"
        raise ValueError(msg)
    if z0 < 0:
        msg = f"z0 must be nonnegative, got {z0!r}"
        raise ValueError(msg)
    if t_end < t0:
        msg = f"t_end={t_end!r} precedes t0={t0!r}"
        raise ValueError(msg)
    if t_eval is not None:
        times = np.asarray(t_eval, dtype=float)
        if times.size == 0 or times[0] < t0 or times[-1] > t_end:
            msg = "t_eval must be nonempty and lie inside [t0, t_end]"
            raise ValueError(msg)
    elif dt_out is not None and dt_out > 0:
        times = _output_times(t0, t_end, dt_out)
    else:
        msg = "solve_comparison needs dt_out > 0 or t_eval"
        raise ValueError(msg)
    source = as_source(g)
    cuts = sorted({t0, t_end, *(b for b in source.breakpoints if t0 < b < t_end)})
    for t in (*cuts, *times[:: max(1, times.size // 64)]):
        if source(float(t)) < 0:
            msg = f"source must be nonnegative, g({t!r}) = {source(float(t))!r}"
            raise ValueError(msg)
    values = np.empty(times.size)
    z = float(z0)
    values[times == t0] = z
    for start, stop in zip(cuts, cuts[1:]):
        in_segment = (times > start) & (times <= stop)
        z, segment_values = _integrate_segment(
            source, alpha, delta, z, start, stop, times[in_segment], rtol, atol
        )
        values[in_segment] = segment_values
    return ScalarTrajectory(times, values)


def _abs_difference_integral(
    g1: Source, g2: Source, s: float, t: float
) -> float:
    cuts = sorted(
        {s, t, *(b for b in (*g1.breakpoints, *g2.breakpoints) if s < b < t)}
    )
    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        value, _ = integrate.quad(
            lambda x: abs(g1(x) - g2(x)), lo, hi, epsabs=1e-13, epsrel=1e-12
        )
        total += value
    return total


def stability_gap(
    z1: ScalarTrajectory,
    z2: ScalarTrajectory,
    g1: Source | Callable[[float], float] | float,
    g2: Source | Callable[[float], float] | float,
    s: float,
    t: float,
) -> tuple[float, float]:
    """Both sides of |z1(t) - z2(t)| <= |z1(s) - z2(s)| + int_s^t |g1 - g2|."""
    if not s <= t:
        msg = f"need s <= t, got s={s!r}, t={t!r}"
        raise ValueError(msg)
    for traj in (z1, z2):
        if not (traj.covers(s) and traj.covers(t)):
            msg = (
                f"[{s!r}, {t!r}] is outside the trajectory range "
                f"[{traj.start!r}, {traj.stop!r}]"
            )
            raise ValueError(msg)
    lhs = abs(float(z1.at(t)) - float(z2.at(t)))
    rhs = abs(float(z1.at(s)) - float(z2.at(s))) + _abs_difference_integral(
        as_source(g1), as_source(g2), s, t
    )
    return lhs, rhs


def comparison_check(
    y: ScalarTrajectory,
    alpha: float,
    delta: float,
    g: Source | Callable[[float], float] | float,
    t_star: float,
    *,
    tol: float = 1e-8,
) -> bool:
    """True iff y stays below the solution started from y(t_star) at t_star.

    ``tol`` is relative to max(1, y(t_star)).
    """
    later = y.times[y.times >= t_star]
    if later.size == 0:
        return True
    y_star = float(y.at(t_star))
    eval_times = later if later[0] == t_star else np.concatenate(([t_star], later))
    z = solve_comparison(
        alpha, delta, g, y_star, t_star, float(eval_times[-1]), t_eval=eval_times
    )
    slack = tol * max(1.0, y_star)
    return bool(np.all(y.at(later) <= z.at(later) + slack))


@dataclass(frozen=True)
class YoungSplit:
    """Both sides of 2 f sqrt(y) <= g + alpha y^delta at one ``y``."""

    g: float
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        """rhs - lhs; nonnegative up to rounding."""
        return self.rhs - self.lhs


def young_split(alpha: float, delta: float, f_l2: float, y: float) -> YoungSplit:
    """Split the source term 2 f sqrt(y) into g + alpha y^delta, evaluated at ``y``.

    g = ((2 delta - 1)/delta) (alpha delta)^{-1/(2 delta - 1)} f^{2 delta/(2 delta - 1)}
    is the smallest constant that works for every y >= 0 (Young's inequality
    with exponents 2 delta and 2 delta/(2 delta - 1)).
    """
    if not delta > 0.5:
        msg = f"young_split needs delta > 1/2, got {delta!r}"
        raise ValueError(msg)
    if not alpha > 0:
        msg = f"alpha must be positive, got {alpha!r}"
        raise ValueError(msg)
    if f_l2 < 0 or y < 0:
        msg = f"f_l2 and y must be nonnegative, got {f_l2!r} and {y!r}"
        raise ValueError(msg)
    q = 2.0 * delta - 1.0
    g = (q / delta) * (alpha * delta) ** (-1.0 / q) * f_l2 ** (2.0 * delta / q)
    return YoungSplit(g=g, lhs=2.0 * f_l2 * math.sqrt(y), rhs=g + alpha * y**delta)
