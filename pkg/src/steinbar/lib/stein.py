"""
Poisson equation of the exponential distribution.

For a diffusion with parameters (theta, sigma2) and beta = 2*theta/sigma2,
``solve_poisson`` returns f_h solving

    -theta f'(x) + sigma2/2 f''(x) = E h(Y) - h(x),    f'(0) = 0,

with Y ~ Exponential(beta), for piecewise-linear h. Every derivative has a
closed form, so the Stein factors and the ODE residual can be checked on a
grid without numerical differentiation.
"""

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel

from steinbar.errors import DegenerateDiffusionError
from steinbar.lib.checks.smooth_functions import PlanarTestFunction, ScalarTestFunction
from steinbar.models import DiffusionParams1D, EstimateCI, TandemRBMParams
from steinbar.utils.config import get_config


@dataclass(frozen=True)
class PiecewiseLinear:
    """h(0) = ``value0``; ``slopes[j]`` holds between consecutive breakpoints,
    ``slopes[0]`` also for x < 0."""

    value0: float
    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    h_id: str = "h"
    intercepts: tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.slopes) != len(self.breakpoints) + 1:
            raise ValueError(
                f"{len(self.breakpoints)} breakpoints need {len(self.breakpoints) + 1} slopes"
            )
        if any(b <= 0 for b in self.breakpoints) or list(self.breakpoints) != sorted(
            set(self.breakpoints)
        ):
            raise ValueError(f"breakpoints must be positive and increasing: {self.breakpoints}")
        if any(abs(s) > 1.0 for s in self.slopes):
            raise ValueError(f"slopes must lie in [-1, 1]: {self.slopes}")
        intercepts = [self.value0]
        for b, s_prev, s_next in zip(self.breakpoints, self.slopes, self.slopes[1:]):
            intercepts.append(intercepts[-1] + (s_prev - s_next) * b)
        object.__setattr__(self, "intercepts", tuple(intercepts))

    @classmethod
    def identity(cls) -> "PiecewiseLinear":
        return cls(0.0, (), (1.0,), h_id="x")

    @classmethod
    def constant(cls, c: float) -> "PiecewiseLinear":
        return cls(c, (), (0.0,), h_id=f"const({c:g})")

    @classmethod
    def capped(cls, c: float) -> "PiecewiseLinear":
        """min(x, c)."""
        return cls(0.0, (c,), (1.0, 0.0), h_id=f"min(x,{c:g})")

    def pieces(self) -> list[tuple[float, float, float, float]]:
        """(left, right, intercept, slope) per linear piece; the first starts at -inf."""
        edges = (-math.inf, *self.breakpoints, math.inf)
        return [
            (edges[j], edges[j + 1], self.intercepts[j], self.slopes[j])
            for j in range(len(self.slopes))
        ]

    def _piece(self, x: float) -> int:
        j = 0
        while j < len(self.breakpoints) and x >= self.breakpoints[j]:
            j += 1
        return j

    def __call__(self, x: float) -> float:
        j = self._piece(x)
        return self.intercepts[j] + self.slopes[j] * x

    def derivative(self, x: float) -> float:
        """Right derivative."""
        return self.slopes[self._piece(x)]

    def integral(self, x: float) -> float:
        """Integral of h from 0 to x."""
        if x < 0:
            return self.value0 * x + 0.5 * self.slopes[0] * x * x
        total = 0.0
        for left, right, a, s in self.pieces():
            lo, hi = max(left, 0.0), min(right, x)
            if hi > lo:
                total += a * (hi - lo) + 0.5 * s * (hi * hi - lo * lo)
        return total

    def expected_exponential(self, beta: float) -> float:
        """E h(Y) for Y ~ Exponential(beta)."""
        total = 0.0
        for left, right, a, s in self.pieces():
            if right <= 0:
                continue
            lo = max(left, 0.0)
            total += (a + s * lo + s / beta) * math.exp(-beta * lo)
            if math.isfinite(right):
                total -= (a + s * right + s / beta) * math.exp(-beta * right)
        return total


def random_lipschitz(
    rng: np.random.Generator, pieces: int = 4, span: float = 10.0, h_id: str | None = None
) -> PiecewiseLinear:
    """A random piecewise-linear h with slopes in [-1, 1] and breakpoints in (0, span)."""
    breakpoints = np.sort(rng.uniform(0.0, span, size=pieces - 1))
    breakpoints = tuple(float(b) for b in np.unique(breakpoints) if b > 0)
    slopes = tuple(float(s) for s in rng.uniform(-1.0, 1.0, size=len(breakpoints) + 1))
    value0 = float(rng.normal())
    return PiecewiseLinear(value0, breakpoints, slopes, h_id=h_id or f"random{pieces}")


@dataclass(frozen=True)
class SteinSolution:
    h: PiecewiseLinear
    params: DiffusionParams1D
    expected: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "expected", self.h.expected_exponential(self.params.beta))

    @property
    def theta(self) -> float:
        return self.params.theta

    @property
    def sigma2(self) -> float:
        return self.params.sigma2

    def d1(self, x: float) -> float:
        beta = self.params.beta
        c = self.expected
        total = 0.0
        for left, right, a, s in self.h.pieces():
            if right <= x:
                continue
            lo = max(left, x)
            # e^{beta x} times the primitive of e^{-beta t}(c - a - s t)
            total += math.exp(-beta * (lo - x)) * ((a - c + s * lo) / beta + s / beta**2)
            if math.isfinite(right):
                total -= math.exp(-beta * (right - x)) * ((a - c + s * right) / beta + s / beta**2)
        return 2.0 / self.sigma2 * total

    def d2(self, x: float) -> float:
        return self.params.beta * self.d1(x) + 2.0 / self.sigma2 * (self.expected - self.h(x))

    def d3(self, x: float) -> float:
        return self.params.beta * self.d2(x) - 2.0 / self.sigma2 * self.h.derivative(x)

    def f(self, x: float) -> float:
        """Normalized by f(0) = 0."""
        c = self.expected
        return (self.d1(x) - 2.0 / self.sigma2 * (c * x - self.h.integral(x))) / self.params.beta

    def as_test_function(self) -> ScalarTestFunction:
        return ScalarTestFunction(
            f_id=f"stein[{self.h.h_id}]",
            f=self.f,
            d1=self.d1,
            d2=self.d2,
            d3=self.d3,
            sup_f2=1.0 / self.theta,
            sup_f3=4.0 / self.sigma2,
        )


def solve_poisson(h: PiecewiseLinear, params: DiffusionParams1D) -> SteinSolution:
    if params.degenerate:
        raise DegenerateDiffusionError(
            f"sigma2 = 0 (theta={params.theta:.6g}): no exponential approximation"
        )
    return SteinSolution(h, params)


def stein_grid(
    sol: SteinSolution, points: int | None = None, span: float | None = None
) -> np.ndarray:
    """[0, span/beta] with ``points`` nodes plus the breakpoints of h."""
    cfg = get_config("stein")
    points = points or cfg["grid_points"]
    span = span or cfg["grid_span"]
    grid = np.linspace(0.0, span / sol.params.beta, points)
    return np.unique(np.concatenate([grid, np.asarray(sol.h.breakpoints, dtype=float)]))


class SteinFactors(BaseModel):
    h_id: str
    theta: float
    sigma2: float
    sup_f2: float
    bound_f2: float
    sup_f3: float
    bound_f3: float
    ode_residual: float
    fprime0: float
    passed: bool


def stein_factors(sol: SteinSolution, grid: Sequence[float] | None = None) -> tuple[float, float]:
    """Grid sup norms of f'' and f'''."""
    grid = stein_grid(sol) if grid is None else grid
    sup_f2 = max(abs(sol.d2(float(x))) for x in grid)
    sup_f3 = max(abs(sol.d3(float(x))) for x in grid)
    return sup_f2, sup_f3


def ode_residual(sol: SteinSolution, grid: Sequence[float] | None = None) -> float:
    grid = stein_grid(sol) if grid is None else grid
    c = sol.expected
    return max(
        abs(-sol.theta * sol.d1(x) + 0.5 * sol.sigma2 * sol.d2(x) - (c - sol.h(x)))
        for x in map(float, grid)
    )


def check_factors(sol: SteinSolution, grid: Sequence[float] | None = None) -> SteinFactors:
    """Grid sup norms against 1/theta and 4/sigma2, with the ODE residual and f'(0)."""
    slack = get_config("stein")["slack"]
    grid = stein_grid(sol) if grid is None else grid
    sup_f2, sup_f3 = stein_factors(sol, grid)
    bound_f2, bound_f3 = 1.0 / sol.theta, 4.0 / sol.sigma2
    residual = ode_residual(sol, grid)
    h_sup = max(abs(sol.h(float(x))) for x in grid)
    scale = max(1.0, h_sup / sol.theta)
    fprime0 = sol.d1(0.0)
    passed = (
        sup_f2 <= bound_f2 * (1.0 + slack)
        and sup_f3 <= bound_f3 * (1.0 + slack)
        and residual <= slack * scale
        and abs(fprime0) <= 1e-12 * scale
    )
    result = SteinFactors(
        h_id=sol.h.h_id,
        theta=sol.theta,
        sigma2=sol.sigma2,
        sup_f2=sup_f2,
        bound_f2=bound_f2,
        sup_f3=sup_f3,
        bound_f3=bound_f3,
        ode_residual=residual,
        fprime0=fprime0,
        passed=passed,
    )
    if not passed:
        logger.warning(f"Stein factors for {sol.h.h_id} fail: {result}")
    return result


def expected_h_monte_carlo(
    h: PiecewiseLinear, beta: float, n: int = 1_000_000, seed: int = 0
) -> EstimateCI:
    """Sample mean of h(Y) with a normal 99% interval."""
    y = np.random.default_rng(seed).exponential(1.0 / beta, size=n)
    values = np.interp(
        y,
        np.concatenate([[0.0], np.asarray(h.breakpoints)]),
        [h(0.0), *(h(b) for b in h.breakpoints)],
    )
    if h.breakpoints:
        tail = y > h.breakpoints[-1]
        values[tail] = h.intercepts[-1] + h.slopes[-1] * y[tail]
    else:
        values = h.value0 + h.slopes[0] * y
    std_error = float(values.std(ddof=1) / math.sqrt(n))
    return EstimateCI(
        point=float(values.mean()), half_width=2.576 * std_error, std_error=std_error, batches=n
    )


def generator_apply(
    params: DiffusionParams1D | TandemRBMParams,
    f: ScalarTestFunction | PlanarTestFunction,
    x: float | tuple[float, float],
) -> float:
    """G_Y f(x) for the one-dimensional reflected diffusion or the tandem expansion."""
    if isinstance(params, DiffusionParams1D):
        return -params.theta * f.d1(x) + 0.5 * params.sigma2 * f.d2(x) + params.theta * f.d1(0.0)

    x1, x2 = x
    (d1, d2), (m1, m2) = params.delta_diag, params.mu
    s = params.sigma
    g1, g2 = f.grad(x1, x2)
    (h11, h12), (_, h22) = f.hess(x1, x2)
    value = (
        -m1 * d1 * d1 * g1
        + d2 * (m1 * d1 - m2 * d2) * g2
        + 0.5 * d1 * d1 * s[0][0] * h11
        + d1 * d2 * s[0][1] * h12
        + 0.5 * d2 * d2 * s[1][1] * h22
    )
    if x1 == 0:
        value += m1 * (d1 * g1 - d2 * g2)
    if x2 == 0:
        value += m2 * d2 * g2
    return value
