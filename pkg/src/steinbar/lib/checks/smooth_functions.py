"""
Test functions with closed-form derivatives for the BAR checks.

Three shapes are used: ``ScalarTestFunction`` acts on a compensated queue
length, ``StateTestFunction`` on the full state (scaled total plus residual
clocks) and ``PlanarTestFunction`` on the tandem pair.
"""

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from steinbar.lib.sim.engine import scaled_total
from steinbar.models import ModelSpec, SystemState

Hessian = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class ScalarTestFunction:
    f_id: str
    f: Callable[[float], float]
    d1: Callable[[float], float]
    d2: Callable[[float], float]
    d3: Callable[[float], float]
    sup_f2: float
    sup_f3: float

    @property
    def extractable(self) -> bool:
        return math.isfinite(self.sup_f2) and math.isfinite(self.sup_f3)


@dataclass(frozen=True)
class StateTestFunction:
    """``clock_degree`` is the polynomial degree of f and its clock derivatives
    in the residual clocks, or None when they are not polynomials."""

    f_id: str
    f: Callable[[SystemState], float]
    d_ra: Callable[[SystemState], float]
    d_rs: Callable[[SystemState, int], float]
    clock_degree: int | None


@dataclass(frozen=True)
class PlanarTestFunction:
    f_id: str
    f: Callable[[float, float], float]
    grad: Callable[[float, float], tuple[float, float]]
    hess: Callable[[float, float], Hessian]


def _zero(*_) -> float:
    return 0.0


def _sech2(x: float) -> float:
    return 1.0 / math.cosh(x) ** 2 if abs(x) < 350.0 else 0.0


def _logcosh(x: float) -> float:
    a = abs(x)
    return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)


def scalar_library() -> list[ScalarTestFunction]:
    """Smooth functions of the compensated queue length."""
    return [
        ScalarTestFunction("const", lambda x: 1.0, _zero, _zero, _zero, 0.0, 0.0),
        ScalarTestFunction("linear", lambda x: x, lambda x: 1.0, _zero, _zero, 0.0, 0.0),
        ScalarTestFunction(
            "quadratic", lambda x: 0.5 * x * x, lambda x: x, lambda x: 1.0, _zero, 1.0, 0.0
        ),
        ScalarTestFunction(
            "cubic",
            lambda x: x**3 / 6.0,
            lambda x: 0.5 * x * x,
            lambda x: x,
            lambda x: 1.0,
            math.inf,
            1.0,
        ),
        ScalarTestFunction(
            "sin", math.sin, math.cos, lambda x: -math.sin(x), lambda x: -math.cos(x), 1.0, 1.0
        ),
        ScalarTestFunction(
            "logcosh",
            _logcosh,
            math.tanh,
            _sech2,
            lambda x: -2.0 * _sech2(x) * math.tanh(x),
            1.0,
            4.0 / (3.0 * math.sqrt(3.0)),
        ),
    ]


def state_library(model: ModelSpec) -> list[StateTestFunction]:
    """Functions of (x, r_a, r_s) for the full BAR; x is the scaled total."""

    def x(s: SystemState) -> float:
        return scaled_total(model, s.queues)

    def first_only(value: Callable[[SystemState], float]) -> Callable[[SystemState, int], float]:
        return lambda s, i: value(s) if i == 0 else 0.0

    return [
        StateTestFunction("r_a", lambda s: s.r_a, lambda s: 1.0, _zero, 1),
        StateTestFunction("x", x, _zero, _zero, 0),
        StateTestFunction(
            "r_a*r_s1",
            lambda s: s.r_a * s.r_s[0],
            lambda s: s.r_s[0],
            first_only(lambda s: s.r_a),
            2,
        ),
        StateTestFunction("r_a^2", lambda s: s.r_a * s.r_a, lambda s: 2.0 * s.r_a, _zero, 2),
        StateTestFunction("sum_r_s", lambda s: sum(s.r_s), _zero, lambda s, i: 1.0, 1),
        StateTestFunction("x*r_s1", lambda s: x(s) * s.r_s[0], _zero, first_only(x), 1),
        StateTestFunction("x^2", lambda s: x(s) ** 2, _zero, _zero, 0),
        StateTestFunction(
            "saturating",
            lambda s: math.tanh(x(s)) + math.exp(-s.r_a) + math.exp(-s.r_s[0]),
            lambda s: -math.exp(-s.r_a),
            first_only(lambda s: -math.exp(-s.r_s[0])),
            None,
        ),
    ]


def planar_library() -> list[PlanarTestFunction]:
    """Functions of the tandem pair (x1, x2)."""

    def logcosh_hess(x1: float, x2: float) -> Hessian:
        h = _sech2(x1 + x2)
        return ((h, h), (h, h))

    return [
        PlanarTestFunction(
            "const",
            lambda a, b: 1.0,
            lambda a, b: (0.0, 0.0),
            lambda a, b: ((0.0, 0.0), (0.0, 0.0)),
        ),
        PlanarTestFunction(
            "x1", lambda a, b: a, lambda a, b: (1.0, 0.0), lambda a, b: ((0.0, 0.0), (0.0, 0.0))
        ),
        PlanarTestFunction(
            "x2", lambda a, b: b, lambda a, b: (0.0, 1.0), lambda a, b: ((0.0, 0.0), (0.0, 0.0))
        ),
        PlanarTestFunction(
            "x1*x2", lambda a, b: a * b, lambda a, b: (b, a), lambda a, b: ((0.0, 1.0), (1.0, 0.0))
        ),
        PlanarTestFunction(
            "x1^2+x2^2",
            lambda a, b: a * a + b * b,
            lambda a, b: (2.0 * a, 2.0 * b),
            lambda a, b: ((2.0, 0.0), (0.0, 2.0)),
        ),
        PlanarTestFunction(
            "sin*cos",
            lambda a, b: math.sin(a) * math.cos(b),
            lambda a, b: (math.cos(a) * math.cos(b), -math.sin(a) * math.sin(b)),
            lambda a, b: (
                (-math.sin(a) * math.cos(b), -math.cos(a) * math.sin(b)),
                (-math.cos(a) * math.sin(b), -math.sin(a) * math.cos(b)),
            ),
        ),
        PlanarTestFunction(
            "logcosh(x1+x2)",
            lambda a, b: _logcosh(a + b),
            lambda a, b: (math.tanh(a + b), math.tanh(a + b)),
            logcosh_hess,
        ),
    ]


def finite_difference_errors(
    fn: ScalarTestFunction, points: Sequence[float], h: float = 1e-4
) -> list[float]:
    """Largest relative gap per point between each derivative and a central difference."""
    errors = []
    for x in points:
        worst = 0.0
        for lower, upper in ((fn.f, fn.d1), (fn.d1, fn.d2), (fn.d2, fn.d3)):
            numeric = (lower(x + h) - lower(x - h)) / (2.0 * h)
            exact = upper(x)
            worst = max(worst, abs(numeric - exact) / max(1.0, abs(exact)))
        errors.append(worst)
    return errors
