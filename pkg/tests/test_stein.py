import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinbar.errors import DegenerateDiffusionError
from steinbar.lib.bounds import diffusion_params
from steinbar.lib.stein import (
    PiecewiseLinear,
    check_factors,
    expected_h_monte_carlo,
    generator_apply,
    ode_residual,
    random_lipschitz,
    solve_poisson,
    stein_grid,
)
from steinbar.models import DiffusionParams1D, ExponentialClock, GG1Model


@pytest.fixture
def heavy_params():
    """M/M/1 at rho = 0.8: theta = 0.04, sigma2 = 0.072."""
    model = GG1Model(arrival=ExponentialClock(rate=0.8), service=ExponentialClock(rate=1.0))
    return diffusion_params(model)


def test_heavy_params(heavy_params):
    assert heavy_params.theta == pytest.approx(0.04)
    assert heavy_params.sigma2 == pytest.approx(0.072)
    assert heavy_params.beta == pytest.approx(10.0 / 9.0)


def test_piecewise_linear_validation():
    with pytest.raises(ValueError):
        PiecewiseLinear(0.0, (1.0,), (1.0,))
    with pytest.raises(ValueError):
        PiecewiseLinear(0.0, (2.0, 1.0), (1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        PiecewiseLinear(0.0, (0.0,), (1.0, 0.0))
    with pytest.raises(ValueError):
        PiecewiseLinear(0.0, (), (1.5,))


def test_capped():
    h = PiecewiseLinear.capped(2.0)
    assert h.h_id == "min(x,2)"
    assert [h(x) for x in (-1.0, 0.0, 1.5, 2.0, 7.0)] == [-1.0, 0.0, 1.5, 2.0, 2.0]
    assert h.derivative(1.0) == 1.0
    assert h.derivative(2.0) == 0.0
    assert h.integral(3.0) == pytest.approx(2.0 + 2.0)
    assert h.integral(-1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
def test_expected_exponential_closed_forms(beta):
    assert PiecewiseLinear.identity().expected_exponential(beta) == pytest.approx(1.0 / beta)
    assert PiecewiseLinear.constant(3.0).expected_exponential(beta) == pytest.approx(3.0)
    assert PiecewiseLinear.capped(2.0).expected_exponential(beta) == pytest.approx(
        (1.0 - math.exp(-2.0 * beta)) / beta
    )


def test_expected_h_monte_carlo_agrees():
    rng = np.random.default_rng(4)
    h = random_lipschitz(rng, pieces=5, span=6.0)
    mc = expected_h_monte_carlo(h, 1.3, n=400_000, seed=9)
    assert mc.within(h.expected_exponential(1.3), 5.0)


def test_random_lipschitz_is_reproducible():
    a = random_lipschitz(np.random.default_rng(1), h_id="random0")
    b = random_lipschitz(np.random.default_rng(1), h_id="random0")
    assert a == b
    assert all(abs(s) <= 1.0 for s in a.slopes)


def test_degenerate_diffusion_has_no_solution():
    params = DiffusionParams1D(theta=0.1, sigma2=0.0, delta=0.1)
    with pytest.raises(DegenerateDiffusionError):
        solve_poisson(PiecewiseLinear.capped(1.0), params)


def test_capped_solution_satisfies_the_ode(heavy_params):
    sol = solve_poisson(PiecewiseLinear.capped(2.0), heavy_params)
    grid = stein_grid(sol, points=500)
    assert 2.0 in grid
    assert ode_residual(sol, grid) < 1e-9
    assert sol.d1(0.0) == pytest.approx(0.0, abs=1e-10)
    assert sol.f(0.0) == pytest.approx(0.0, abs=1e-10)


def test_solution_derivatives_are_consistent(heavy_params):
    sol = solve_poisson(random_lipschitz(np.random.default_rng(3)), heavy_params)
    h = 1e-5
    for x in (0.3, 1.7, 4.2, 9.0):
        slope = (sol.f(x + h) - sol.f(x - h)) / (2 * h)
        assert slope == pytest.approx(sol.d1(x), rel=1e-5, abs=1e-5)
        curvature = (sol.d1(x + h) - sol.d1(x - h)) / (2 * h)
        assert curvature == pytest.approx(sol.d2(x), rel=1e-4, abs=1e-4)


def test_generator_recovers_the_right_hand_side(heavy_params):
    sol = solve_poisson(PiecewiseLinear.capped(2.0), heavy_params)
    fn = sol.as_test_function()
    assert fn.f_id == "stein[min(x,2)]"
    for x in (0.0, 0.5, 3.0, 10.0):
        assert generator_apply(heavy_params, fn, x) == pytest.approx(
            sol.expected - sol.h(x), abs=1e-9
        )


def test_capped_factors(heavy_params):
    sol = solve_poisson(PiecewiseLinear.capped(2.0), heavy_params)
    factors = check_factors(sol, stein_grid(sol, points=2000))
    assert factors.passed
    assert factors.sup_f2 <= 1.0 / 0.04 * (1 + 1e-9)
    assert factors.bound_f3 == pytest.approx(4.0 / 0.072)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1), rho=st.sampled_from([0.5, 0.8, 0.95]))
def test_random_factors_hold(seed, rho):
    model = GG1Model(arrival=ExponentialClock(rate=rho), service=ExponentialClock(rate=1.0))
    params = diffusion_params(model)
    sol = solve_poisson(random_lipschitz(np.random.default_rng(seed)), params)
    factors = check_factors(sol, stein_grid(sol, points=1000))
    assert factors.passed, factors
