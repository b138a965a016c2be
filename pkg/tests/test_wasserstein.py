import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinbar.errors import InsufficientDataError, MetricInvariantError
from steinbar.lib import wasserstein
from steinbar.lib.wasserstein import (
    decay_fit,
    w1_empirical_vs_exponential,
    w1_exact,
    w1_geometric_vs_exponential,
)

samples_strategy = st.lists(
    st.floats(min_value=0.0, max_value=20.0, allow_nan=False), min_size=1, max_size=50
)


def test_single_point_at_zero():
    # W1(delta_0, Exp(beta)) = E Y
    assert w1_exact([0.0], 2.0) == pytest.approx(0.5)


@pytest.mark.parametrize("a", [0.1, 0.5, 1.0, 3.0])
def test_single_point(a):
    beta = 1.5
    expected = a - 1.0 / beta + 2.0 * math.exp(-beta * a) / beta
    assert w1_exact([a], beta) == pytest.approx(expected)


def test_w1_input_validation():
    with pytest.raises(InsufficientDataError):
        w1_exact([], 1.0)
    with pytest.raises(ValueError):
        w1_exact([-0.1, 1.0], 1.0)
    with pytest.raises(ValueError):
        w1_exact([1.0], 0.0)


@settings(max_examples=100, deadline=None)
@given(samples=samples_strategy, beta=st.floats(min_value=0.1, max_value=10.0))
def test_w1_dominates_the_mean_gap(samples, beta):
    x = np.asarray(samples)
    assert w1_exact(x, beta) >= abs(x.mean() - 1.0 / beta) - 1e-9


@settings(max_examples=50, deadline=None)
@given(samples=samples_strategy, beta=st.floats(min_value=0.1, max_value=10.0))
def test_w1_ignores_sample_order(samples, beta):
    assert w1_exact(samples, beta) == pytest.approx(w1_exact(samples[::-1], beta), abs=1e-12)


def test_w1_of_exponential_samples_is_small():
    y = np.random.default_rng(3).exponential(0.5, size=100_000)
    assert w1_exact(y, 2.0) < 0.01


def test_dual_bound_violation_is_reported():
    with pytest.raises(MetricInvariantError):
        wasserstein._check_dual_bound(0.1, np.array([5.0, 5.0]), 1.0)


def test_w1_empirical_interval():
    y = np.random.default_rng(5).exponential(1.0, size=2_000)
    est = w1_empirical_vs_exponential(y, 1.0, resamples=50, seed=1)
    assert est.point == pytest.approx(w1_exact(y, 1.0))
    assert est.batches == 50
    assert est.std_error > 0
    again = w1_empirical_vs_exponential(y, 1.0, resamples=50, seed=1)
    assert again == est
    blocked = w1_empirical_vs_exponential(y, 1.0, resamples=50, block_size=20, seed=1)
    assert blocked.point == est.point


def _geometric_by_grid(rho: float, delta: float, beta: float) -> float:
    x = np.linspace(0.0, 80.0, 1_600_001)
    tail = rho ** (np.floor(x / delta) + 1.0)
    return float(np.trapezoid(np.abs(tail - np.exp(-beta * x)), x))


@pytest.mark.parametrize("rho", [0.5, 0.8])
def test_geometric_matches_a_grid_integral(rho):
    delta = 1.0 - rho
    beta = 2.0 / (rho + 1.0)
    exact = w1_geometric_vs_exponential(rho, delta, beta)
    assert exact == pytest.approx(_geometric_by_grid(rho, delta, beta), rel=1e-3)


def test_geometric_heavy_traffic_gap():
    # M/M/1: the scaled queue is a discretized exponential; W1 is close to delta / 2
    rho = 0.99
    delta = 1.0 - rho
    w1 = w1_geometric_vs_exponential(rho, delta, 2.0 / (1.0 + rho))
    assert w1 == pytest.approx(delta / 2.0, rel=0.05)
    with pytest.raises(ValueError):
        w1_geometric_vs_exponential(1.0, 0.0, 1.0)


def test_decay_fit_recovers_a_power_law():
    pairs = [(d, 2.0 * d) for d in (0.2, 0.1, 0.05, 0.02)]
    fit = decay_fit(pairs)
    assert fit.slope == pytest.approx(1.0)
    assert fit.intercept == pytest.approx(math.log(2.0))
    assert fit.points == 4


def test_decay_fit_validation():
    with pytest.raises(InsufficientDataError):
        decay_fit([(0.1, 0.1), (0.2, 0.2)])
    with pytest.raises(ValueError):
        decay_fit([(0.1, 0.1), (0.1, 0.2), (0.3, 0.3)])
    with pytest.raises(ValueError):
        decay_fit([(0.1, 0.0), (0.2, 0.2), (0.3, 0.3)])
