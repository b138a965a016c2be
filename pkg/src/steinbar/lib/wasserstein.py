"""
Wasserstein-1 distance to an exponential law.

W1(F, G) is the area between the two CDFs. Against G(x) = 1 - exp(-beta x)
and a step function F the area has a closed form on every step, so no grid
is involved.
"""

import math
from typing import Sequence

import numpy as np
from loguru import logger
from scipy import stats

from steinbar.errors import InsufficientDataError, MetricInvariantError
from steinbar.models import DecayFit, EstimateCI
from steinbar.utils.config import get_config

DUAL_TOLERANCE = 1e-9
GEOMETRIC_CHUNK = 4096


def _step_areas(a: np.ndarray, b: np.ndarray, gap: np.ndarray, beta: float) -> np.ndarray:
    """Integral over [a, b] of |exp(-beta x) - gap|, gap = 1 - F on the step.

    The integrand crosses zero once, at -log(gap)/beta.
    """
    with np.errstate(divide="ignore"):
        crossing = np.where(gap > 0, -np.log(gap) / beta, np.inf)
    c = np.clip(crossing, a, b)

    def primitive(x: np.ndarray) -> np.ndarray:
        return -np.exp(-beta * x) / beta - gap * x

    return (primitive(c) - primitive(a)) - (primitive(b) - primitive(c))


def w1_exact(samples: Sequence[float] | np.ndarray, beta: float) -> float:
    """W1 between the empirical law of nonnegative ``samples`` and Exponential(beta)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise InsufficientDataError("W1 needs at least one sample")
    if x[0] < 0:
        raise ValueError(f"samples must be nonnegative, got {x[0]}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    a = np.concatenate([[0.0], x[:-1]])
    gap = 1.0 - np.arange(n) / n
    finite = _step_areas(a, x, gap, beta).sum()
    return float(finite + math.exp(-beta * x[-1]) / beta)


def _check_dual_bound(w1: float, samples: np.ndarray, beta: float):
    """h(x) = x is 1-Lipschitz, so W1 >= |mean - 1/beta|."""
    gap = abs(float(samples.mean()) - 1.0 / beta)
    if w1 < gap - DUAL_TOLERANCE * max(1.0, gap):
        raise MetricInvariantError(f"W1 {w1:.12g} below its dual lower bound {gap:.12g}")


def _resample(rng: np.random.Generator, n: int, block_size: int) -> np.ndarray:
    if block_size <= 1:
        return rng.integers(0, n, size=n)
    blocks = math.ceil(n / block_size)
    starts = rng.integers(0, n - block_size + 1, size=blocks)
    return (starts[:, None] + np.arange(block_size)).ravel()[:n]


def w1_empirical_vs_exponential(
    samples: Sequence[float] | np.ndarray,
    beta: float,
    resamples: int | None = None,
    confidence: float | None = None,
    block_size: int | None = None,
    seed: int = 0,
) -> EstimateCI:
    """Exact W1 with a bootstrap interval; ``block_size`` > 1 uses moving blocks."""
    cfg = get_config("bootstrap")
    resamples = resamples or cfg["resamples"]
    confidence = confidence or cfg["confidence"]
    block_size = block_size or cfg["block_size"]
    data = np.asarray(samples, dtype=float)
    point = w1_exact(data, beta)
    _check_dual_bound(point, data, beta)

    n = len(data)
    block_size = min(block_size, n)
    rng = np.random.default_rng(seed)
    replicates = np.array(
        [w1_exact(data[_resample(rng, n, block_size)], beta) for _ in range(resamples)]
    )
    std_error = float(replicates.std(ddof=1)) if resamples > 1 else 0.0
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    logger.debug(
        f"W1 over {n} samples vs Exponential({beta:.6g}): {point:.6g} (se {std_error:.3g})"
    )
    return EstimateCI(
        point=point,
        half_width=float(z * std_error),
        std_error=std_error,
        batches=resamples,
        confidence=confidence,
    )


def w1_geometric_vs_exponential(
    rho: float, delta: float, beta: float, tolerance: float = 1e-12
) -> float:
    """Exact W1 between delta * Geometric_0(1 - rho) and Exponential(beta)."""
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    total = 0.0
    k0 = 0
    while True:
        k = np.arange(k0, k0 + GEOMETRIC_CHUNK, dtype=float)
        # P(delta * Q > x) = rho^(k+1) on [k delta, (k+1) delta)
        gap = rho ** (k + 1.0)
        total += float(_step_areas(k * delta, (k + 1.0) * delta, gap, beta).sum())
        k0 += GEOMETRIC_CHUNK
        edge = k0 * delta
        tail = rho ** (k0 + 1) * delta / (1.0 - rho) + math.exp(-beta * edge) / beta
        if tail < tolerance:
            return total


def decay_fit(pairs: Sequence[tuple[float, float]]) -> DecayFit:
    """Least-squares slope of log W1 against log delta."""
    if len(pairs) < 3:
        raise InsufficientDataError(f"decay fit needs at least 3 points, got {len(pairs)}")
    deltas = np.array([d for d, _ in pairs], dtype=float)
    values = np.array([w for _, w in pairs], dtype=float)
    if (deltas <= 0).any() or (values <= 0).any():
        raise ValueError("decay fit needs positive deltas and W1 values")
    if len(np.unique(deltas)) != len(deltas):
        raise ValueError(f"decay fit needs distinct deltas, got {deltas.tolist()}")
    fit = stats.linregress(np.log(deltas), np.log(values))
    result = DecayFit(
        slope=float(fit.slope),
        std_error=float(fit.stderr),
        intercept=float(fit.intercept),
        points=len(pairs),
    )
    logger.info(
        f"decay slope {result.slope:.4f} ± {result.std_error:.3g} over {len(pairs)} points"
    )
    return result
