"""
Euler scheme for the two-dimensional SRBM Y~ = xi + R I on the quadrant.

R is lower triangular, so the Skorokhod problem decouples: station 1 is a
one-dimensional Lindley recursion, and station 2 is one as well once its
increments include R[1][0] dI_1. Both recursions are evaluated in vectorized
chunks with running maxima, which equals the step-by-step projection.
"""

import math
from typing import Iterator

import numpy as np
from loguru import logger

from steinbar.models import SRBMPath, TandemRBMParams
from steinbar.utils.config import get_config

PSD_TOLERANCE = 1e-12


def covariance_factor(sigma) -> np.ndarray:
    """L with L L^T = sigma: Cholesky, or a symmetric square root when sigma is singular."""
    s = np.asarray(sigma, dtype=float)
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(s)
        if w.min() < -PSD_TOLERANCE * max(1.0, abs(w).max()):
            raise ValueError(f"Sigma is not positive semidefinite (eigenvalues {w.tolist()})")
        return v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _lindley(start: float, increments: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Reflected path start + cumsum(increments) + scale * I and the increments of I."""
    free = start + np.cumsum(increments)
    pushed = np.maximum.accumulate(np.maximum(-free, 0.0)) / scale
    d_reg = np.diff(pushed, prepend=0.0)
    return free + scale * pushed, d_reg


def _reflected_chunks(
    params: TandemRBMParams,
    dt: float,
    steps: int,
    seed: int,
    start: tuple[float, float],
    chunk_steps: int,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    r = np.asarray(params.reflection, dtype=float)
    if r[0, 1] != 0.0:
        raise ValueError(f"reflection matrix must be lower triangular, got {params.reflection}")
    factor = covariance_factor(params.sigma)
    drift = np.asarray(params.drift) * dt
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    y = np.asarray(start, dtype=float)
    done = 0
    while done < steps:
        m = min(chunk_steps, steps - done)
        noise = rng.standard_normal((m, 2)) @ factor.T * math.sqrt(dt)
        inc = drift + noise
        y1, d1 = _lindley(y[0], inc[:, 0], r[0, 0])
        y2, d2 = _lindley(y[1], inc[:, 1] + r[1, 0] * d1, r[1, 1])
        states = np.column_stack([y1, y2])
        yield states, np.column_stack([d1, d2])
        y = states[-1]
        done += m


def srbm_simulate(
    params: TandemRBMParams,
    dt: float | None = None,
    horizon: float = 1.0,
    seed: int = 0,
    start: tuple[float, float] = (0.0, 0.0),
) -> SRBMPath:
    cfg = get_config("rbm")
    dt = dt or cfg["dt"]
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    steps = round(horizon / dt)
    states = [np.asarray([start], dtype=float)]
    d_reg = [np.zeros((0, 2))]
    for chunk, d in _reflected_chunks(params, dt, steps, seed, start, cfg["chunk_steps"]):
        states.append(chunk)
        d_reg.append(d)
    path = SRBMPath(
        dt=dt,
        horizon=steps * dt,
        y_tilde=np.vstack(states),
        d_regulator=np.vstack(d_reg),
        delta_diag=params.delta_diag,
    )
    logger.debug(f"SRBM path: {steps} steps of {dt:g}, {params.drift_mode.value} drift")
    return path


def srbm_stationary_samples(
    params: TandemRBMParams,
    dt: float | None = None,
    burn_in: float = 100.0,
    count: int = 1000,
    spacing: float = 1.0,
    seed: int = 0,
) -> np.ndarray:
    """Scaled states Y every ``spacing`` time units after ``burn_in``, shape (count, 2)."""
    if count == 0:
        return np.zeros((0, 2))
    cfg = get_config("rbm")
    dt = dt or cfg["dt"]
    skip = round(burn_in / dt)
    stride = max(1, round(spacing / dt))
    steps = skip + count * stride
    picks = []
    offset = 0
    for chunk, _ in _reflected_chunks(params, dt, steps, seed, (0.0, 0.0), cfg["chunk_steps"]):
        # global step index of chunk row j is offset + j + 1
        first = skip + stride - offset - 1
        if first < 0:
            first %= stride
        picks.append(chunk[first::stride])
        offset += len(chunk)
    samples = np.vstack(picks)[:count] * np.asarray(params.delta_diag)
    logger.debug(f"SRBM: {len(samples)} samples after burn-in {burn_in:g}, spacing {spacing:g}")
    return samples


def regulator_rate(path: SRBMPath) -> tuple[float, float]:
    """Long-run dI/dt per station."""
    total = path.d_regulator.sum(axis=0) / path.horizon
    return float(total[0]), float(total[1])


def stationary_mean(samples: np.ndarray) -> tuple[float, float]:
    mean = np.asarray(samples).mean(axis=0)
    return float(mean[0]), float(mean[1])


def check_path(path: SRBMPath, tolerance: float = 1e-12) -> bool:
    """Nonnegativity, complementarity of dI and a nondecreasing regulator."""
    y = path.y_tilde[1:]
    nonnegative = (path.y_tilde >= -tolerance).all()
    complementary = (np.abs(y[path.d_regulator > 0]) <= tolerance).all()
    nondecreasing = (path.d_regulator >= 0).all()
    return bool(nonnegative and complementary and nondecreasing)
