import math
from typing import Callable

import numpy as np
from loguru import logger
from scipy import integrate, stats

from steinbar.errors import UnsupportedMomentError
from steinbar.models import (
    ClockSpec,
    DeterministicClock,
    ErlangClock,
    ExponentialClock,
    HyperExponentialClock,
    LogNormalClock,
    UniformClock,
)

BLOCK_SIZE = 4096
QUAD_TOLERANCE = 1e-8


class RandomStream:
    """Single-owner Philox stream, drawn in fixed-size blocks per clock law.

    The value of the k-th draw for a given law depends only on the seed and k.
    """

    def __init__(self, seed: int | np.random.SeedSequence, block_size: int = BLOCK_SIZE):
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        self.seed_sequence = seed
        self.block_size = block_size
        self.generator = np.random.Generator(np.random.Philox(seed))
        self._buffers: dict[ClockSpec, list[float]] = {}
        self._cursor: dict[ClockSpec, int] = {}
        self._uniforms: list[float] = []
        self._uniform_cursor = 0

    def draw(self, spec: ClockSpec) -> float:
        buf = self._buffers.get(spec)
        i = self._cursor.get(spec, 0)
        if buf is None or i >= len(buf):
            buf = _draw_block(spec, self.generator, self.block_size).tolist()
            self._buffers[spec] = buf
            i = 0
        self._cursor[spec] = i + 1
        return buf[i]

    def uniform(self) -> float:
        """A U[0, 1) variate, for routing tie-breaks."""
        if self._uniform_cursor >= len(self._uniforms):
            self._uniforms = self.generator.random(self.block_size).tolist()
            self._uniform_cursor = 0
        u = self._uniforms[self._uniform_cursor]
        self._uniform_cursor += 1
        return u


def spawn_streams(
    seed: int | np.random.SeedSequence, count: int
) -> list[RandomStream]:
    """Independent substreams derived from one seed."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [RandomStream(child) for child in seed.spawn(count)]


def replication_seeds(master_seed: int, replications: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master_seed).spawn(replications)


def _draw_block(spec: ClockSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    match spec:
        case ExponentialClock(rate=rate):
            return rng.exponential(1.0 / rate, size)
        case ErlangClock(k=k, rate=rate):
            return rng.gamma(k, 1.0 / rate, size)
        case HyperExponentialClock(probabilities=p, rates=rates):
            phase = rng.choice(len(rates), size=size, p=np.asarray(p))
            return rng.standard_exponential(size) / np.asarray(rates)[phase]
        case UniformClock(a=a, b=b):
            return rng.uniform(a, b, size)
        case LogNormalClock(location=loc, scale=scale):
            return rng.lognormal(loc, scale, size)
        case DeterministicClock(d=d):
            return np.full(size, d)
    raise TypeError(f"Unknown clock family: {spec!r}")


def sample(spec: ClockSpec, stream: RandomStream) -> float:
    return stream.draw(spec)


def moment(spec: ClockSpec, m: int) -> float:
    """Exact E X^m for m in {1, 2, 3}."""
    if m not in (1, 2, 3):
        raise UnsupportedMomentError(m)
    return spec.raw_moment(m)


def scv(spec: ClockSpec) -> float:
    return moment(spec, 2) / moment(spec, 1) ** 2 - 1.0


def density(spec: ClockSpec) -> Callable[[float], float]:
    match spec:
        case ExponentialClock(rate=rate):
            return stats.expon(scale=1.0 / rate).pdf
        case ErlangClock(k=k, rate=rate):
            return stats.gamma(a=k, scale=1.0 / rate).pdf
        case HyperExponentialClock(probabilities=p, rates=rates):
            phases = [(pi, stats.expon(scale=1.0 / r).pdf) for pi, r in zip(p, rates)]
            return lambda x: sum(pi * pdf(x) for pi, pdf in phases)
        case UniformClock(a=a, b=b):
            return stats.uniform(loc=a, scale=b - a).pdf
        case LogNormalClock(location=loc, scale=scale):
            return stats.lognorm(s=scale, scale=math.exp(loc)).pdf
    raise TypeError(f"{spec.label()} has no density")


def abs_centered_cubed(spec: ClockSpec) -> float:
    """E|1 - X/EX|^3."""
    match spec:
        case DeterministicClock():
            return 0.0
        case ExponentialClock():
            return 12.0 / math.e - 2.0
        case UniformClock(a=a, b=b):
            mean = spec.mean
            lo, hi = a / mean, b / mean
            return ((1.0 - lo) ** 4 + (hi - 1.0) ** 4) / (4.0 * (hi - lo))

    mean = spec.mean
    pdf = density(spec)

    def integrand(x: float) -> float:
        return abs(1.0 - x / mean) ** 3 * pdf(x)

    total = 0.0
    for lo, hi in ((0.0, mean), (mean, 50.0 * mean), (50.0 * mean, math.inf)):
        value, err = integrate.quad(integrand, lo, hi, epsrel=QUAD_TOLERANCE, limit=200)
        total += value
        if err > QUAD_TOLERANCE * max(abs(total), 1.0):
            logger.warning(
                f"abs_centered_cubed({spec.label()}) on [{lo}, {hi}]: quad error {err:.3g}"
            )
    return total


def scaled(spec: ClockSpec, factor: float) -> ClockSpec:
    """The law of factor * X, in the same family."""
    if factor <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    match spec:
        case ExponentialClock(rate=rate):
            update = {"rate": rate / factor}
        case ErlangClock(rate=rate):
            update = {"rate": rate / factor}
        case HyperExponentialClock(rates=rates):
            update = {"rates": tuple(r / factor for r in rates)}
        case UniformClock(a=a, b=b):
            update = {"a": a * factor, "b": b * factor}
        case LogNormalClock(location=loc):
            update = {"location": loc + math.log(factor)}
        case DeterministicClock(d=d):
            update = {"d": d * factor}
        case _:
            raise TypeError(f"Unknown clock family: {spec!r}")
    return spec.model_copy(update=update)


def with_mean(spec: ClockSpec, mean: float) -> ClockSpec:
    return scaled(spec, mean / spec.mean)


def hyperexponential_balanced(mean: float, scv_value: float) -> HyperExponentialClock:
    """Two-phase hyperexponential with balanced means p1/r1 = p2/r2."""
    if scv_value <= 1.0:
        raise ValueError(f"a hyperexponential needs scv > 1, got {scv_value}")
    p1 = 0.5 * (1.0 + math.sqrt((scv_value - 1.0) / (scv_value + 1.0)))
    p2 = 1.0 - p1
    return HyperExponentialClock(
        probabilities=(p1, p2), rates=(2.0 * p1 / mean, 2.0 * p2 / mean)
    )


def erlang_with_mean(k: int, mean: float) -> ErlangClock:
    return ErlangClock(k=k, rate=k / mean)
