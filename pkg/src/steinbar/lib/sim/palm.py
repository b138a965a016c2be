from dataclasses import dataclass
from functools import reduce
from typing import Callable, Iterable, Sequence

import numpy as np
from loguru import logger
from scipy import stats

from steinbar.errors import InsufficientDataError
from steinbar.lib.sim.engine import ARRIVALS, EXITS, departures, scaled_total
from steinbar.lib.sim.probes import TimeProbe, WindowProbe
from steinbar.models import (
    EstimateCI,
    GG1Model,
    IdentityReport,
    IdentityRow,
    JSQModel,
    ModelSpec,
    PalmAccumulators,
    SystemState,
)
from steinbar.utils.config import get_config


@dataclass(frozen=True)
class RatioSeries:
    """Per-batch numerators and denominators of a ratio estimator."""

    num: np.ndarray
    den: np.ndarray

    @property
    def point(self) -> float:
        return float(self.num.sum() / self.den.sum())

    @property
    def batch_values(self) -> np.ndarray:
        return self.num / self.den

    def scaled(self, c: float) -> "RatioSeries":
        return RatioSeries(c * self.num, self.den)


def _series(values: Sequence[float], acc: PalmAccumulators) -> RatioSeries:
    return RatioSeries(np.asarray(values, dtype=float), np.asarray(acc.horizon_batches))


def _zeros(acc: PalmAccumulators) -> list[float]:
    return [0.0] * acc.batches


def time_series(acc: PalmAccumulators, key: str) -> RatioSeries:
    return _series(acc.time_sums[key], acc)


def event_series(acc: PalmAccumulators, key: str, process: str) -> RatioSeries:
    return _series(acc.event_sums[f"{process}:{key}"], acc)


def rate_series(acc: PalmAccumulators, process: str) -> RatioSeries:
    return _series(acc.event_counts.get(process, _zeros(acc)), acc)


def window_series(acc: PalmAccumulators, key: str, process: str) -> RatioSeries:
    return _series(acc.window_sums[f"{process}:{key}"], acc)


def _interval(
    point: float, values: np.ndarray, confidence: float
) -> EstimateCI:
    batches = len(values)
    if batches < 2:
        raise InsufficientDataError(f"need at least 2 usable batches, got {batches}")
    std_error = float(np.std(values, ddof=1) / np.sqrt(batches))
    t = stats.t.ppf(0.5 + confidence / 2.0, batches - 1)
    return EstimateCI(
        point=point,
        half_width=float(t * std_error),
        std_error=std_error,
        batches=batches,
        confidence=confidence,
    )


def _confidence(confidence: float | None) -> float:
    return confidence if confidence is not None else get_config("estimation")["confidence"]


def ratio_estimate(
    num: RatioSeries | Sequence[float],
    den: RatioSeries | Sequence[float],
    confidence: float | None = None,
) -> EstimateCI:
    """E(num)/E(den) as a ratio of sums, with the spread of per-batch ratios.

    Batches with a zero denominator are skipped.
    """
    n = num.num if isinstance(num, RatioSeries) else np.asarray(num, dtype=float)
    d = den.num if isinstance(den, RatioSeries) else np.asarray(den, dtype=float)
    usable = d != 0
    if not usable.all():
        logger.warning(f"ratio estimate: {int((~usable).sum())} batches with zero denominator")
    if usable.sum() < 2:
        raise InsufficientDataError("ratio estimate: fewer than 2 batches with mass")
    point = float(n[usable].sum() / d[usable].sum())
    return _interval(point, n[usable] / d[usable], _confidence(confidence))


def estimate(series: RatioSeries, confidence: float | None = None) -> EstimateCI:
    usable = series.den > 0
    return _interval(
        float(series.num[usable].sum() / series.den[usable].sum()),
        series.batch_values[usable],
        _confidence(confidence),
    )


def combine(
    terms: Iterable[tuple[float, RatioSeries]], confidence: float | None = None
) -> EstimateCI:
    """Linear combination sum(c * term), with a batch-wise standard error."""
    terms = list(terms)
    if not terms:
        raise InsufficientDataError("nothing to combine")
    point = sum(c * s.point for c, s in terms)
    values = sum(c * s.batch_values for c, s in terms)
    return _interval(float(point), np.asarray(values), _confidence(confidence))


def batch_means_ci(
    values: Sequence[float], batches: int | None = None, confidence: float | None = None
) -> EstimateCI:
    """Batch-means CI for a raw series; a trailing remainder is dropped."""
    data = np.asarray(values, dtype=float)
    batches = batches or get_config("estimation")["batches"]
    size = len(data) // batches
    if size == 0:
        raise InsufficientDataError(f"{len(data)} values cannot fill {batches} batches")
    means = data[: size * batches].reshape(batches, size).mean(axis=1)
    return _interval(float(means.mean()), means, _confidence(confidence))


def time_average(acc: PalmAccumulators, key: str, confidence: float | None = None) -> EstimateCI:
    """E f(Z) for the TimeProbe ``key``."""
    return estimate(time_series(acc, key), confidence)


def event_average(
    acc: PalmAccumulators, key: str, process: str, confidence: float | None = None
) -> EstimateCI:
    """E of the integral of g over [0, 1] against dN, as jump sum per unit time."""
    return estimate(event_series(acc, key, process), confidence)


def event_rate(acc: PalmAccumulators, process: str, confidence: float | None = None) -> EstimateCI:
    return estimate(rate_series(acc, process), confidence)


def palm_window_integral(
    acc: PalmAccumulators, key: str, process: str, confidence: float | None = None
) -> EstimateCI:
    return estimate(window_series(acc, key, process), confidence)


def merge(a: PalmAccumulators, b: PalmAccumulators) -> PalmAccumulators:
    """Add batch partials elementwise."""
    if a.model_id != b.model_id or a.batches != b.batches:
        raise ValueError(
            f"cannot merge {a.model_id}/{a.batches} batches with {b.model_id}/{b.batches}"
        )

    def add(x: dict, y: dict) -> dict:
        return {
            key: [u + v for u, v in zip(x.get(key, [0] * a.batches), y.get(key, [0] * a.batches))]
            for key in sorted(set(x) | set(y))
        }

    def add_scalar(x: dict, y: dict) -> dict:
        return {key: x.get(key, 0) + y.get(key, 0) for key in sorted(set(x) | set(y))}

    def add_list(x: list, y: list) -> list:
        return [u + v for u, v in zip(x, y)]

    return PalmAccumulators(
        model_id=a.model_id,
        batches=a.batches,
        horizon_batches=add_list(a.horizon_batches, b.horizon_batches),
        time_sums=add(a.time_sums, b.time_sums),
        event_sums=add(a.event_sums, b.event_sums),
        event_counts=add(a.event_counts, b.event_counts),
        window_sums=add(a.window_sums, b.window_sums),
        dropped_windows=add_scalar(a.dropped_windows, b.dropped_windows),
        dropped_window_mass=add_scalar(a.dropped_window_mass, b.dropped_window_mass),
        idle_count=add_list(a.idle_count, b.idle_count),
        idle_sum=add_list(a.idle_sum, b.idle_sum),
        idle_sumsq=add_list(a.idle_sumsq, b.idle_sumsq),
        events=a.events + b.events,
        burn_in_events=a.burn_in_events + b.burn_in_events,
        regenerations=a.regenerations + b.regenerations,
        ties=a.ties + b.ties,
        tie_risk=a.tie_risk or b.tie_risk,
        replications=a.replications + b.replications,
    )


def merge_all(accumulators: Sequence[PalmAccumulators]) -> PalmAccumulators:
    return reduce(merge, accumulators)


# ---------------------------------------------------------------------------
# Palm inversion: time average of f(X) against window integrals of f(X)
# ---------------------------------------------------------------------------

PALM_FUNCTIONS: dict[str, Callable[[float], float]] = {
    "one": lambda x: 1.0,
    "x": lambda x: x,
    "x2": lambda x: x * x,
    "min_x_5": lambda x: min(x, 5.0),
}


def window_processes(model: ModelSpec) -> tuple[str, ...]:
    """Processes whose inter-event windows tile the time axis for the Palm checks."""
    match model:
        case GG1Model():
            return (ARRIVALS, EXITS)
        case JSQModel():
            return (ARRIVALS, *(departures(i) for i in range(model.n)))
        case _:
            return (ARRIVALS, departures(0), EXITS)


def palm_inversion_probes(
    model: ModelSpec, names: Iterable[str] = tuple(PALM_FUNCTIONS)
) -> list[TimeProbe | WindowProbe]:
    probes: list[TimeProbe | WindowProbe] = []
    for name in names:
        f = PALM_FUNCTIONS[name]

        def of_state(state: SystemState, f=f) -> float:
            return f(scaled_total(model, state.queues))

        probes.append(TimeProbe(f"palm:{name}", of_state))
        for process in window_processes(model):
            probes.append(
                WindowProbe(f"palm:{name}", process, lambda _, state, g=of_state: g(state))
            )
    return probes


def palm_inversion_check(
    model: ModelSpec,
    acc: PalmAccumulators,
    names: Iterable[str] = tuple(PALM_FUNCTIONS),
    se_multiple: float | None = None,
) -> IdentityReport:
    """Rows ``palm[name]:process`` with time average minus window integral, target 0."""
    se_multiple = se_multiple or get_config("estimation")["se_multiple"]
    rows = []
    for name in names:
        key = f"palm:{name}"
        for process in window_processes(model):
            diff = combine([(1.0, time_series(acc, key)), (-1.0, window_series(acc, key, process))])
            rows.append(
                IdentityRow(
                    identity_id=f"palm[{name}]:{process}",
                    estimate=diff.point,
                    half_width=diff.half_width,
                    std_error=diff.std_error,
                    target=0.0,
                    passed=diff.within(0.0, se_multiple),
                )
            )
    report = IdentityReport(model_id=model.model_id, se_multiple=se_multiple, rows=rows)
    logger.info(
        f"{model.model_id}: Palm inversion {sum(r.passed for r in rows)}/{len(rows)} rows pass"
    )
    return report
