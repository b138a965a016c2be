"""
Path functionals fed by the simulator.

A run is a sequence of inter-event segments (queues constant, busy clocks
decreasing at unit rate) and events. ``TimeProbe`` integrates a function of
the state over every segment, ``EventProbe`` sums a value at every event of a
counting process, and ``WindowProbe`` integrates over the interval from each
event of its process to the next one.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable

import numpy as np
from loguru import logger

from steinbar.errors import NonFiniteProbeError
from steinbar.models import EventRecord, PalmAccumulators, SystemState


@dataclass(frozen=True)
class TimeProbe:
    """``clock_degree``: 0 if ``fn`` only reads queues or idle clocks, the
    polynomial degree in the busy clocks, or None for anything else.
    ``integral(end_state, dt)`` overrides quadrature with an exact segment integral.
    """

    key: str
    fn: Callable[[SystemState], float]
    clock_degree: int | None = 0
    integral: Callable[[SystemState, float], float] | None = None


@dataclass(frozen=True)
class EventProbe:
    key: str
    process: str
    fn: Callable[[EventRecord, SystemState], float]


def _no_context(event: EventRecord, after: SystemState) -> None:
    return None


def _window_integral(context: Any, integral: float, length: float) -> float:
    return integral


@dataclass(frozen=True)
class WindowProbe:
    """Integral over the window that starts at an event of ``process`` and ends
    at the next one. ``integrand(context, state)`` may only read queue lengths.
    """

    key: str
    process: str
    integrand: Callable[[Any, SystemState], float]
    open: Callable[[EventRecord, SystemState], Any] = _no_context
    close: Callable[[Any, float, float], float] = _window_integral


Probe = TimeProbe | EventProbe | WindowProbe


def rewind(end: SystemState, u: float, busy: tuple[bool, ...]) -> SystemState:
    """The state ``u`` time units before ``end`` on the same segment."""
    return SystemState(
        end.queues,
        end.r_a + u,
        [r + u if b else r for r, b in zip(end.r_s, busy)],
        end.clock_time - u,
    )


def abs_linear_integral(a: float, c: float, length: float) -> float:
    """Exact integral of |a + c*u| for u in [0, length]."""
    b = a + c * length
    if a * b >= 0:
        return 0.5 * abs(a + b) * length
    root = -a / c
    return 0.5 * (abs(a) * root + abs(b) * (length - root))


@lru_cache(maxsize=32)
def gauss_legendre(points: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(points)
    return tuple(((x + 1.0) / 2.0).tolist()), tuple((w / 2.0).tolist())


def _quadrature(
    fn: Callable[[SystemState], float],
    end: SystemState,
    dt: float,
    busy: tuple[bool, ...],
    points: int,
) -> float:
    nodes, weights = gauss_legendre(points)
    return dt * sum(w * fn(rewind(end, dt * x, busy)) for x, w in zip(nodes, weights))


def segment_integral(
    probe: TimeProbe,
    end: SystemState,
    dt: float,
    busy: tuple[bool, ...],
    quadrature_nodes: int = 5,
    max_subinterval: float = 1.0,
) -> float:
    if dt == 0.0:
        return 0.0
    if probe.integral is not None:
        return probe.integral(end, dt)
    if probe.clock_degree == 0:
        return probe.fn(end) * dt
    if probe.clock_degree is not None:
        return _quadrature(probe.fn, end, dt, busy, probe.clock_degree // 2 + 1)
    pieces = max(1, math.ceil(dt / max_subinterval))
    h = dt / pieces
    total = 0.0
    for j in range(pieces):
        piece_end = rewind(end, j * h, busy) if j else end
        total += _quadrature(probe.fn, piece_end, h, busy, quadrature_nodes)
    return total


@dataclass
class _OpenWindow:
    probe: WindowProbe
    context: Any
    start: float
    batch: int
    integral: float = 0.0


@dataclass
class ProbeRecorder:
    """Single-writer accumulator for one run.

    ``start`` is called once burn-in ends; measured event k goes to batch
    k * batches // measured_events and so does the segment ending at it.
    """

    model_id: str
    probes: list[Probe]
    processes_of: Callable[[EventRecord], tuple[str, ...]]
    batches: int = 32
    quadrature_nodes: int = 5
    max_subinterval: float = 1.0
    time_probes: list[TimeProbe] = field(init=False)
    event_probes: dict[str, list[EventProbe]] = field(init=False)
    window_probes: dict[str, list[WindowProbe]] = field(init=False)

    def __post_init__(self):
        keys = [p.key if isinstance(p, TimeProbe) else f"{p.process}:{p.key}" for p in self.probes]
        duplicates = {k for k in keys if keys.count(k) > 1}
        if duplicates:
            raise ValueError(f"Duplicate probe keys: {sorted(duplicates)}")
        self.time_probes = [p for p in self.probes if isinstance(p, TimeProbe)]
        self.event_probes = {}
        self.window_probes = {}
        for p in self.probes:
            if isinstance(p, EventProbe):
                self.event_probes.setdefault(p.process, []).append(p)
            elif isinstance(p, WindowProbe):
                self.window_probes.setdefault(p.process, []).append(p)

    def start(self, measured_events: int, clock_time: float, burn_in_events: int):
        if measured_events < self.batches:
            logger.warning(
                f"{self.model_id}: {measured_events} measured events for "
                f"{self.batches} batches, using {max(measured_events, 1)} batches"
            )
            self.batches = max(measured_events, 1)
        b = self.batches
        self.measured_events = measured_events
        self.burn_in_events = burn_in_events
        self.k = 0
        self.horizon = [0.0] * b
        self.time_sums = {p.key: [0.0] * b for p in self.time_probes}
        self.event_sums = {
            f"{proc}:{p.key}": [0.0] * b
            for proc, ps in self.event_probes.items()
            for p in ps
        }
        self.event_counts: dict[str, list[int]] = {}
        self.window_sums = {
            f"{proc}:{p.key}": [0.0] * b
            for proc, ps in self.window_probes.items()
            for p in ps
        }
        self.open_windows: dict[str, _OpenWindow] = {}
        self.idle_count = [0] * b
        self.idle_sum = [0.0] * b
        self.idle_sumsq = [0.0] * b
        self.idle_start: float | None = None
        self.regenerations = 0
        self.started_at = clock_time

    def batch_of(self, k: int) -> int:
        return k * self.batches // self.measured_events

    def record(self, event: EventRecord, after: SystemState):
        b = self.batch_of(self.k)
        end = event.state_before
        dt = event.elapsed
        busy = tuple(q > 0 for q in end.queues)
        self.horizon[b] += dt
        for probe in self.time_probes:
            self.time_sums[probe.key][b] += segment_integral(
                probe, end, dt, busy, self.quadrature_nodes, self.max_subinterval
            )
        for window in self.open_windows.values():
            window.integral += window.probe.integrand(window.context, end) * dt

        for process in self.processes_of(event):
            counts = self.event_counts.setdefault(process, [0] * self.batches)
            counts[b] += 1
            for probe in self.event_probes.get(process, ()):
                self.event_sums[f"{process}:{probe.key}"][b] += probe.fn(event, after)
            for probe in self.window_probes.get(process, ()):
                key = f"{process}:{probe.key}"
                window = self.open_windows.get(key)
                if window is not None:
                    length = event.time - window.start
                    self.window_sums[key][window.batch] += probe.close(
                        window.context, window.integral, length
                    )
                self.open_windows[key] = _OpenWindow(
                    probe, probe.open(event, after), event.time, b
                )

        self._track_idle(event, after, b)
        self.k += 1
        if self.k == self.measured_events or self.batch_of(self.k) != b:
            self._check_finite(b)

    def _track_idle(self, event: EventRecord, after: SystemState, b: int):
        if event.is_arrival and event.state_before.total() == 0:
            self.regenerations += 1
            if self.idle_start is not None:
                length = event.time - self.idle_start
                self.idle_count[b] += 1
                self.idle_sum[b] += length
                self.idle_sumsq[b] += length * length
            self.idle_start = None
        elif not event.is_arrival and after.total() == 0:
            self.idle_start = event.time

    def _check_finite(self, b: int):
        for sums in (self.time_sums, self.event_sums):
            for key, values in sums.items():
                if not math.isfinite(values[b]):
                    raise NonFiniteProbeError(key, values[b])

    def finish(self, events: int, ties: int, tie_risk: bool) -> PalmAccumulators:
        dropped = {key: 1 for key in self.open_windows}
        dropped_mass = {key: w.integral for key, w in self.open_windows.items()}
        if dropped:
            logger.debug(f"{self.model_id}: dropped {len(dropped)} trailing windows")
        for key, values in self.window_sums.items():
            for value in values:
                if not math.isfinite(value):
                    raise NonFiniteProbeError(key, value)
        return PalmAccumulators(
            model_id=self.model_id,
            batches=self.batches,
            horizon_batches=self.horizon,
            time_sums=self.time_sums,
            event_sums=self.event_sums,
            event_counts=self.event_counts,
            window_sums=self.window_sums,
            dropped_windows=dropped,
            dropped_window_mass=dropped_mass,
            idle_count=self.idle_count,
            idle_sum=self.idle_sum,
            idle_sumsq=self.idle_sumsq,
            events=events,
            burn_in_events=self.burn_in_events,
            regenerations=self.regenerations,
            ties=ties,
            tie_risk=tie_risk,
        )
