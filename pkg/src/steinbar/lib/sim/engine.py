import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from loguru import logger

from steinbar.errors import UnstableModelError
from steinbar.lib.clocks import RandomStream, sample, spawn_streams
from steinbar.lib.sim.probes import Probe, ProbeRecorder
from steinbar.models import (
    EventKind,
    EventRecord,
    JSQModel,
    ModelSpec,
    PalmAccumulators,
    SystemState,
    TandemModel,
)
from steinbar.utils.config import get_config

ARRIVALS = "A"
EXITS = "D"


@dataclass(slots=True)
class ModelStreams:
    arrival: RandomStream
    service: list[RandomStream]
    router: RandomStream


def make_streams(model: ModelSpec, seed: int | np.random.SeedSequence) -> ModelStreams:
    """One substream per clock plus one for routing decisions."""
    streams = spawn_streams(seed, model.stations + 2)
    return ModelStreams(streams[0], streams[1:-1], streams[-1])


def departures(station: int) -> str:
    return f"D{station + 1}"


def exit_stations(model: ModelSpec) -> frozenset[int]:
    match model:
        case TandemModel():
            return frozenset({model.stations - 1})
        case _:
            return frozenset(range(model.stations))


def processes_for(model: ModelSpec) -> Callable[[EventRecord], tuple[str, ...]]:
    """Counting processes an event belongs to: A, D<i> and D (system exits)."""
    exits = exit_stations(model)
    by_station = [
        (departures(i), EXITS) if i in exits else (departures(i),)
        for i in range(model.stations)
    ]
    arrival = (ARRIVALS,)

    def processes_of(event: EventRecord) -> tuple[str, ...]:
        return arrival if event.is_arrival else by_station[event.station]

    return processes_of


def scaled_total(model: ModelSpec, queues: list[int]) -> float:
    """Scaled customer count X: delta * total, or sum of delta_i * Q_i for the tandem."""
    match model:
        case TandemModel():
            return sum(d * q for d, q in zip(model.deltas, queues))
        case _:
            return model.delta * sum(queues)


def check_stable(model: ModelSpec):
    if not model.stable:
        raise UnstableModelError(model.rho, model.model_id)


def initial_state(model: ModelSpec, streams: ModelStreams) -> SystemState:
    """Empty queues, a fresh interarrival time and a pre-sampled service time per server."""
    return SystemState(
        queues=[0] * model.stations,
        r_a=sample(model.arrival, streams.arrival),
        r_s=[
            sample(clock, stream)
            for clock, stream in zip(model.service_clocks, streams.service)
        ],
    )


def step(
    state: SystemState, model: ModelSpec, streams: ModelStreams
) -> tuple[SystemState, EventRecord]:
    """Advance ``state`` in place to the next event and apply its jump.

    Ties fire departures before the arrival, lower stations first, and are
    flagged on the record.
    """
    queues = state.queues
    r_s = state.r_s
    dt = state.r_a
    station = -1
    for i, q in enumerate(queues):
        if q > 0 and r_s[i] < dt:
            dt = r_s[i]
            station = i
    if station == -1:
        # departures win ties with the arrival clock
        for i, q in enumerate(queues):
            if q > 0 and r_s[i] == dt:
                station = i
                break
    active = (state.r_a == dt) + sum(
        1 for i, q in enumerate(queues) if q > 0 and r_s[i] == dt
    )

    busy = [q > 0 for q in queues]
    state.clock_time += dt
    state.r_a -= dt
    for i, b in enumerate(busy):
        if b:
            r_s[i] -= dt
    if station == -1:
        state.r_a = 0.0
    else:
        r_s[station] = 0.0
    before = state.copy()

    routed_to = None
    if station == -1:
        kind = EventKind.ARRIVAL
        target = 0
        if isinstance(model, JSQModel):
            shortest = min(queues)
            candidates = [i for i, q in enumerate(queues) if q == shortest]
            target = candidates[0]
            if len(candidates) > 1:
                target = candidates[int(streams.router.uniform() * len(candidates))]
            routed_to = target
        queues[target] += 1
        payload = sample(model.arrival, streams.arrival)
        state.r_a = payload
        event_station = target
    else:
        kind = EventKind.DEPARTURE
        queues[station] -= 1
        if isinstance(model, TandemModel) and station == 0:
            queues[1] += 1
            routed_to = 1
        payload = sample(model.service_clocks[station], streams.service[station])
        r_s[station] = payload
        event_station = station

    record = EventRecord(
        time=state.clock_time,
        kind=kind,
        station=event_station,
        state_before=before,
        payload=payload,
        routed_to=routed_to,
        tie=active > 1,
        elapsed=dt,
    )
    return state, record


def _burn_in_targets(total_events: int, burn_in_events: int | None) -> tuple[int, int]:
    if burn_in_events is not None:
        return burn_in_events, 0
    cfg = get_config("estimation")
    return math.ceil(cfg["burn_in_fraction"] * total_events), cfg["burn_in_regenerations"]


def simulate(
    model: ModelSpec,
    total_events: int,
    burn_in_events: int | None = None,
    probes: Iterable[Probe] = (),
    seed: int | np.random.SeedSequence = 0,
    batches: int | None = None,
    on_event: Callable[[EventRecord], None] | None = None,
) -> PalmAccumulators:
    """Run ``total_events`` events and accumulate every probe after burn-in.

    ``burn_in_events=None`` ends burn-in at the later of a fraction of the
    events and a number of regenerations (see ``[estimation]`` in config.toml).
    """
    check_stable(model)
    if burn_in_events is not None and total_events <= burn_in_events:
        raise ValueError(
            f"total_events ({total_events}) must exceed burn_in_events ({burn_in_events})"
        )
    cfg = get_config("estimation")
    if model.tie_risk:
        logger.warning(f"{model.model_id}: deterministic clocks can tie")

    streams = make_streams(model, seed)
    state = initial_state(model, streams)
    recorder = ProbeRecorder(
        model_id=model.model_id,
        probes=list(probes),
        processes_of=processes_for(model),
        batches=batches or cfg["batches"],
        quadrature_nodes=cfg["quadrature_nodes"],
        max_subinterval=cfg["max_subinterval"],
    )
    min_events, min_regenerations = _burn_in_targets(total_events, burn_in_events)
    fallback = max(min_events, total_events // 2)

    logger.debug(f"Simulating {model.model_id}: {total_events} events")
    regenerations = 0
    ties = 0
    measuring = False
    for k in range(total_events):
        state, event = step(state, model, streams)
        ties += event.tie
        if on_event is not None:
            on_event(event)
        if measuring:
            recorder.record(event, state)
            continue
        if event.is_arrival and event.state_before.total() == 0:
            regenerations += 1
        done = k + 1
        if done >= min_events and (regenerations >= min_regenerations or done >= fallback):
            if regenerations < min_regenerations:
                logger.warning(
                    f"{model.model_id}: only {regenerations} regenerations in "
                    f"{done} events, ending burn-in anyway"
                )
            if done >= total_events:
                break
            recorder.start(total_events - done, state.clock_time, done)
            measuring = True

    if not measuring:
        raise ValueError(f"{model.model_id}: burn-in consumed all {total_events} events")
    accumulators = recorder.finish(total_events, ties, model.tie_risk)
    logger.debug(
        f"{model.model_id}: horizon {accumulators.horizon:.6g}, "
        f"{accumulators.regenerations} regenerations, {ties} ties"
    )
    return accumulators


def events_per_unit_time(model: ModelSpec) -> float:
    """Long-run event rate: one arrival and one departure per station per customer."""
    return model.lam * (1 + model.stations) if isinstance(model, TandemModel) else 2.0 * model.lam


def stationary_samples(
    model: ModelSpec,
    count: int,
    spacing_events: int = 100,
    burn_in: int | None = None,
    seed: int | np.random.SeedSequence = 0,
) -> list[SystemState]:
    """Snapshots Z(t_k) on a time grid whose spacing covers ``spacing_events``
    events on average, after ``burn_in`` events (default: the adaptive burn-in).
    """
    if spacing_events < 1:
        raise ValueError(f"spacing_events must be >= 1, got {spacing_events}")
    check_stable(model)
    if count == 0:
        return []
    total = (burn_in or 0) + count * spacing_events
    min_events, min_regenerations = _burn_in_targets(total, burn_in)
    fallback = max(min_events, total // 2)
    spacing = spacing_events / events_per_unit_time(model)

    streams = make_streams(model, seed)
    state = initial_state(model, streams)
    samples: list[SystemState] = []
    regenerations = 0
    events = 0
    next_time: float | None = None
    while len(samples) < count:
        state, event = step(state, model, streams)
        events += 1
        if next_time is None:
            if event.is_arrival and event.state_before.total() == 0:
                regenerations += 1
            if events >= min_events and (regenerations >= min_regenerations or events >= fallback):
                if regenerations < min_regenerations:
                    logger.warning(
                        f"{model.model_id}: only {regenerations} regenerations in "
                        f"{events} events, ending burn-in anyway"
                    )
                next_time = state.clock_time + spacing
            continue
        end = event.state_before
        busy = [q > 0 for q in end.queues]
        while next_time <= event.time and len(samples) < count:
            u = event.time - next_time
            samples.append(
                SystemState(
                    list(end.queues),
                    end.r_a + u,
                    [r + u if b else r for r, b in zip(end.r_s, busy)],
                    next_time,
                )
            )
            next_time += spacing
    logger.debug(f"{model.model_id}: {count} stationary samples after {events} events")
    return samples
