from unittest.mock import patch

import pytest

from steinbar.errors import UnstableModelError
from steinbar.lib.sim.engine import (
    events_per_unit_time,
    initial_state,
    make_streams,
    processes_for,
    scaled_total,
    simulate,
    stationary_samples,
    step,
)
from steinbar.lib.sim.probes import EventProbe, TimeProbe
from steinbar.models import (
    DeterministicClock,
    EventKind,
    ExponentialClock,
    GG1Model,
    SystemState,
)


def test_initial_state(dd1):
    state = initial_state(dd1, make_streams(dd1, 0))
    assert state.queues == [0]
    assert state.r_a == 1.0
    assert state.r_s == [0.5]
    assert state.clock_time == 0.0


def test_step_arrival_then_departure(dd1):
    streams = make_streams(dd1, 0)
    state = initial_state(dd1, streams)

    state, event = step(state, dd1, streams)
    assert event.kind is EventKind.ARRIVAL
    assert event.time == 1.0
    assert event.elapsed == 1.0
    assert event.state_before.queues == [0]
    assert event.state_before.r_a == 0.0
    # idle server: the pre-sampled service time does not decay
    assert event.state_before.r_s == [0.5]
    assert state.queues == [1]
    assert state.r_a == 1.0
    assert event.payload == 1.0
    assert not event.tie

    state, event = step(state, dd1, streams)
    assert event.kind is EventKind.DEPARTURE
    assert event.station == 0
    assert event.time == 1.5
    assert event.elapsed == 0.5
    assert event.state_before.queues == [1]
    assert event.state_before.r_s == [0.0]
    assert event.state_before.r_a == 0.5
    assert state.queues == [0]
    assert state.r_s == [0.5]


def test_ties_fire_the_departure_first():
    model = GG1Model(arrival=DeterministicClock(d=1.0), service=DeterministicClock(d=1.0))
    streams = make_streams(model, 0)
    state = SystemState(queues=[1], r_a=1.0, r_s=[1.0])
    state, event = step(state, model, streams)
    assert event.kind is EventKind.DEPARTURE
    assert event.tie
    assert state.queues == [0]
    assert state.r_a == 0.0

    state, event = step(state, model, streams)
    assert event.kind is EventKind.ARRIVAL
    assert event.elapsed == 0.0


def test_jsq_routes_to_the_shortest_queue(jsq2):
    streams = make_streams(jsq2, 0)
    state = SystemState(queues=[2, 0], r_a=0.1, r_s=[5.0, 5.0])
    state, event = step(state, jsq2, streams)
    assert event.is_arrival
    assert event.routed_to == 1
    assert event.station == 1
    assert state.queues == [2, 1]


def test_jsq_breaks_ties_among_shortest_queues(jsq2):
    streams = make_streams(jsq2, 3)
    targets = set()
    for _ in range(50):
        state = SystemState(queues=[0, 0], r_a=0.1, r_s=[5.0, 5.0])
        _, event = step(state, jsq2, streams)
        targets.add(event.routed_to)
    assert targets == {0, 1}


def test_jsq_tie_break_is_fair(jsq2):
    streams = make_streams(jsq2, 17)
    draws = 20_000
    first = 0
    for _ in range(draws):
        state = SystemState(queues=[2, 2], r_a=0.1, r_s=[5.0, 5.0])
        _, event = step(state, jsq2, streams)
        assert event.routed_to in (0, 1)
        first += event.routed_to == 0
    assert abs(first / draws - 0.5) <= 4.5 * (0.25 / draws) ** 0.5


def test_tandem_moves_customers_downstream(tandem):
    streams = make_streams(tandem, 0)
    state = SystemState(queues=[1, 0], r_a=5.0, r_s=[0.2, 0.9])
    state, event = step(state, tandem, streams)
    assert event.kind is EventKind.DEPARTURE
    assert event.station == 0
    assert event.routed_to == 1
    assert state.queues == [0, 1]
    # station 2 was idle: its clock did not move
    assert state.r_s[1] == 0.9
    assert state.r_a == pytest.approx(4.8)


def test_processes(tandem, jsq2):
    of = processes_for(tandem)
    streams = make_streams(tandem, 0)
    _, arrival = step(SystemState([0, 0], 0.1, [1.0, 1.0]), tandem, streams)
    _, first = step(SystemState([1, 0], 5.0, [0.1, 1.0]), tandem, streams)
    _, second = step(SystemState([0, 1], 5.0, [1.0, 0.1]), tandem, streams)
    assert of(arrival) == ("A",)
    assert of(first) == ("D1",)
    assert of(second) == ("D2", "D")

    of = processes_for(jsq2)
    _, event = step(SystemState([1, 1], 5.0, [1.0, 0.1]), jsq2, make_streams(jsq2, 0))
    assert of(event) == ("D2", "D")


def test_scaled_total(mm1, tandem):
    assert scaled_total(mm1, [4]) == pytest.approx(2.0)
    assert scaled_total(tandem, [2, 4]) == pytest.approx(3.0)


def test_events_per_unit_time(mm1, tandem):
    assert events_per_unit_time(mm1) == pytest.approx(1.0)
    assert events_per_unit_time(tandem) == pytest.approx(1.5)


def test_simulate_rejects_unstable_models():
    model = GG1Model(arrival=ExponentialClock(rate=1.0), service=ExponentialClock(rate=1.0))
    with pytest.raises(UnstableModelError):
        simulate(model, 1000)


def test_simulate_rejects_burn_in_longer_than_the_run(mm1):
    with pytest.raises(ValueError):
        simulate(mm1, 1000, burn_in_events=1000)


def test_simulate_is_reproducible(mm1):
    probes = [TimeProbe("q", lambda s: float(s.queues[0]))]
    a = simulate(mm1, 20_000, probes=probes, seed=11, batches=8)
    b = simulate(mm1, 20_000, probes=probes, seed=11, batches=8)
    c = simulate(mm1, 20_000, probes=probes, seed=12, batches=8)
    assert a.model_dump() == b.model_dump()
    assert a.time_sums != c.time_sums


def test_simulate_counts(mm1):
    probes = [
        TimeProbe("one", lambda s: 1.0),
        EventProbe("one", "A", lambda e, after: 1.0),
    ]
    acc = simulate(mm1, 40_000, burn_in_events=4_000, probes=probes, seed=1, batches=8)
    assert acc.events == 40_000
    assert acc.burn_in_events == 4_000
    assert len(acc.horizon_batches) == 8
    assert sum(acc.time_sums["one"]) == pytest.approx(acc.horizon)
    measured = sum(sum(v) for k, v in acc.event_counts.items() if k in ("A", "D1"))
    assert measured == 36_000
    assert acc.event_sums["A:one"] == [float(c) for c in acc.event_counts["A"]]
    assert acc.event_counts["D"] == acc.event_counts["D1"]
    assert acc.regenerations > 0
    assert acc.ties == 0


def test_simulate_calls_on_event_for_every_event(mm1):
    seen = []
    simulate(mm1, 5_000, burn_in_events=500, seed=0, batches=4, on_event=seen.append)
    assert len(seen) == 5_000
    times = [e.time for e in seen]
    assert times == sorted(times)


def test_simulate_warns_about_tie_risk(dd1):
    acc = simulate(dd1, 2_000, burn_in_events=100, seed=0, batches=4)
    assert acc.tie_risk


def test_stationary_samples(mm1):
    samples = stationary_samples(mm1, 200, spacing_events=10, burn_in=1_000, seed=5)
    assert len(samples) == 200
    times = [s.clock_time for s in samples]
    assert all(b - a == pytest.approx(10.0) for a, b in zip(times, times[1:]))
    assert all(s.queues[0] >= 0 and s.r_a > 0 for s in samples)
    again = stationary_samples(mm1, 200, spacing_events=10, burn_in=1_000, seed=5)
    assert [s.queues for s in again] == [s.queues for s in samples]


def test_stationary_samples_edge_cases(mm1):
    assert stationary_samples(mm1, 0) == []
    with pytest.raises(ValueError):
        stationary_samples(mm1, 10, spacing_events=0)


@patch("steinbar.lib.sim.engine._burn_in_targets", return_value=(100, 10**9))
@patch("steinbar.lib.sim.engine.logger")
def test_stationary_samples_end_burn_in_without_regenerations(mock_logger, _targets, mm1):
    samples = stationary_samples(mm1, 50, spacing_events=10, seed=2)
    assert len(samples) == 50
    mock_logger.warning.assert_called_once()
    (message,) = mock_logger.warning.call_args.args
    assert message.startswith(f"{mm1.model_id}: only ")
    assert message.endswith(" regenerations in 250 events, ending burn-in anyway")
