import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinbar.errors import UnsupportedMomentError
from steinbar.lib.clocks import (
    RandomStream,
    abs_centered_cubed,
    erlang_with_mean,
    hyperexponential_balanced,
    moment,
    replication_seeds,
    sample,
    scaled,
    scv,
    spawn_streams,
    with_mean,
)
from steinbar.models import (
    DeterministicClock,
    ErlangClock,
    ExponentialClock,
    HyperExponentialClock,
    LogNormalClock,
    UniformClock,
)

CLOCKS = [
    ExponentialClock(rate=2.0),
    ErlangClock(k=3, rate=1.5),
    HyperExponentialClock(probabilities=(0.3, 0.7), rates=(0.5, 4.0)),
    UniformClock(a=0.5, b=2.0),
    LogNormalClock(location=-0.2, scale=0.6),
    DeterministicClock(d=1.3),
]


def test_exponential_moments():
    spec = ExponentialClock(rate=2.0)
    assert moment(spec, 1) == pytest.approx(0.5)
    assert moment(spec, 2) == pytest.approx(0.5)
    assert moment(spec, 3) == pytest.approx(0.75)
    assert scv(spec) == pytest.approx(1.0)


def test_erlang_scv():
    assert scv(ErlangClock(k=4, rate=3.0)) == pytest.approx(0.25)


def test_uniform_moments():
    spec = UniformClock(a=0.0, b=2.0)
    assert moment(spec, 1) == pytest.approx(1.0)
    assert moment(spec, 2) == pytest.approx(4.0 / 3.0)
    assert moment(spec, 3) == pytest.approx(2.0)


def test_deterministic_scv_is_zero():
    assert scv(DeterministicClock(d=2.0)) == pytest.approx(0.0)


@pytest.mark.parametrize("m", [0, 4, -1])
def test_unsupported_moment(m):
    with pytest.raises(UnsupportedMomentError):
        moment(ExponentialClock(rate=1.0), m)


def test_abs_centered_cubed_closed_forms():
    assert abs_centered_cubed(ExponentialClock(rate=3.0)) == pytest.approx(
        12.0 / math.e - 2.0
    )
    assert abs_centered_cubed(DeterministicClock(d=4.0)) == 0.0
    # U[0, 2]: E|1 - X|^3 with 1 - X uniform on [-1, 1]
    assert abs_centered_cubed(UniformClock(a=0.0, b=2.0)) == pytest.approx(0.25)


def test_abs_centered_cubed_by_quadrature_matches_exponential():
    # Erlang(1) is exponential but takes the quadrature path
    assert abs_centered_cubed(ErlangClock(k=1, rate=0.7)) == pytest.approx(
        12.0 / math.e - 2.0, rel=1e-6
    )
    balanced = hyperexponential_balanced(mean=1.0, scv_value=1.0 + 1e-9)
    assert abs_centered_cubed(balanced) == pytest.approx(12.0 / math.e - 2.0, rel=1e-4)


@pytest.mark.parametrize("spec", CLOCKS, ids=lambda c: c.label())
def test_sample_mean_matches_moment(spec):
    stream = RandomStream(7)
    draws = np.array([sample(spec, stream) for _ in range(100_000)])
    assert np.all(draws > 0)
    se = math.sqrt(max(moment(spec, 2) - moment(spec, 1) ** 2, 0.0) / draws.size)
    assert abs(draws.mean() - moment(spec, 1)) <= 5 * se + 1e-12


def test_streams_are_reproducible():
    spec = ExponentialClock(rate=1.0)
    a, b = RandomStream(42, block_size=16), RandomStream(42, block_size=16)
    assert [a.draw(spec) for _ in range(50)] == [b.draw(spec) for _ in range(50)]
    assert RandomStream(43).draw(spec) != RandomStream(42).draw(spec)


def test_spawned_streams_differ():
    first, second = spawn_streams(5, 2)
    spec = ExponentialClock(rate=1.0)
    assert first.draw(spec) != second.draw(spec)
    assert len(replication_seeds(5, 3)) == 3


def test_uniforms_are_in_unit_interval():
    stream = RandomStream(0, block_size=8)
    values = [stream.uniform() for _ in range(30)]
    assert all(0.0 <= u < 1.0 for u in values)


@settings(max_examples=50, deadline=None)
@given(
    index=st.integers(min_value=0, max_value=len(CLOCKS) - 1),
    factor=st.floats(min_value=0.05, max_value=20.0),
)
def test_scaling_preserves_family_and_scv(index, factor):
    spec = CLOCKS[index]
    out = scaled(spec, factor)
    assert type(out) is type(spec)
    assert scv(out) == pytest.approx(scv(spec), rel=1e-9, abs=1e-12)
    for m in (1, 2, 3):
        assert moment(out, m) == pytest.approx(factor**m * moment(spec, m), rel=1e-9)


def test_scaled_rejects_non_positive_factor():
    with pytest.raises(ValueError):
        scaled(ExponentialClock(rate=1.0), 0.0)


def test_with_mean():
    out = with_mean(ErlangClock(k=2, rate=1.0), 0.25)
    assert out.mean == pytest.approx(0.25)


def test_hyperexponential_balanced():
    spec = hyperexponential_balanced(mean=2.0, scv_value=4.0)
    assert spec.mean == pytest.approx(2.0)
    assert scv(spec) == pytest.approx(4.0)
    p1, p2 = spec.probabilities
    r1, r2 = spec.rates
    assert p1 / r1 == pytest.approx(p2 / r2)
    with pytest.raises(ValueError):
        hyperexponential_balanced(mean=1.0, scv_value=1.0)


def test_erlang_with_mean():
    spec = erlang_with_mean(4, 0.5)
    assert spec.mean == pytest.approx(0.5)
    assert scv(spec) == pytest.approx(0.25)
