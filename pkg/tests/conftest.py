import pytest

from steinbar.models import (
    DeterministicClock,
    ExponentialClock,
    GG1Model,
    JSQModel,
    TandemModel,
)


def exponential(rate: float) -> ExponentialClock:
    return ExponentialClock(rate=rate)


@pytest.fixture
def mm1():
    """M/M/1 at rho = 0.5."""
    return GG1Model(arrival=exponential(0.5), service=exponential(1.0))


@pytest.fixture
def jsq2():
    """Two exponential servers at rho = 0.5."""
    return JSQModel(n=2, arrival=exponential(1.0), service=exponential(1.0))


@pytest.fixture
def tandem():
    return TandemModel(
        arrival=exponential(0.5), service1=exponential(1.0), service2=exponential(1.0)
    )


@pytest.fixture
def dd1():
    """Deterministic arrivals every 1.0, deterministic service 0.5."""
    return GG1Model(arrival=DeterministicClock(d=1.0), service=DeterministicClock(d=0.5))
