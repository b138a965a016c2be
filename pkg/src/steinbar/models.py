import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    model_validator,
)

# ---------------------------------------------------------------------------
# Clock families
# ---------------------------------------------------------------------------


class _Clock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    def raw_moment(self, m: int) -> float:
        raise NotImplementedError

    def label(self) -> str:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return self.raw_moment(1)

    def __str__(self):
        return self.label()


class ExponentialClock(_Clock):
    family: Literal["exponential"] = "exponential"
    rate: PositiveFloat

    def raw_moment(self, m: int) -> float:
        return math.factorial(m) / self.rate**m

    def label(self) -> str:
        return f"exponential({self.rate:g})"


class ErlangClock(_Clock):
    family: Literal["erlang"] = "erlang"
    k: PositiveInt
    rate: PositiveFloat

    def raw_moment(self, m: int) -> float:
        # rising factorial k(k+1)...(k+m-1)
        return math.prod(range(self.k, self.k + m)) / self.rate**m

    def label(self) -> str:
        return f"erlang({self.k},{self.rate:g})"


class HyperExponentialClock(_Clock):
    family: Literal["hyperexponential"] = "hyperexponential"
    probabilities: tuple[NonNegativeFloat, ...]
    rates: tuple[PositiveFloat, ...]

    @model_validator(mode="after")
    def check_mixture(self):
        """
        Probabilities and rates must pair up and the probabilities must sum to one.
        """
        if len(self.probabilities) != len(self.rates) or not self.rates:
            raise ValueError("probabilities and rates must be non-empty and equally long")
        if abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(self.probabilities)}, not 1")
        return self

    def raw_moment(self, m: int) -> float:
        return sum(
            p * math.factorial(m) / r**m for p, r in zip(self.probabilities, self.rates)
        )

    def label(self) -> str:
        phases = ",".join(f"{p:g}:{r:g}" for p, r in zip(self.probabilities, self.rates))
        return f"hyperexponential({phases})"


class UniformClock(_Clock):
    family: Literal["uniform"] = "uniform"
    a: NonNegativeFloat
    b: PositiveFloat

    @model_validator(mode="after")
    def check_interval(self):
        if self.b <= self.a:
            raise ValueError(f"uniform clock needs a < b, got a={self.a}, b={self.b}")
        return self

    def raw_moment(self, m: int) -> float:
        return (self.b ** (m + 1) - self.a ** (m + 1)) / ((m + 1) * (self.b - self.a))

    def label(self) -> str:
        return f"uniform({self.a:g},{self.b:g})"


class LogNormalClock(_Clock):
    family: Literal["lognormal"] = "lognormal"
    location: float
    scale: PositiveFloat

    def raw_moment(self, m: int) -> float:
        return math.exp(m * self.location + 0.5 * m * m * self.scale**2)

    def label(self) -> str:
        return f"lognormal({self.location:g},{self.scale:g})"


class DeterministicClock(_Clock):
    family: Literal["deterministic"] = "deterministic"
    d: PositiveFloat

    def raw_moment(self, m: int) -> float:
        return self.d**m

    def label(self) -> str:
        return f"deterministic({self.d:g})"


ClockSpec = Annotated[
    Union[
        ExponentialClock,
        ErlangClock,
        HyperExponentialClock,
        UniformClock,
        LogNormalClock,
        DeterministicClock,
    ],
    Field(discriminator="family"),
]

# ---------------------------------------------------------------------------
# Queueing models
# ---------------------------------------------------------------------------


class _QueueModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    arrival: ClockSpec

    @property
    def service_clocks(self) -> tuple[ClockSpec, ...]:
        """One service clock per server/station, in station order."""
        raise NotImplementedError

    @property
    def stations(self) -> int:
        return len(self.service_clocks)

    @property
    def lam(self) -> float:
        return 1.0 / self.arrival.mean

    @property
    def mus(self) -> tuple[float, ...]:
        return tuple(1.0 / s.mean for s in self.service_clocks)

    @property
    def rhos(self) -> tuple[float, ...]:
        """Utilization of every station."""
        raise NotImplementedError

    @property
    def deltas(self) -> tuple[float, ...]:
        """Queue-length scaling per station: X_i = deltas[i] * Q_i."""
        return tuple(1.0 - r for r in self.rhos)

    @property
    def rho(self) -> float:
        return max(self.rhos)

    @property
    def delta(self) -> float:
        return 1.0 - self.rho

    @property
    def stable(self) -> bool:
        return self.rho < 1.0

    @property
    def tie_risk(self) -> bool:
        """Two or more deterministic clocks can fire at the same instant."""
        clocks = [self.arrival, *self.service_clocks]
        return sum(isinstance(c, DeterministicClock) for c in clocks) >= 2

    @property
    def model_id(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.model_id


class GG1Model(_QueueModel):
    variant: Literal["gg1"] = "gg1"
    service: ClockSpec

    @property
    def service_clocks(self) -> tuple[ClockSpec, ...]:
        return (self.service,)

    @property
    def mu(self) -> float:
        return self.mus[0]

    @property
    def rhos(self) -> tuple[float, ...]:
        return (self.lam / self.mu,)

    @property
    def model_id(self) -> str:
        return f"gg1[{self.arrival.label()}/{self.service.label()}]"


class JSQModel(_QueueModel):
    variant: Literal["jsq"] = "jsq"
    n: PositiveInt
    service: ClockSpec

    @property
    def service_clocks(self) -> tuple[ClockSpec, ...]:
        return (self.service,) * self.n

    @property
    def mu(self) -> float:
        return self.mus[0]

    @property
    def rhos(self) -> tuple[float, ...]:
        return (self.lam / (self.n * self.mu),) * self.n

    @property
    def model_id(self) -> str:
        return f"jsq{self.n}[{self.arrival.label()}/{self.service.label()}]"


class TandemModel(_QueueModel):
    variant: Literal["tandem"] = "tandem"
    service1: ClockSpec
    service2: ClockSpec

    @property
    def service_clocks(self) -> tuple[ClockSpec, ...]:
        return (self.service1, self.service2)

    @property
    def rhos(self) -> tuple[float, ...]:
        return tuple(self.lam / mu for mu in self.mus)

    @property
    def model_id(self) -> str:
        return (
            f"tandem[{self.arrival.label()}/{self.service1.label()}"
            f"/{self.service2.label()}]"
        )


ModelSpec = Annotated[
    Union[GG1Model, JSQModel, TandemModel], Field(discriminator="variant")
]

# ---------------------------------------------------------------------------
# Simulation records (hot path: plain slotted dataclasses)
# ---------------------------------------------------------------------------


class EventKind(str, Enum):
    ARRIVAL = "arrival"
    DEPARTURE = "departure"


@dataclass(slots=True)
class SystemState:
    """The Markov state Z(t): queue lengths plus residual clocks.

    An idle server's entry in ``r_s`` is the pre-sampled service time of the
    next customer it will serve; it does not decay while the server is idle.
    """

    queues: list[int]
    r_a: float
    r_s: list[float]
    clock_time: float = 0.0

    def copy(self) -> "SystemState":
        return SystemState(list(self.queues), self.r_a, list(self.r_s), self.clock_time)

    def busy(self) -> tuple[bool, ...]:
        return tuple(q > 0 for q in self.queues)

    def total(self) -> int:
        return sum(self.queues)


@dataclass(slots=True)
class EventRecord:
    time: float
    kind: EventKind
    station: int  # 0-based; the arrival's entry station for arrivals
    state_before: SystemState  # Z(t-): clocks advanced, jump not yet applied
    payload: float  # the fresh U(t) or S_i(t)
    routed_to: int | None = None
    tie: bool = False
    elapsed: float = 0.0  # length of the segment that ends at this event

    @property
    def is_arrival(self) -> bool:
        return self.kind is EventKind.ARRIVAL


# ---------------------------------------------------------------------------
# Estimates and accumulators
# ---------------------------------------------------------------------------


class _Record(BaseModel):
    model_config = ConfigDict(protected_namespaces=())


class EstimateCI(BaseModel):
    point: float
    half_width: NonNegativeFloat
    std_error: NonNegativeFloat
    batches: int
    confidence: float = 0.99

    @property
    def lower(self) -> float:
        return self.point - self.half_width

    @property
    def upper(self) -> float:
        return self.point + self.half_width

    def within(self, target: float, se_multiple: float = 3.0) -> bool:
        """|point - target| <= se_multiple standard errors."""
        return abs(self.point - target) <= se_multiple * self.std_error

    def __repr__(self):
        return (
            f"{self.point:.6g} ± {self.half_width:.3g} "
            f"(se {self.std_error:.3g}, {self.batches} batches)"
        )

    def __str__(self):
        return self.__repr__()


class PalmAccumulators(_Record):
    """Batch partials of every path functional requested for a run.

    Every list has one entry per batch. Keys of ``event_sums`` and
    ``window_sums`` are ``"<process>:<probe key>"``.
    """

    model_id: str
    batches: int
    horizon_batches: list[float]
    time_sums: dict[str, list[float]] = {}
    event_sums: dict[str, list[float]] = {}
    event_counts: dict[str, list[int]] = {}
    window_sums: dict[str, list[float]] = {}
    dropped_windows: dict[str, int] = {}
    dropped_window_mass: dict[str, float] = {}
    idle_count: list[int] = []
    idle_sum: list[float] = []
    idle_sumsq: list[float] = []
    events: int = 0
    burn_in_events: int = 0
    regenerations: int = 0
    ties: int = 0
    tie_risk: bool = False
    replications: int = 1

    @property
    def horizon(self) -> float:
        return float(sum(self.horizon_batches))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class IdentityRow(BaseModel):
    identity_id: str
    estimate: float
    half_width: float
    std_error: float
    target: float
    passed: bool
    one_sided: bool = False
    exploratory: bool = False


class IdentityReport(_Record):
    model_id: str
    se_multiple: float
    rows: list[IdentityRow]
    note: str | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows if not r.exploratory)


class TermRow(BaseModel):
    f_id: str
    term_id: str
    estimate: float
    half_width: float
    std_error: float


class TermReport(_Record):
    model_id: str
    f_id: str
    terms: list[TermRow]
    residual: EstimateCI
    se_multiple: float = 3.0

    @property
    def passed(self) -> bool:
        return self.residual.within(0.0, self.se_multiple)


class ExtractionRow(BaseModel):
    f_id: str
    term_id: str  # eps0, epsA, epsD or epsD<i>
    lhs: float
    main_term: float
    difference: EstimateCI
    majorant: float
    passed: bool


class ExtractionReport(_Record):
    model_id: str
    f_id: str
    rows: list[ExtractionRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


class DiffusionParams1D(BaseModel):
    theta: PositiveFloat
    sigma2: NonNegativeFloat
    delta: PositiveFloat

    @property
    def beta(self) -> float:
        """Rate of the exponential stationary law 2*theta/sigma^2."""
        return math.inf if self.sigma2 == 0 else 2.0 * self.theta / self.sigma2

    @property
    def degenerate(self) -> bool:
        return self.sigma2 == 0


class DriftMode(str, Enum):
    LITERAL = "literal"
    GENERATOR_CONSISTENT = "generator_consistent"


class TandemRBMParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    lam: PositiveFloat
    mu: tuple[PositiveFloat, PositiveFloat]
    delta_diag: tuple[PositiveFloat, PositiveFloat]
    sigma: tuple[tuple[float, float], tuple[float, float]]
    reflection: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (-1.0, 1.0))
    drift_mode: DriftMode = DriftMode.GENERATOR_CONSISTENT
    drift_override: tuple[float, float] | None = None

    @model_validator(mode="after")
    def check_matrices(self):
        s = np.asarray(self.sigma)
        if not np.allclose(s, s.T):
            raise ValueError("Sigma must be symmetric")
        r = np.asarray(self.reflection)
        if not (r[0, 0] > 0 and r[1, 1] > 0):
            raise ValueError("R must have a positive diagonal")
        return self

    @property
    def drift(self) -> tuple[float, float]:
        """Drift b of the unscaled Brownian motion xi."""
        if self.drift_override is not None:
            return self.drift_override
        r = np.asarray(self.reflection)
        match self.drift_mode:
            case DriftMode.LITERAL:
                v = np.asarray(self.mu)
            case DriftMode.GENERATOR_CONSISTENT:
                v = np.asarray(self.mu) * np.asarray(self.delta_diag)
        b = -r @ v
        return (float(b[0]), float(b[1]))

    @property
    def scaled_drift(self) -> tuple[float, float]:
        d = self.delta_diag
        b = self.drift
        return (d[0] * b[0], d[1] * b[1])


class BoundMode(str, Enum):
    CRUDE = "crude"
    SIMULATED = "simulated"


class BoundInputs(BaseModel):
    delta: float
    lam: float
    mu: float
    scv_u: float
    scv_s: float
    eu2: float
    eu3: float
    es2: float
    abs_cubed_u: float
    abs_cubed_s: float
    sigma2: float
    conditional_residual: float


class BoundReport(_Record):
    model_id: str
    mode: BoundMode
    eps0_bound: NonNegativeFloat
    epsA_bound: NonNegativeFloat
    epsD_bound: NonNegativeFloat
    theta: float
    inputs: BoundInputs

    @property
    def total(self) -> float:
        return self.eps0_bound + self.epsA_bound + self.epsD_bound

    @property
    def sigma2(self) -> float:
        return self.inputs.sigma2

    @property
    def delta(self) -> float:
        return self.inputs.delta


class DecayFit(BaseModel):
    slope: float
    std_error: float
    intercept: float
    points: int


class W1Row(BaseModel):
    config_id: str
    delta: float
    w1: float
    w1_ci: float
    bound_total: float | None
    passed: bool | None


@dataclass
class SRBMPath:
    """Discretized SRBM path; ``y_tilde`` is unscaled, ``y`` = delta_diag * y_tilde."""

    dt: float
    horizon: float
    y_tilde: np.ndarray  # (steps + 1, 2)
    d_regulator: np.ndarray  # (steps, 2)
    delta_diag: tuple[float, float]
    y: np.ndarray = field(init=False)

    def __post_init__(self):
        self.y = self.y_tilde * np.asarray(self.delta_diag)

    @property
    def regulator(self) -> np.ndarray:
        """Cumulative I(t_k), starting from I(0) = 0."""
        return np.vstack([np.zeros((1, 2)), np.cumsum(self.d_regulator, axis=0)])


class ConditionalResidual(_Record):
    """E(R_a | X = 0) from time averages, and from idle periods as E I^2 / (2 E I)."""

    model_id: str
    time_ratio: EstimateCI
    idle_ratio: EstimateCI | None = None
    idle_periods: int = 0

    @property
    def upper(self) -> float:
        return self.time_ratio.upper


class CoefficientRow(BaseModel):
    """One coefficient of the tandem expansion next to its SRBM counterpart."""

    name: str
    expansion: float
    srbm: float
    passed: bool
