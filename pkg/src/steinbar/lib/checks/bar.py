"""
Basic adjoint relationships checked on simulated paths.

Three families of checks share the probe machinery of ``lib.sim``:

* the full BAR for functions of (x, r_a, r_s): clock-drift terms plus one
  jump term per counting process, summing to zero;
* the compensated BAR for functions of the compensated queue length, whose
  drift term is integrated exactly along each segment;
* generator extraction: each BAR term against its second-order main term,
  with the remainder bounded by a majorant built from sup norms of f'' and
  f''' and simulated path functionals.
"""

import math
from typing import Callable, Iterable, Sequence

from loguru import logger

from steinbar.errors import ModelMismatchError
from steinbar.lib.bounds import diffusion_params
from steinbar.lib.checks.identities import (
    identity_report,
    identity_row,
    resolve_se_multiple,
)
from steinbar.lib.checks.smooth_functions import (
    PlanarTestFunction,
    ScalarTestFunction,
    StateTestFunction,
    planar_library,
    scalar_library,
)
from steinbar.lib.clocks import moment, scv
from steinbar.lib.sim.engine import ARRIVALS, departures, scaled_total
from steinbar.lib.sim.palm import (
    RatioSeries,
    combine,
    estimate,
    event_series,
    rate_series,
    ratio_estimate,
    time_series,
    window_series,
)
from steinbar.lib.sim.probes import (
    EventProbe,
    Probe,
    TimeProbe,
    WindowProbe,
    abs_linear_integral,
    rewind,
)
from steinbar.lib.stein import PiecewiseLinear, solve_poisson
from steinbar.models import (
    CoefficientRow,
    DriftMode,
    EstimateCI,
    EventRecord,
    ExtractionReport,
    ExtractionRow,
    GG1Model,
    IdentityReport,
    JSQModel,
    ModelSpec,
    PalmAccumulators,
    SystemState,
    TandemModel,
    TermReport,
    TermRow,
)

CompensatedValue = float | tuple[float, float]
CompensatedFunction = ScalarTestFunction | PlanarTestFunction


def jump_processes(model: ModelSpec) -> tuple[str, ...]:
    """Arrivals plus one departure process per station."""
    return (ARRIVALS, *(departures(i) for i in range(model.stations)))


def compensated(model: ModelSpec, state: SystemState) -> CompensatedValue:
    """Compensated queue length: zero-mean jumps at every event."""
    if isinstance(model, TandemModel):
        (d1, d2), (mu1, mu2) = model.deltas, model.mus
        q1, q2 = state.queues
        rs1, rs2 = state.r_s
        return (
            d1 * q1 - d1 * model.lam * state.r_a + d1 * mu1 * rs1,
            d2 * q2 - d2 * mu1 * rs1 + d2 * mu2 * rs2,
        )
    d = model.delta
    return (
        scaled_total(model, state.queues)
        - d * model.lam * state.r_a
        + d * sum(mu * r for mu, r in zip(model.mus, state.r_s))
    )


def compensated_drift(model: ModelSpec, state: SystemState) -> CompensatedValue:
    """Time derivative of the compensated queue length between events."""
    if isinstance(model, TandemModel):
        (d1, d2), (mu1, mu2) = model.deltas, model.mus
        b1, b2 = (float(q > 0) for q in state.queues)
        return (d1 * (model.lam - mu1 * b1), d2 * (mu1 * b1 - mu2 * b2))
    busy_rate = sum(mu for mu, q in zip(model.mus, state.queues) if q > 0)
    return model.delta * (model.lam - busy_rate)


def _evaluate(fn: CompensatedFunction, value: CompensatedValue) -> float:
    return fn.f(*value) if isinstance(fn, PlanarTestFunction) else fn.f(value)


def _slope(fn: CompensatedFunction, value: CompensatedValue, drift: CompensatedValue) -> float:
    if isinstance(fn, PlanarTestFunction):
        g1, g2 = fn.grad(*value)
        return g1 * drift[0] + g2 * drift[1]
    return fn.d1(value) * drift


def _compensated_drift_probe(model: ModelSpec, fn: CompensatedFunction, key: str) -> TimeProbe:
    """Compensated X moves linearly between events, so the drift term
    integrates to f at the segment end minus f at its start."""

    def slope(state: SystemState) -> float:
        return _slope(fn, compensated(model, state), compensated_drift(model, state))

    def integral(end: SystemState, dt: float) -> float:
        start = rewind(end, dt, end.busy())
        return _evaluate(fn, compensated(model, end)) - _evaluate(fn, compensated(model, start))

    return TimeProbe(key, slope, clock_degree=None, integral=integral)


def _jump_probe(model: ModelSpec, key: str, process: str, of_state) -> EventProbe:
    def jump(event: EventRecord, after: SystemState) -> float:
        return of_state(after) - of_state(event.state_before)

    return EventProbe(key, process, jump)


def _term(f_id: str, term_id: str, c: float, series: RatioSeries) -> tuple[TermRow, tuple]:
    est = estimate(series.scaled(c))
    row = TermRow(
        f_id=f_id,
        term_id=term_id,
        estimate=est.point,
        half_width=est.half_width,
        std_error=est.std_error,
    )
    return row, (c, series)


def _term_report(
    model: ModelSpec, f_id: str, parts: list[tuple[TermRow, tuple]], se_multiple: float | None
) -> TermReport:
    k = resolve_se_multiple(se_multiple)
    residual = combine([p for _, p in parts])
    report = TermReport(
        model_id=model.model_id,
        f_id=f_id,
        terms=[row for row, _ in parts],
        residual=residual,
        se_multiple=k,
    )
    if report.passed:
        logger.debug(f"{model.model_id} BAR[{f_id}]: residual {residual}")
    else:
        logger.warning(
            f"{model.model_id} BAR[{f_id}]: residual {residual} is not within {k:g} SE of 0"
        )
    return report


# ---------------------------------------------------------------------------
# Full BAR
# ---------------------------------------------------------------------------


def _derivative_degree(clock_degree: int | None) -> int | None:
    if clock_degree is None:
        return None
    return max(clock_degree - 1, 0)


def full_bar_probes(model: ModelSpec, fns: Iterable[StateTestFunction]) -> list[Probe]:
    probes: list[Probe] = []
    for fn in fns:
        degree = _derivative_degree(fn.clock_degree)

        def busy_derivative(s: SystemState, fn=fn) -> float:
            return sum(fn.d_rs(s, i) for i, q in enumerate(s.queues) if q > 0)

        probes += [
            TimeProbe(f"bar[{fn.f_id}]:dra", fn.d_ra, clock_degree=degree),
            TimeProbe(f"bar[{fn.f_id}]:drs", busy_derivative, clock_degree=degree),
        ]
        probes += [
            _jump_probe(model, f"bar[{fn.f_id}]:jump", process, fn.f)
            for process in jump_processes(model)
        ]
    return probes


def full_bar_terms(
    model: ModelSpec,
    fn: StateTestFunction,
    acc: PalmAccumulators,
    se_multiple: float | None = None,
) -> TermReport:
    """-E d_ra f - sum_i E 1(Q_i>0) d_rs_i f + sum over processes of E int Df dN."""
    key = f"bar[{fn.f_id}]"
    parts = [
        _term(fn.f_id, "drift:r_a", -1.0, time_series(acc, f"{key}:dra")),
        _term(fn.f_id, "drift:r_s", -1.0, time_series(acc, f"{key}:drs")),
    ]
    parts += [
        _term(fn.f_id, f"jump:{process}", 1.0, event_series(acc, f"{key}:jump", process))
        for process in jump_processes(model)
    ]
    return _term_report(model, fn.f_id, parts, se_multiple)


# ---------------------------------------------------------------------------
# Compensated BAR
# ---------------------------------------------------------------------------


def compensated_library(model: ModelSpec) -> list[CompensatedFunction]:
    """Smooth functions of the compensated queue length, plus the Stein solution
    for min(x, 2) when the diffusion is not degenerate."""
    if isinstance(model, TandemModel):
        return planar_library()
    fns: list[CompensatedFunction] = scalar_library()
    params = diffusion_params(model)
    if not params.degenerate:
        fns.append(solve_poisson(PiecewiseLinear.capped(2.0), params).as_test_function())
    return fns


def compensated_probes(model: ModelSpec, fns: Iterable[CompensatedFunction]) -> list[Probe]:
    probes: list[Probe] = []
    for fn in fns:
        key = f"cbar[{fn.f_id}]"

        def of_state(s: SystemState, fn=fn) -> float:
            return _evaluate(fn, compensated(model, s))

        probes.append(_compensated_drift_probe(model, fn, f"{key}:drift"))
        probes += [
            _jump_probe(model, f"{key}:jump", process, of_state)
            for process in jump_processes(model)
        ]
    return probes


def compensated_bar_terms(
    model: ModelSpec,
    fn: CompensatedFunction,
    acc: PalmAccumulators,
    se_multiple: float | None = None,
) -> TermReport:
    key = f"cbar[{fn.f_id}]"
    parts = [_term(fn.f_id, "drift", 1.0, time_series(acc, f"{key}:drift"))]
    parts += [
        _term(fn.f_id, f"jump:{process}", 1.0, event_series(acc, f"{key}:jump", process))
        for process in jump_processes(model)
    ]
    return _term_report(model, fn.f_id, parts, se_multiple)


def _moving_coordinates(model: ModelSpec, process: str) -> tuple[int | None, ...]:
    """Coordinates of the compensated value that jump at events of ``process``."""
    if not isinstance(model, TandemModel):
        return (None,)
    if process == ARRIVALS:
        return (0,)
    if process == departures(0):
        return (0, 1)
    return (1,)


def _coordinate(value: CompensatedValue, c: int | None) -> float:
    return value if c is None else value[c]


def zero_mean_jump_probes(model: ModelSpec) -> list[EventProbe]:
    probes = []
    for process in jump_processes(model):
        for c in _moving_coordinates(model, process):
            probes.append(
                _jump_probe(
                    model,
                    f"zm:dX{'' if c is None else c + 1}",
                    process,
                    lambda s, c=c: _coordinate(compensated(model, s), c),
                )
            )
    return probes


def zero_mean_jump_check(
    model: ModelSpec, acc: PalmAccumulators, se_multiple: float | None = None
) -> IdentityReport:
    """Mean jump of the compensated queue length per event, target 0."""
    k = resolve_se_multiple(se_multiple)
    rows = []
    for process in jump_processes(model):
        for c in _moving_coordinates(model, process):
            suffix = "" if c is None else c + 1
            mean = ratio_estimate(
                event_series(acc, f"zm:dX{suffix}", process), rate_series(acc, process)
            )
            rows.append(identity_row(f"E[dX~{suffix}|{process}]=0", mean, 0.0, k))
    return identity_report(model, rows, k)


# ---------------------------------------------------------------------------
# Generator extraction (G/G/1 and JSQ)
# ---------------------------------------------------------------------------


def _check_extractable(model: ModelSpec):
    if not isinstance(model, (GG1Model, JSQModel)):
        raise ModelMismatchError(
            f"generator extraction is checked for G/G/1 and JSQ only, got {model.model_id}"
        )


def _drift_value(model: ModelSpec, s: SystemState) -> float:
    """-lambda R_a + mu sum_i R_s_i."""
    return -model.lam * s.r_a + model.mu * sum(s.r_s)


def _abs_drift_integral(
    model: ModelSpec, offset: Callable[[SystemState], float]
) -> Callable[[SystemState, float], float]:
    def integral(end: SystemState, dt: float) -> float:
        busy = sum(q > 0 for q in end.queues)
        # rewinding by u raises R_a and every busy R_s by u
        return abs_linear_integral(
            offset(end) + _drift_value(model, end), model.mu * busy - model.lam, dt
        )

    return integral


def _shared_extraction_probes(model: ModelSpec) -> list[Probe]:
    lam, mu = model.lam, model.mu

    def jump_in_x(ctx: float, state: SystemState) -> float:
        return abs(scaled_total(model, state.queues) - ctx)

    def x_before(event: EventRecord, after: SystemState) -> float:
        return scaled_total(model, event.state_before.queues)

    probes: list[Probe] = [
        TimeProbe(
            "ext:absdrift",
            lambda s: abs(_drift_value(model, s)),
            clock_degree=None,
            integral=_abs_drift_integral(model, lambda s: 0.0),
        ),
        EventProbe("ext:u3", ARRIVALS, lambda e, a: abs(1.0 - lam * e.payload) ** 3),
        EventProbe("ext:rs", ARRIVALS, lambda e, a: mu * sum(e.state_before.r_s)),
        WindowProbe("ext:dx", ARRIVALS, jump_in_x, open=x_before),
    ]
    with_queue = _abs_drift_integral(model, lambda s: float(sum(s.queues)))
    for i in range(model.stations):
        process = departures(i)

        def idle_integral(end: SystemState, dt: float, i=i) -> float:
            return with_queue(end, dt) if end.queues[i] == 0 else 0.0

        def other_clocks(e: EventRecord, a: SystemState, i=i) -> float:
            s = e.state_before
            others = sum(r for j, r in enumerate(s.r_s) if j != i)
            return abs(-lam * s.r_a + mu * others)

        probes += [
            TimeProbe(
                f"ext:idle{i}",
                lambda s, i=i: abs(sum(s.queues) + _drift_value(model, s))
                if s.queues[i] == 0
                else 0.0,
                clock_degree=None,
                integral=idle_integral,
            ),
            EventProbe("ext:s3", process, lambda e, a: abs(1.0 - mu * e.payload) ** 3),
            EventProbe("ext:dcomp", process, other_clocks),
            WindowProbe("ext:dx", process, jump_in_x, open=x_before),
        ]
    return probes


def _idle_routing_window(fn: ScalarTestFunction, model: ModelSpec, i: int) -> WindowProbe:
    """Integral of 1(Q_i=0) Lambda_i |f''(X(t-))| against dD_i: after a departure
    that empties server i, the window to its next departure is Lambda_i + S_i."""

    def open_(event: EventRecord, after: SystemState):
        x = scaled_total(model, event.state_before.queues)
        return after.queues[i] == 0, event.payload, abs(fn.d2(x))

    def close(ctx, integral: float, length: float) -> float:
        idle, service, curvature = ctx
        return (length - service) * curvature if idle else 0.0

    return WindowProbe(
        f"ext[{fn.f_id}]:idle_lam", departures(i), lambda ctx, s: 0.0, open=open_, close=close
    )


def extraction_probes(model: ModelSpec, fns: Sequence[ScalarTestFunction]) -> list[Probe]:
    """Probes for every extractable function; path functionals shared by all
    functions appear once."""
    _check_extractable(model)
    probes = _shared_extraction_probes(model)
    for fn in fns:
        if not fn.extractable:
            continue
        key = f"ext[{fn.f_id}]"

        def of_state(s: SystemState, fn=fn) -> float:
            return fn.f(compensated(model, s))

        probes += [
            _compensated_drift_probe(model, fn, f"{key}:drift"),
            TimeProbe(f"{key}:fp", lambda s, fn=fn: fn.d1(scaled_total(model, s.queues))),
            TimeProbe(f"{key}:fpp", lambda s, fn=fn: fn.d2(scaled_total(model, s.queues))),
        ]
        probes += [
            _jump_probe(model, f"{key}:jump", process, of_state)
            for process in jump_processes(model)
        ]
        if isinstance(model, JSQModel):
            probes += [_idle_routing_window(fn, model, i) for i in range(model.stations)]
    return probes


def _shift(est: EstimateCI, c: float) -> EstimateCI:
    return est.model_copy(update={"point": est.point + c})


def _extraction_row(
    fn: ScalarTestFunction,
    term_id: str,
    lhs: RatioSeries,
    main: list[tuple[float, RatioSeries]],
    main_constant: float,
    majorant: list[tuple[float, RatioSeries]],
    majorant_constant: float,
    k: float,
) -> ExtractionRow:
    diff = _shift(combine([(1.0, lhs), *((-c, s) for c, s in main)]), -main_constant)
    bound = _shift(combine(majorant), majorant_constant)
    main_point = sum(c * s.point for c, s in main) + main_constant
    passed = abs(diff.point) <= bound.point + k * (diff.std_error + bound.std_error)
    return ExtractionRow(
        f_id=fn.f_id,
        term_id=term_id,
        lhs=lhs.point,
        main_term=main_point,
        difference=diff,
        majorant=bound.point,
        passed=passed,
    )


def extraction_check(
    model: ModelSpec,
    fn: ScalarTestFunction,
    acc: PalmAccumulators,
    se_multiple: float | None = None,
) -> ExtractionReport:
    """Each term of the compensated BAR against its main term:
    |LHS - main| <= majorant + k (SE of the difference + SE of the majorant)."""
    _check_extractable(model)
    k = resolve_se_multiple(se_multiple)
    if not fn.extractable:
        logger.warning(f"{model.model_id}: {fn.f_id} has no finite sup norms, extraction skipped")
        return ExtractionReport(model_id=model.model_id, f_id=fn.f_id, rows=[])

    n, lam, mu, d = model.stations, model.lam, model.mu, model.delta
    c_u, c_s = scv(model.arrival), scv(model.service)
    sup2, sup3 = fn.sup_f2, fn.sup_f3
    key = f"ext[{fn.f_id}]"
    fpp = time_series(acc, f"{key}:fpp")
    theta = n * mu * d * d

    rows = [
        _extraction_row(
            fn,
            "eps0",
            time_series(acc, f"{key}:drift"),
            [(-theta, time_series(acc, f"{key}:fp"))],
            theta * fn.d1(0.0),
            [(sup2 * n * mu * d**3, time_series(acc, "ext:absdrift"))]
            + [(sup2 * d * d * mu, time_series(acc, f"ext:idle{i}")) for i in range(n)],
            0.0,
            k,
        )
    ]

    arrival_main = 0.5 * d * d * lam * c_u
    rows.append(
        _extraction_row(
            fn,
            "epsA",
            event_series(acc, f"{key}:jump", ARRIVALS),
            [(arrival_main, fpp)],
            0.0,
            [
                (sup3 * d**3 / 6.0, event_series(acc, "ext:u3", ARRIVALS)),
                (sup3 * 0.5 * d**3 * c_u, event_series(acc, "ext:rs", ARRIVALS)),
                (arrival_main * sup3, window_series(acc, "ext:dx", ARRIVALS)),
            ],
            0.0,
            k,
        )
    )

    departure_main = 0.5 * d * d * mu * c_s
    for i in range(n):
        process = departures(i)
        majorant = [
            (sup3 * d**3 / 6.0, event_series(acc, "ext:s3", process)),
            (sup3 * 0.5 * d**3 * c_s, event_series(acc, "ext:dcomp", process)),
            (departure_main * sup3, window_series(acc, "ext:dx", process)),
        ]
        if isinstance(model, JSQModel):
            majorant.append((departure_main, window_series(acc, f"{key}:idle_lam", process)))
            constant = 0.0
            term_id = f"epsD{i + 1}"
        else:
            # departures that empty the queue leave from X(t-) = delta
            constant = 0.5 * d**3 * mu * c_s * abs(fn.d2(d))
            term_id = "epsD"
        rows.append(
            _extraction_row(
                fn,
                term_id,
                event_series(acc, f"{key}:jump", process),
                [(departure_main, fpp)],
                0.0,
                majorant,
                constant,
                k,
            )
        )

    report = ExtractionReport(model_id=model.model_id, f_id=fn.f_id, rows=rows)
    for row in rows:
        logger.debug(
            f"{model.model_id} {fn.f_id} {row.term_id}: lhs={row.lhs:.6g} main={row.main_term:.6g} "
            f"diff={row.difference.point:.3g} majorant={row.majorant:.3g}"
        )
        if not row.passed:
            logger.warning(
                f"{model.model_id} {fn.f_id} {row.term_id}: |{row.difference.point:.3g}| exceeds "
                f"majorant {row.majorant:.3g}"
            )
    return report


def lorden_check(
    model: GG1Model, acc: PalmAccumulators, se_multiple: float | None = None
) -> IdentityReport:
    """Simulated window functionals E int int |X(t+u) - X(t-)| du dN against
    their Lorden-inequality bounds."""
    if not isinstance(model, GG1Model):
        raise ModelMismatchError(f"Lorden bounds are stated for G/G/1, got {model.model_id}")
    k = resolve_se_multiple(se_multiple)
    d, lam, mu = model.delta, model.lam, model.mu
    eu2, es2 = moment(model.arrival, 2), moment(model.service, 2)
    rows = [
        identity_row(
            "E[int int |dX| dA]<=Lorden",
            estimate(window_series(acc, "ext:dx", ARRIVALS)),
            d * (2.0 + mu * lam * eu2 / 2.0 + mu * mu * es2),
            k,
            one_sided=True,
        ),
        identity_row(
            "E[int int |dX| dD]<=Lorden",
            estimate(window_series(acc, "ext:dx", departures(0))),
            d * d + d * (2.0 + lam * lam * es2 / 2.0 + lam * lam * eu2),
            k,
            one_sided=True,
        ),
    ]
    return identity_report(model, rows, k)


# ---------------------------------------------------------------------------
# Tandem: coefficient consistency of the expansion
# ---------------------------------------------------------------------------


def _expansion_coefficients(model: TandemModel) -> dict[str, float]:
    lam = model.lam
    (d1, d2), (m1, m2) = model.deltas, model.mus
    c_u = scv(model.arrival)
    c1, c2 = scv(model.service1), scv(model.service2)
    return {
        "drift1": -m1 * d1 * d1,
        "drift2": d2 * (m1 * d1 - m2 * d2),
        "diffusion11": 0.5 * d1 * d1 * (lam * c_u + m1 * c1),
        "diffusion12": -d1 * d2 * m1 * c1,
        "diffusion22": 0.5 * d2 * d2 * (m1 * c1 + m2 * c2),
        "boundary1:x1": m1 * d1,
        "boundary1:x2": -m1 * d2,
        "boundary2:x1": 0.0,
        "boundary2:x2": m2 * d2,
    }


def _srbm_coefficients(model: TandemModel, drift_mode: DriftMode) -> dict[str, float]:
    params = diffusion_params(model, drift_mode)
    (d1, d2), (m1, m2) = params.delta_diag, params.mu
    s, r = params.sigma, params.reflection
    b1, b2 = params.scaled_drift
    return {
        "drift1": b1,
        "drift2": b2,
        "diffusion11": 0.5 * d1 * s[0][0] * d1,
        "diffusion12": d1 * s[0][1] * d2,
        "diffusion22": 0.5 * d2 * s[1][1] * d2,
        "boundary1:x1": m1 * d1 * r[0][0],
        "boundary1:x2": m1 * d2 * r[1][0],
        "boundary2:x1": m2 * d1 * r[0][1],
        "boundary2:x2": m2 * d2 * r[1][1],
    }


def tandem_coefficient_check(
    model: TandemModel,
    drift_mode: DriftMode = DriftMode.GENERATOR_CONSISTENT,
    rel_tol: float = 1e-12,
) -> list[CoefficientRow]:
    """First-order, second-order and boundary coefficients of the tandem
    expansion next to delta_diag*b, delta_diag Sigma delta_diag / 2 and the
    scaled reflection directions."""
    if not isinstance(model, TandemModel):
        raise ModelMismatchError(f"coefficient check needs a tandem model, got {model.model_id}")
    expansion = _expansion_coefficients(model)
    srbm = _srbm_coefficients(model, drift_mode)
    rows = [
        CoefficientRow(
            name=name,
            expansion=value,
            srbm=srbm[name],
            passed=math.isclose(value, srbm[name], rel_tol=rel_tol, abs_tol=1e-15),
        )
        for name, value in expansion.items()
    ]
    for row in rows:
        if not row.passed:
            logger.warning(
                f"{model.model_id} {drift_mode.value}: {row.name} expansion {row.expansion:.6g} "
                f"vs SRBM {row.srbm:.6g}"
            )
    return rows
