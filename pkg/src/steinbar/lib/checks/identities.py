from typing import Iterable

from loguru import logger
from scipy import stats

from steinbar.errors import InsufficientDataError, ModelMismatchError, TieRiskError
from steinbar.lib.clocks import moment
from steinbar.lib.sim.engine import ARRIVALS, EXITS, departures
from steinbar.lib.sim.palm import (
    combine,
    estimate,
    event_average,
    event_series,
    rate_series,
    ratio_estimate,
    time_series,
)
from steinbar.lib.sim.probes import EventProbe, TimeProbe
from steinbar.models import (
    ConditionalResidual,
    EstimateCI,
    GG1Model,
    IdentityReport,
    IdentityRow,
    JSQModel,
    ModelSpec,
    PalmAccumulators,
    TandemModel,
)
from steinbar.utils.config import get_config

BONFERRONI_THRESHOLD = 10


def _station_probes(i: int, m_values: Iterable[int]) -> list[TimeProbe]:
    probes = [
        TimeProbe(f"id:busy{i}", lambda s, i=i: float(s.queues[i] > 0)),
        TimeProbe(f"id:idle{i}", lambda s, i=i: float(s.queues[i] == 0)),
    ]
    for m in m_values:
        probes.append(
            TimeProbe(
                f"id:rs{i}^{m - 1}:busy",
                lambda s, i=i, p=m - 1: s.r_s[i] ** p if s.queues[i] > 0 else 0.0,
                clock_degree=m - 1,
            )
        )
        # an idle server's clock does not move, so the integrand is constant
        probes.append(
            TimeProbe(
                f"id:rs{i}^{m}:idle",
                lambda s, i=i, p=m: s.r_s[i] ** p if s.queues[i] == 0 else 0.0,
            )
        )
    return probes


def identity_probes(model: ModelSpec, m_values: Iterable[int] = (2, 3)) -> list:
    """Every probe the identity checks of ``model`` read."""
    m_values = tuple(m_values)
    probes: list = [
        TimeProbe(f"id:ra^{m - 1}", lambda s, p=m - 1: s.r_a**p, clock_degree=m - 1)
        for m in m_values
    ]
    for i in range(model.stations):
        probes.extend(_station_probes(i, m_values))
    if isinstance(model, GG1Model):
        probes += [
            TimeProbe(
                "id:ra:idle",
                lambda s: s.r_a if s.queues[0] == 0 else 0.0,
                clock_degree=1,
            ),
            EventProbe(
                "id:idle_ra", EXITS, lambda e, after: after.r_a if after.queues[0] == 0 else 0.0
            ),
            EventProbe("id:ra", EXITS, lambda e, after: e.state_before.r_a),
            EventProbe("id:rs", ARRIVALS, lambda e, after: e.state_before.r_s[0]),
        ]
    return probes


def identity_row(
    identity_id: str,
    est: EstimateCI,
    target: float,
    se_multiple: float,
    one_sided: bool = False,
    exploratory: bool = False,
) -> IdentityRow:
    if one_sided:
        passed = est.point <= target + se_multiple * est.std_error
    else:
        passed = est.within(target, se_multiple)
    return IdentityRow(
        identity_id=identity_id,
        estimate=est.point,
        half_width=est.half_width,
        std_error=est.std_error,
        target=target,
        passed=passed,
        one_sided=one_sided,
        exploratory=exploratory,
    )


def _conditional(acc: PalmAccumulators, num_key: str, den_key: str) -> EstimateCI:
    return ratio_estimate(time_series(acc, num_key), time_series(acc, den_key))


def bonferroni_note(rows: int, se_multiple: float) -> str | None:
    """Family-wise error note for suites with many rows checked at once."""
    if rows <= BONFERRONI_THRESHOLD:
        return None
    per_row = 2.0 * stats.norm.sf(se_multiple)
    family = min(1.0, rows * per_row)
    adjusted = stats.norm.isf(per_row / (2.0 * rows))
    return (
        f"{rows} rows at {se_multiple:g} SE: per-row level {per_row:.3g}, "
        f"Bonferroni family-wise level {family:.3g}; "
        f"{adjusted:.3g} SE per row keeps the family-wise level at {per_row:.3g}"
    )


def identity_report(
    model: ModelSpec, rows: list[IdentityRow], se_multiple: float
) -> IdentityReport:
    checked = [r for r in rows if not r.exploratory]
    note = bonferroni_note(len(checked), se_multiple)
    report = IdentityReport(
        model_id=model.model_id, se_multiple=se_multiple, rows=rows, note=note
    )
    for row in rows:
        if row.exploratory:
            logger.info(
                f"{model.model_id} exploratory {row.identity_id}: "
                f"{row.estimate:.6g} vs {row.target:.6g}"
            )
        elif not row.passed:
            logger.warning(
                f"{model.model_id} {row.identity_id}: {row.estimate:.6g} ± {row.half_width:.3g} "
                f"misses {row.target:.6g}"
            )
    if note:
        logger.info(note)
    logger.info(
        f"{model.model_id}: {sum(r.passed for r in checked)}/{len(checked)} identities pass"
    )
    return report


def _guard(model: ModelSpec, expected: type, allow_ties: bool):
    if not isinstance(model, expected):
        raise ModelMismatchError(
            f"{expected.__name__} check called with {type(model).__name__} {model.model_id}"
        )
    if model.tie_risk and not allow_ties:
        raise TieRiskError(f"{model.model_id}: clock ties possible, excluded from identity checks")


def resolve_se_multiple(se_multiple: float | None) -> float:
    return se_multiple if se_multiple is not None else get_config("estimation")["se_multiple"]


def check_gg1(
    model: GG1Model,
    acc: PalmAccumulators,
    m_values: Iterable[int] = (2, 3),
    se_multiple: float | None = None,
    allow_ties: bool = False,
) -> IdentityReport:
    _guard(model, GG1Model, allow_ties)
    k = resolve_se_multiple(se_multiple)
    lam, rho = model.lam, model.rho
    U, S = model.arrival, model.service
    rows = [
        identity_row("EA(1)=lambda", estimate(rate_series(acc, ARRIVALS)), lam, k),
        identity_row("ED(1)=lambda", estimate(rate_series(acc, EXITS)), lam, k),
        identity_row("P(X>0)=rho", estimate(time_series(acc, "id:busy0")), rho, k),
    ]
    for m in m_values:
        rows += [
            identity_row(
                f"E[Ra^{m - 1}]=lambda*EU^{m}/{m}",
                estimate(time_series(acc, f"id:ra^{m - 1}")),
                lam * moment(U, m) / m,
                k,
            ),
            identity_row(
                f"E[Rs^{m - 1};X>0]=lambda*ES^{m}/{m}",
                estimate(time_series(acc, f"id:rs0^{m - 1}:busy")),
                lam * moment(S, m) / m,
                k,
            ),
            identity_row(
                f"E[Rs^{m}|X=0]=ES^{m}",
                _conditional(acc, f"id:rs0^{m}:idle", "id:idle0"),
                moment(S, m),
                k,
            ),
        ]
    rows.append(
        identity_row(
            "E[int 1(X=0)Ra dD]=1-rho",
            event_average(acc, "id:idle_ra", EXITS),
            1.0 - rho,
            k,
        )
    )
    mixed = combine(
        [
            (S.mean, event_series(acc, "id:ra", EXITS)),
            (U.mean, event_series(acc, "id:rs", ARRIVALS)),
        ]
    )
    rows.append(
        identity_row(
            "ES*E[int Ra dD]+EU*E[int Rs dA]<=ERs+ERa",
            mixed,
            mixed_bound(model),
            k,
            one_sided=True,
        )
    )
    return identity_report(model, rows, k)


def mixed_bound(model: GG1Model) -> float:
    """E R_s + E R_a in closed form."""
    lam, rho = model.lam, model.rho
    e_ra = lam * moment(model.arrival, 2) / 2.0
    e_rs = (1.0 - rho) * model.service.mean + lam * moment(model.service, 2) / 2.0
    return e_ra + e_rs


def check_jsq(
    model: JSQModel,
    acc: PalmAccumulators,
    m_values: Iterable[int] = (2, 3),
    se_multiple: float | None = None,
    allow_ties: bool = False,
) -> IdentityReport:
    _guard(model, JSQModel, allow_ties)
    k = resolve_se_multiple(se_multiple)
    lam, rho, n = model.lam, model.rho, model.n
    U, S = model.arrival, model.service
    m_values = tuple(m_values)
    rows = [identity_row("EA(1)=lambda", estimate(rate_series(acc, ARRIVALS)), lam, k)]
    for m in m_values:
        rows.append(
            identity_row(
                f"E[Ra^{m - 1}]=lambda*EU^{m}/{m}",
                estimate(time_series(acc, f"id:ra^{m - 1}")),
                lam * moment(U, m) / m,
                k,
            )
        )
    for i in range(n):
        rows += [
            identity_row(f"P(Q{i + 1}>0)=rho", estimate(time_series(acc, f"id:busy{i}")), rho, k),
            identity_row(
                f"ED{i + 1}(1)=lambda/n",
                estimate(rate_series(acc, departures(i))),
                lam / n,
                k,
            ),
        ]
        for m in m_values:
            rows += [
                identity_row(
                    f"E[Rs{i + 1}^{m - 1};Q{i + 1}>0]=(lambda/n)*ES^{m}/{m}",
                    estimate(time_series(acc, f"id:rs{i}^{m - 1}:busy")),
                    lam / n * moment(S, m) / m,
                    k,
                ),
                identity_row(
                    f"E[Rs{i + 1}^{m}|Q{i + 1}=0]=ES^{m}",
                    _conditional(acc, f"id:rs{i}^{m}:idle", f"id:idle{i}"),
                    moment(S, m),
                    k,
                ),
            ]
    return identity_report(model, rows, k)


def check_tandem(
    model: TandemModel,
    acc: PalmAccumulators,
    m_values: Iterable[int] = (2, 3),
    se_multiple: float | None = None,
) -> IdentityReport:
    """Per-station residual-moment rows, all exploratory."""
    _guard(model, TandemModel, allow_ties=True)
    k = resolve_se_multiple(se_multiple)
    lam = model.lam
    m_values = tuple(m_values)
    rows = [
        identity_row("EA(1)=lambda", estimate(rate_series(acc, ARRIVALS)), lam, k, exploratory=True)
    ]
    for m in m_values:
        rows.append(
            identity_row(
                f"E[Ra^{m - 1}]=lambda*EU^{m}/{m}",
                estimate(time_series(acc, f"id:ra^{m - 1}")),
                lam * moment(model.arrival, m) / m,
                k,
                exploratory=True,
            )
        )
    for i, (clock, rho_i) in enumerate(zip(model.service_clocks, model.rhos)):
        rows += [
            identity_row(
                f"P(Q{i + 1}>0)=rho{i + 1}",
                estimate(time_series(acc, f"id:busy{i}")),
                rho_i,
                k,
                exploratory=True,
            ),
            identity_row(
                f"ED{i + 1}(1)=lambda",
                estimate(rate_series(acc, departures(i))),
                lam,
                k,
                exploratory=True,
            ),
        ]
        for m in m_values:
            rows += [
                identity_row(
                    f"E[Rs{i + 1}^{m - 1};Q{i + 1}>0]=lambda*ES{i + 1}^{m}/{m}",
                    estimate(time_series(acc, f"id:rs{i}^{m - 1}:busy")),
                    lam * moment(clock, m) / m,
                    k,
                    exploratory=True,
                ),
                identity_row(
                    f"E[Rs{i + 1}^{m}|Q{i + 1}=0]=ES{i + 1}^{m}",
                    _conditional(acc, f"id:rs{i}^{m}:idle", f"id:idle{i}"),
                    moment(clock, m),
                    k,
                    exploratory=True,
                ),
            ]
    return identity_report(model, rows, k)


def check_identities(
    model: ModelSpec, acc: PalmAccumulators, m_values: Iterable[int] = (2, 3), **kwargs
) -> IdentityReport:
    match model:
        case GG1Model():
            return check_gg1(model, acc, m_values, **kwargs)
        case JSQModel():
            return check_jsq(model, acc, m_values, **kwargs)
        case TandemModel():
            kwargs.pop("allow_ties", None)
            return check_tandem(model, acc, m_values, **kwargs)
    raise ModelMismatchError(f"no identity suite for {model!r}")


def conditional_residual_estimate(
    model: GG1Model, acc: PalmAccumulators
) -> ConditionalResidual:
    """E(R_a | X = 0), as a ratio of time averages and as E I^2 / (2 E I)."""
    if not isinstance(model, GG1Model):
        raise ModelMismatchError(f"conditional residual needs a G/G/1 model, got {model.model_id}")
    time_ratio = _conditional(acc, "id:ra:idle", "id:idle0")
    idle_periods = sum(acc.idle_count)
    idle_ratio = None
    try:
        idle_ratio = ratio_estimate([0.5 * v for v in acc.idle_sumsq], acc.idle_sum)
    except InsufficientDataError:
        logger.warning(
            f"{model.model_id}: {idle_periods} idle periods, idle-period estimator unavailable"
        )
    logger.info(
        f"{model.model_id}: E(Ra|X=0) time ratio {time_ratio}, idle periods {idle_ratio}"
    )
    return ConditionalResidual(
        model_id=model.model_id,
        time_ratio=time_ratio,
        idle_ratio=idle_ratio,
        idle_periods=idle_periods,
    )
