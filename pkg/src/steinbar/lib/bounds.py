import math

from loguru import logger

from steinbar.errors import DegenerateDiffusionError, ModelMismatchError
from steinbar.lib.clocks import abs_centered_cubed, moment, scv
from steinbar.lib.sim.palm import combine, time_series
from steinbar.lib.sim.probes import TimeProbe
from steinbar.models import (
    BoundInputs,
    BoundMode,
    BoundReport,
    ConditionalResidual,
    DiffusionParams1D,
    DriftMode,
    EstimateCI,
    GG1Model,
    JSQModel,
    ModelSpec,
    PalmAccumulators,
    TandemModel,
    TandemRBMParams,
)


def _one_dimensional(
    n: int, lam: float, mu: float, scv_u: float, scv_s: float, delta: float
) -> DiffusionParams1D:
    params = DiffusionParams1D(
        theta=n * mu * delta * delta,
        sigma2=delta * delta * (lam * scv_u + n * mu * scv_s),
        delta=delta,
    )
    if params.degenerate:
        logger.warning(f"sigma2 = 0 for delta={delta:.6g}: Stein pipeline unavailable")
    return params


def diffusion_params(
    model: ModelSpec, drift_mode: DriftMode = DriftMode.GENERATOR_CONSISTENT
) -> DiffusionParams1D | TandemRBMParams:
    """theta and sigma2 of the reflected diffusion, or the tandem SRBM data."""
    match model:
        case GG1Model():
            n = 1
        case JSQModel():
            n = model.n
        case TandemModel():
            c_u = scv(model.arrival)
            c1, c2 = scv(model.service1), scv(model.service2)
            mu1, mu2 = model.mus
            sigma = (
                (model.lam * c_u + mu1 * c1, -mu1 * c1),
                (-mu1 * c1, mu1 * c1 + mu2 * c2),
            )
            return TandemRBMParams(
                lam=model.lam,
                mu=(mu1, mu2),
                delta_diag=model.deltas,
                sigma=sigma,
                drift_mode=drift_mode,
            )
        case _:
            raise ModelMismatchError(f"no diffusion parameters for {model!r}")
    return _one_dimensional(
        n, model.lam, model.mu, scv(model.arrival), scv(model.service), model.delta
    )


def crude_conditional_residual(model: GG1Model) -> float:
    """delta^{-1/2} lambda EU^3 / 3, from Cauchy-Schwarz on E(R_a 1(X=0))."""
    return model.lam * moment(model.arrival, 3) / (3.0 * math.sqrt(model.delta))


def bound_inputs(model: GG1Model, conditional_residual: float) -> BoundInputs:
    params = diffusion_params(model)
    U, S = model.arrival, model.service
    return BoundInputs(
        delta=model.delta,
        lam=model.lam,
        mu=model.mu,
        scv_u=scv(U),
        scv_s=scv(S),
        eu2=moment(U, 2),
        eu3=moment(U, 3),
        es2=moment(S, 2),
        abs_cubed_u=abs_centered_cubed(U),
        abs_cubed_s=abs_centered_cubed(S),
        sigma2=params.sigma2,
        conditional_residual=conditional_residual,
    )


def evaluate_bounds(inputs: BoundInputs) -> tuple[float, float, float]:
    """The eps0, epsA and epsD majorants of the G/G/1 error bound."""
    d, lam, mu = inputs.delta, inputs.lam, inputs.mu
    c_u, c_s = inputs.scv_u, inputs.scv_s
    eu2, es2 = inputs.eu2, inputs.es2
    if inputs.sigma2 == 0:
        raise DegenerateDiffusionError("sigma2 = 0: the error bound is undefined")
    prefactor = 2.0 * d**3 / inputs.sigma2
    busy_residuals = mu * lam * eu2 / 2.0 + d + mu * lam * es2 / 2.0

    eps0 = d * (
        lam * lam * eu2 / 2.0
        + (d + mu * lam * es2 / 2.0)
        + lam * inputs.conditional_residual
        + 1.0
    )
    eps_a = (
        prefactor
        * lam
        * (
            inputs.abs_cubed_u / 3.0
            + c_u * busy_residuals
            + c_u * (2.0 + mu * lam * eu2 / 2.0 + mu * mu * es2)
        )
    )
    eps_d = (
        prefactor
        * (
            inputs.abs_cubed_s * lam
            + c_s * lam * busy_residuals
            + c_s * mu * (d * d + d * (2.0 + lam * lam * es2 / 2.0 + lam * lam * eu2))
        )
        + 0.5 * d * c_s
    )
    return eps0, eps_a, eps_d


def error_bounds(
    model: GG1Model,
    mode: BoundMode = BoundMode.SIMULATED,
    conditional_residual: EstimateCI | ConditionalResidual | float | None = None,
) -> BoundReport:
    """Error bound for E h(X) - E h(Y) over Lip(1) h.

    Simulated mode substitutes the upper CI edge of E(R_a | X=0); Crude mode
    the closed-form Cauchy-Schwarz bound.
    """
    if not isinstance(model, GG1Model):
        raise ModelMismatchError(f"error bounds exist for G/G/1 only, got {model.model_id}")
    match mode:
        case BoundMode.CRUDE:
            value = crude_conditional_residual(model)
        case BoundMode.SIMULATED:
            if conditional_residual is None:
                raise ValueError("simulated bounds need a conditional residual estimate")
            if isinstance(conditional_residual, (EstimateCI, ConditionalResidual)):
                value = conditional_residual.upper
            else:
                value = float(conditional_residual)

    inputs = bound_inputs(model, value)
    eps0, eps_a, eps_d = evaluate_bounds(inputs)
    report = BoundReport(
        model_id=model.model_id,
        mode=mode,
        eps0_bound=eps0,
        epsA_bound=eps_a,
        epsD_bound=eps_d,
        theta=model.mu * model.delta**2,
        inputs=inputs,
    )
    logger.info(
        f"{model.model_id} {mode.value} bound: eps0={eps0:.6g} epsA={eps_a:.6g} "
        f"epsD={eps_d:.6g} total={report.total:.6g}"
    )
    return report


def ssc_probes(model: JSQModel) -> list[TimeProbe]:
    return [
        TimeProbe(f"ssc:{i}", lambda s, i=i: float(sum(s.queues)) if s.queues[i] == 0 else 0.0)
        for i in range(model.stations)
    ]


def ssc_estimate(model: JSQModel, acc: PalmAccumulators) -> EstimateCI:
    """E(1(Q_i=0) sum_j Q_j), averaged over the servers."""
    if not isinstance(model, JSQModel):
        raise ModelMismatchError(f"state-space collapse needs a JSQ model, got {model.model_id}")
    n = model.stations
    result = combine([(1.0 / n, time_series(acc, f"ssc:{i}")) for i in range(n)])
    logger.info(f"{model.model_id}: SSC term {result} at delta={model.delta:.6g}")
    return result
