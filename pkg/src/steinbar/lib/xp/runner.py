"""
One function per ``xp`` subcommand. Each takes a validated ExperimentConfig
and an output directory, writes its CSV reports and returns whether every
enabled assertion passed. Exploratory results are logged only.
"""

import os
from pathlib import Path

import numpy as np
from loguru import logger

from steinbar.errors import (
    DegenerateDiffusionError,
    InsufficientDataError,
    ModelMismatchError,
    UnstableModelError,
)
from steinbar.lib.bounds import diffusion_params, ssc_estimate, error_bounds
from steinbar.lib.checks.bar import (
    compensated_bar_terms,
    extraction_check,
    full_bar_terms,
    lorden_check,
    tandem_coefficient_check,
    zero_mean_jump_check,
)
from steinbar.lib.checks.identities import check_identities, conditional_residual_estimate
from steinbar.lib.clocks import scaled
from steinbar.lib.rbm import (
    check_path,
    regulator_rate,
    srbm_simulate,
    srbm_stationary_samples,
    stationary_mean,
)
from steinbar.lib.sim.engine import stationary_samples
from steinbar.lib.sim.palm import batch_means_ci, palm_inversion_check
from steinbar.lib.stein import (
    PiecewiseLinear,
    check_factors,
    expected_h_monte_carlo,
    random_lipschitz,
    solve_poisson,
    stein_grid,
)
from steinbar.lib.wasserstein import (
    decay_fit,
    w1_empirical_vs_exponential,
    w1_geometric_vs_exponential,
)
from steinbar.lib.xp.config import ExperimentConfig
from steinbar.lib.xp.replicate import (
    bar_functions,
    check_selection,
    compensated_functions,
    run_replications,
)
from steinbar.models import (
    BoundMode,
    BoundReport,
    DiffusionParams1D,
    DriftMode,
    ExponentialClock,
    GG1Model,
    JSQModel,
    ModelSpec,
    TandemModel,
    W1Row,
)
from steinbar.repos import report_table
from steinbar.utils.config import get_config
from steinbar.utils.paths import OUT_DIR_ENV, PROJECT_DIR, default_out_dir
from steinbar.utils.plots import plot_directory


def resolve_out_dir(config: ExperimentConfig, override: str | None = None) -> Path:
    """--out-dir, then the experiment document, then $STEINBAR_OUT_DIR, then config.toml."""
    if override:
        return Path(override)
    if config.output.out_dir:
        return Path(config.output.out_dir)
    if os.environ.get(OUT_DIR_ENV):
        return default_out_dir()
    return PROJECT_DIR / get_config("output")["out_dir"]


def at_utilization(model: ModelSpec, rho: float) -> ModelSpec:
    """The model with every service clock rescaled so that max_i rho_i = rho."""
    if not 0 < rho < 1:
        raise UnstableModelError(rho, model.model_id)
    factor = rho / model.rho
    match model:
        case GG1Model() | JSQModel():
            return model.model_copy(update={"service": scaled(model.service, factor)})
        case TandemModel():
            return model.model_copy(
                update={
                    "service1": scaled(model.service1, factor),
                    "service2": scaled(model.service2, factor),
                }
            )
    raise ModelMismatchError(f"cannot rescale {model!r}")


def _se_multiple(config: ExperimentConfig) -> float:
    return config.checks.se_multiple or get_config("estimation")["se_multiple"]


def _require_gg1(model: ModelSpec, command: str) -> GG1Model:
    if not isinstance(model, GG1Model):
        raise ModelMismatchError(f"{command} needs a G/G/1 model, got {model.model_id}")
    return model


def _maybe_plot(config: ExperimentConfig, out_dir: Path):
    if config.output.plots and get_config("output")["plots"]:
        plot_directory(out_dir)


def _verdict(command: str, model_id: str, passed: bool) -> bool:
    if passed:
        logger.info(f"{command} {model_id}: all checks pass")
    else:
        logger.error(f"{command} {model_id}: checks failed")
    return passed


def run_simulate(config: ExperimentConfig, out_dir: Path) -> bool:
    reps = run_replications(config, ("identities", "palm"), out_dir=out_dir)
    report_table.write_run_report(out_dir / "run_report.csv", reps.runs)
    report_table.write_estimates(out_dir / "estimates.csv", reps.merged)
    return True


def run_identities(config: ExperimentConfig, out_dir: Path) -> bool:
    model, checks = config.model, config.checks
    k = _se_multiple(config)
    sets = ("identities", "palm") if checks.palm else ("identities",)
    reps = run_replications(config, sets, out_dir=out_dir)
    reports = [
        check_identities(
            model, reps.merged, checks.m_values, se_multiple=k, allow_ties=checks.allow_ties
        )
    ]
    if checks.palm:
        reports.append(palm_inversion_check(model, reps.merged, checks.palm_functions, k))
    if isinstance(model, GG1Model):
        conditional_residual_estimate(model, reps.merged)
    report_table.write_run_report(out_dir / "run_report.csv", reps.runs)
    report_table.write_identity_reports(out_dir / "identities.csv", reports)
    _maybe_plot(config, out_dir)
    return _verdict("identities", model.model_id, all(r.passed for r in reports))


def run_bar(config: ExperimentConfig, out_dir: Path) -> bool:
    model, bar = config.model, config.checks.bar
    k = _se_multiple(config)
    check_selection(model, bar.functions)
    reps = run_replications(config, out_dir=out_dir)
    acc = reps.merged

    terms = []
    if bar.full:
        terms += [full_bar_terms(model, fn, acc, k) for fn in bar_functions(model, config.checks)]
    compensated = compensated_functions(model, config.checks)
    if bar.compensated:
        terms += [compensated_bar_terms(model, fn, acc, k) for fn in compensated]
    identities = []
    if bar.zero_mean:
        identities.append(zero_mean_jump_check(model, acc, k))
    extractions = []
    if isinstance(model, (GG1Model, JSQModel)):
        if bar.extraction:
            extractions = [extraction_check(model, fn, acc, k) for fn in compensated]
            extractions = [r for r in extractions if r.rows]
        if bar.lorden and isinstance(model, GG1Model):
            identities.append(lorden_check(model, acc, k))

    passed = all(t.passed for t in terms) and all(r.passed for r in identities)
    passed = passed and all(r.passed for r in extractions)
    if isinstance(model, TandemModel):
        by_mode = [(mode, tandem_coefficient_check(model, mode)) for mode in DriftMode]
        report_table.write_coefficients(
            out_dir / "tandem_coefficients.csv", model.model_id, by_mode
        )
        asserted = dict(by_mode)[config.checks.rbm.drift_mode]
        passed = passed and all(r.passed for r in asserted)

    report_table.write_run_report(out_dir / "run_report.csv", reps.runs)
    report_table.write_term_reports(out_dir / "bar_terms.csv", terms)
    if identities:
        report_table.write_identity_reports(out_dir / "identities.csv", identities)
    if extractions:
        report_table.write_extraction_reports(out_dir / "extraction.csv", extractions)
    return _verdict("bar", model.model_id, passed)


def run_stein(config: ExperimentConfig, out_dir: Path) -> bool:
    stein = config.checks.stein
    k = _se_multiple(config)
    models = [config.model]
    if stein.rhos:
        models = [at_utilization(config.model, rho) for rho in stein.rhos]
    rng = np.random.default_rng(stein.seed)
    rows = []
    passed = True
    for m, model in enumerate(models):
        params = diffusion_params(model)
        if not isinstance(params, DiffusionParams1D):
            raise ModelMismatchError(f"the Stein solver is one-dimensional, got {model.model_id}")
        hs = [PiecewiseLinear.capped(2.0)] + [
            random_lipschitz(rng, stein.pieces, stein.span, h_id=f"random{j}")
            for j in range(stein.random_h)
        ]
        for h in hs:
            sol = solve_poisson(h, params)
            grid = stein_grid(sol, stein.grid_points)
            factors = check_factors(sol, grid)
            rows.append(factors)
            passed = passed and factors.passed
            if stein.monte_carlo > 0:
                mc = expected_h_monte_carlo(h, params.beta, stein.monte_carlo, stein.seed)
                agrees = mc.within(sol.expected, k)
                logger.info(
                    f"{model.model_id} {h.h_id}: E h(Y) closed form {sol.expected:.6g}, "
                    f"Monte Carlo {mc}"
                )
                passed = passed and agrees
        if m == 0:
            sol = solve_poisson(hs[0], params)
            report_table.write_stein_grid(
                out_dir / "stein_grid.csv", sol, stein_grid(sol, stein.grid_points)
            )
    report_table.write_stein_factors(out_dir / "stein_factors.csv", rows)
    logger.info(f"Stein factors: {sum(r.passed for r in rows)}/{len(rows)} solutions pass")
    return _verdict("stein", config.model.model_id, passed)


def _bound_for(config: ExperimentConfig, model: GG1Model) -> BoundReport:
    bound = config.checks.bound
    if bound.mode == BoundMode.CRUDE:
        return error_bounds(model, BoundMode.CRUDE)
    if bound.conditional_residual is not None:
        return error_bounds(model, BoundMode.SIMULATED, bound.conditional_residual)
    reps = run_replications(config, ("identities",), model=model)
    residual = conditional_residual_estimate(model, reps.merged)
    return error_bounds(model, BoundMode.SIMULATED, residual)


def run_bound(config: ExperimentConfig, out_dir: Path) -> bool:
    model = _require_gg1(config.model, "bound")
    report = _bound_for(config, model)
    report_table.write_bound_reports(out_dir / "bounds.csv", [report])
    return True


def _w1_cell(config: ExperimentConfig, model: GG1Model) -> tuple[W1Row, BoundReport]:
    """Empirical W1 of delta*Q against the exponential law, next to the bound."""
    run, w1 = config.run, config.checks.w1
    bound = _bound_for(config, model)
    params = diffusion_params(model)
    if params.degenerate:
        raise DegenerateDiffusionError(
            f"{model.model_id}: sigma2 = 0, no exponential approximation"
        )
    states = stationary_samples(model, run.samples, run.spacing_events, run.burn_in, run.seed)
    x = np.array([model.delta * s.queues[0] for s in states])
    est = w1_empirical_vs_exponential(
        x, params.beta, w1.resamples, block_size=w1.block_size, seed=run.seed
    )
    passed = est.point <= bound.total + _se_multiple(config) * est.std_error
    logger.info(
        f"{model.model_id}: W1 {est} vs bound {bound.total:.6g} at delta={model.delta:.4g}"
    )
    row = W1Row(
        config_id=config.config_id,
        delta=model.delta,
        w1=est.point,
        w1_ci=est.half_width,
        bound_total=bound.total,
        passed=passed,
    )
    return row, bound


def run_w1(config: ExperimentConfig, out_dir: Path) -> bool:
    model = _require_gg1(config.model, "w1")
    row, bound = _w1_cell(config, model)
    report_table.write_w1_rows(out_dir / "w1.csv", [row])
    report_table.write_bound_reports(out_dir / "bounds.csv", [bound])
    _maybe_plot(config, out_dir)
    return _verdict("w1", model.model_id, bool(row.passed))


def _in_range(value: float, bounds: tuple[float, float]) -> bool:
    return bounds[0] <= value <= bounds[1]


def _is_mm1(model: ModelSpec) -> bool:
    return isinstance(model, GG1Model) and all(
        isinstance(c, ExponentialClock) for c in (model.arrival, model.service)
    )


def _sweep_gg1(config: ExperimentConfig, out_dir: Path) -> bool:
    sweep = config.checks.sweep
    if len(sweep.rhos) < 3:
        raise InsufficientDataError(f"decay fit needs at least 3 rho values, got {sweep.rhos}")
    models = [at_utilization(config.model, rho) for rho in sweep.rhos]
    cells = [_w1_cell(config, m) for m in models]
    rows = [row for row, _ in cells]
    fit = decay_fit([(r.delta, r.w1) for r in rows])
    fits = [("simulated", fit)]
    passed = all(r.passed for r in rows) and _in_range(fit.slope, sweep.slope_range)
    if _is_mm1(config.model):
        oracle = [
            (m.delta, w1_geometric_vs_exponential(m.rho, m.delta, diffusion_params(m).beta))
            for m in models
        ]
        oracle_fit = decay_fit(oracle)
        fits.append(("geometric", oracle_fit))
        passed = passed and _in_range(oracle_fit.slope, sweep.oracle_slope_range)
    report_table.write_w1_rows(out_dir / "w1.csv", rows)
    report_table.write_bound_reports(out_dir / "bounds.csv", [b for _, b in cells])
    report_table.write_decay_fits(out_dir / "decay.csv", fits)
    _maybe_plot(config, out_dir)
    return _verdict("sweep", config.model.model_id, passed)


def _sweep_jsq(config: ExperimentConfig, out_dir: Path) -> bool:
    rhos = config.checks.sweep.rhos
    if len(rhos) < 2:
        raise InsufficientDataError(f"a monotonicity check needs at least 2 rho values, got {rhos}")
    rows, runs = [], []
    for rho in sorted(rhos):
        model = at_utilization(config.model, rho)
        reps = run_replications(config, ("ssc",), model=model)
        runs += reps.runs
        rows.append((model.model_id, model.rho, model.delta, ssc_estimate(model, reps.merged)))
    points = [est.point for *_, est in rows]
    passed = all(a > b for a, b in zip(points, points[1:]))
    if not passed:
        logger.warning(f"SSC estimates are not strictly decreasing in rho: {points}")
    report_table.write_ssc_rows(out_dir / "ssc.csv", rows)
    report_table.write_run_report(out_dir / "run_report.csv", runs)
    return _verdict("sweep", config.model.model_id, passed)


def run_sweep(config: ExperimentConfig, out_dir: Path) -> bool:
    match config.model:
        case GG1Model():
            return _sweep_gg1(config, out_dir)
        case JSQModel():
            return _sweep_jsq(config, out_dir)
    raise ModelMismatchError(f"sweep handles G/G/1 and JSQ models, got {config.model.model_id}")


def run_rbm(config: ExperimentConfig, out_dir: Path) -> bool:
    model = config.model
    if not isinstance(model, TandemModel):
        raise ModelMismatchError(f"rbm needs a tandem model, got {model.model_id}")
    rbm, seed = config.checks.rbm, config.run.seed
    k = _se_multiple(config)
    dt = rbm.dt or get_config("rbm")["dt"]
    params = diffusion_params(model, rbm.drift_mode)

    by_mode = [(mode, tandem_coefficient_check(model, mode)) for mode in DriftMode]
    report_table.write_coefficients(out_dir / "tandem_coefficients.csv", model.model_id, by_mode)
    passed = all(r.passed for r in dict(by_mode)[rbm.drift_mode])

    path = srbm_simulate(params, dt, rbm.horizon, seed)
    path_ok = check_path(path)
    if not path_ok:
        logger.error(f"{model.model_id}: SRBM path breaks nonnegativity or complementarity")
    passed = passed and path_ok
    report_table.write_srbm_path(out_dir / "srbm_path.csv", path, rbm.path_every)
    logger.info(f"{model.model_id}: regulator rates {regulator_rate(path)} (exploratory)")

    samples = srbm_stationary_samples(params, dt, rbm.burn_in, rbm.samples, rbm.spacing, seed)
    mean = stationary_mean(samples)
    for i, (m, rho) in enumerate(zip(mean, model.rhos)):
        close = abs(m - rho) <= 0.1 * rho
        logger.info(
            f"{model.model_id}: E Y{i + 1} = {m:.4g} under {rbm.drift_mode.value} drift, "
            f"product-form reference rho{i + 1} = {rho:.4g} "
            f"({'within' if close else 'outside'} 10%, exploratory)"
        )

    if rbm.dt_halving:
        halved = srbm_stationary_samples(
            params, dt / 2, rbm.burn_in, rbm.samples, rbm.spacing, seed + 1
        )
        for i in range(2):
            a, b = batch_means_ci(samples[:, i]), batch_means_ci(halved[:, i])
            consistent = abs(a.point - b.point) <= k * (a.std_error + b.std_error)
            logger.info(f"{model.model_id}: E Y{i + 1} at dt {a}, at dt/2 {b}")
            passed = passed and consistent
    return _verdict("rbm", model.model_id, passed)


def run_plot(out_dir: Path) -> bool:
    plot_directory(out_dir)
    return True
