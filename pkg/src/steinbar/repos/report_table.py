from pathlib import Path
from typing import Iterable, Sequence

from steinbar.lib.sim.palm import estimate, event_series, rate_series, time_series, window_series
from steinbar.lib.stein import SteinFactors, SteinSolution
from steinbar.models import (
    BoundReport,
    CoefficientRow,
    DecayFit,
    DriftMode,
    EstimateCI,
    ExtractionReport,
    IdentityReport,
    PalmAccumulators,
    SRBMPath,
    TermReport,
    W1Row,
)
from steinbar.repos.base import get_csv_writer

IDENTITY_COLUMNS = [
    "model_id",
    "identity_id",
    "estimate",
    "half_width",
    "std_error",
    "target",
    "one_sided",
    "exploratory",
    "pass",
]
TERM_COLUMNS = ["model", "f_id", "term_id", "estimate", "half_width", "pass"]
EXTRACTION_COLUMNS = [
    "model",
    "f_id",
    "term_id",
    "lhs",
    "main_term",
    "difference",
    "half_width",
    "majorant",
    "pass",
]
BOUND_COLUMNS = [
    "model_id",
    "mode",
    "eps0",
    "epsA",
    "epsD",
    "total",
    "theta",
    "sigma2",
    "delta",
]
W1_COLUMNS = ["config_id", "delta", "w1", "w1_ci", "bound_total", "pass"]
DECAY_COLUMNS = ["source", "slope", "std_error", "points"]
SSC_COLUMNS = ["model_id", "rho", "delta", "point", "half_width", "batches"]
STEIN_COLUMNS = [
    "h_id",
    "theta",
    "sigma2",
    "sup_f2",
    "bound_f2",
    "sup_f3",
    "bound_f3",
    "ode_residual",
    "fprime0",
    "pass",
]
RUN_COLUMNS = [
    "model_id",
    "seed",
    "events",
    "burn_in",
    "horizon",
    "regenerations",
    "ties",
    "tie_risk",
    "dropped_windows",
]
ESTIMATE_COLUMNS = ["probe_id", "process", "point", "half_width", "batches"]
COEFFICIENT_COLUMNS = ["model_id", "drift_mode", "name", "expansion", "srbm", "pass"]
PATH_COLUMNS = ["t", "y1", "y2", "i1", "i2"]
STEIN_GRID_COLUMNS = ["x", "f", "f1", "f2", "f3"]


def write_identity_reports(path: Path, reports: Iterable[IdentityReport]) -> Path:
    with get_csv_writer(path, IDENTITY_COLUMNS) as w:
        for report in reports:
            for r in report.rows:
                w.writerow(
                    [
                        report.model_id,
                        r.identity_id,
                        r.estimate,
                        r.half_width,
                        r.std_error,
                        r.target,
                        r.one_sided,
                        r.exploratory,
                        r.passed,
                    ]
                )
    return path


def write_term_reports(path: Path, reports: Iterable[TermReport]) -> Path:
    """One row per BAR term, then a ``residual`` row carrying the verdict."""
    with get_csv_writer(path, TERM_COLUMNS) as w:
        for report in reports:
            for t in report.terms:
                w.writerow([report.model_id, t.f_id, t.term_id, t.estimate, t.half_width, None])
            w.writerow(
                [
                    report.model_id,
                    report.f_id,
                    "residual",
                    report.residual.point,
                    report.residual.half_width,
                    report.passed,
                ]
            )
    return path


def write_extraction_reports(path: Path, reports: Iterable[ExtractionReport]) -> Path:
    with get_csv_writer(path, EXTRACTION_COLUMNS) as w:
        for report in reports:
            for r in report.rows:
                w.writerow(
                    [
                        report.model_id,
                        r.f_id,
                        r.term_id,
                        r.lhs,
                        r.main_term,
                        r.difference.point,
                        r.difference.half_width,
                        r.majorant,
                        r.passed,
                    ]
                )
    return path


def write_bound_reports(path: Path, reports: Iterable[BoundReport]) -> Path:
    with get_csv_writer(path, BOUND_COLUMNS) as w:
        for b in reports:
            w.writerow(
                [
                    b.model_id,
                    b.mode.value,
                    b.eps0_bound,
                    b.epsA_bound,
                    b.epsD_bound,
                    b.total,
                    b.theta,
                    b.sigma2,
                    b.delta,
                ]
            )
    return path


def write_w1_rows(path: Path, rows: Iterable[W1Row]) -> Path:
    with get_csv_writer(path, W1_COLUMNS) as w:
        for r in rows:
            w.writerow([r.config_id, r.delta, r.w1, r.w1_ci, r.bound_total, r.passed])
    return path


def write_decay_fits(path: Path, fits: Iterable[tuple[str, DecayFit]]) -> Path:
    with get_csv_writer(path, DECAY_COLUMNS) as w:
        for source, fit in fits:
            w.writerow([source, fit.slope, fit.std_error, fit.points])
    return path


def write_ssc_rows(path: Path, rows: Iterable[tuple[str, float, float, EstimateCI]]) -> Path:
    with get_csv_writer(path, SSC_COLUMNS) as w:
        for model_id, rho, delta, est in rows:
            w.writerow([model_id, rho, delta, est.point, est.half_width, est.batches])
    return path


def write_stein_factors(path: Path, rows: Iterable[SteinFactors]) -> Path:
    with get_csv_writer(path, STEIN_COLUMNS) as w:
        for r in rows:
            w.writerow(
                [
                    r.h_id,
                    r.theta,
                    r.sigma2,
                    r.sup_f2,
                    r.bound_f2,
                    r.sup_f3,
                    r.bound_f3,
                    r.ode_residual,
                    r.fprime0,
                    r.passed,
                ]
            )
    return path


def write_stein_grid(path: Path, sol: SteinSolution, grid: Sequence[float]) -> Path:
    with get_csv_writer(path, STEIN_GRID_COLUMNS) as w:
        for x in map(float, grid):
            w.writerow([x, sol.f(x), sol.d1(x), sol.d2(x), sol.d3(x)])
    return path


def write_run_report(path: Path, runs: Iterable[tuple[int, PalmAccumulators]]) -> Path:
    with get_csv_writer(path, RUN_COLUMNS) as w:
        for seed, acc in runs:
            w.writerow(
                [
                    acc.model_id,
                    seed,
                    acc.events,
                    acc.burn_in_events,
                    acc.horizon,
                    acc.regenerations,
                    acc.ties,
                    acc.tie_risk,
                    sum(acc.dropped_windows.values()),
                ]
            )
    return path


def write_estimates(path: Path, acc: PalmAccumulators) -> Path:
    """Every accumulated quantity as a per-unit-time estimate."""
    with get_csv_writer(path, ESTIMATE_COLUMNS) as w:

        def row(probe_id: str, process: str, est: EstimateCI):
            w.writerow([probe_id, process, est.point, est.half_width, est.batches])

        for key in sorted(acc.time_sums):
            row(key, "time", estimate(time_series(acc, key)))
        for process in sorted(acc.event_counts):
            row("rate", process, estimate(rate_series(acc, process)))
        for full_key in sorted(acc.event_sums):
            process, key = full_key.split(":", 1)
            row(key, process, estimate(event_series(acc, key, process)))
        for full_key in sorted(acc.window_sums):
            process, key = full_key.split(":", 1)
            row(key, f"window:{process}", estimate(window_series(acc, key, process)))
    return path


def write_coefficients(
    path: Path, model_id: str, rows_by_mode: Iterable[tuple[DriftMode, list[CoefficientRow]]]
) -> Path:
    with get_csv_writer(path, COEFFICIENT_COLUMNS) as w:
        for mode, rows in rows_by_mode:
            for r in rows:
                w.writerow([model_id, mode.value, r.name, r.expansion, r.srbm, r.passed])
    return path


def write_srbm_path(path: Path, srbm: SRBMPath, every: int = 1) -> Path:
    regulator = srbm.regulator
    with get_csv_writer(path, PATH_COLUMNS) as w:
        for k in range(0, len(srbm.y_tilde), every):
            y1, y2 = srbm.y[k]
            i1, i2 = regulator[k]
            w.writerow([k * srbm.dt, float(y1), float(y2), float(i1), float(i2)])
    return path
