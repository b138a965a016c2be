import numpy as np
import pytest

from steinbar.lib.sim.engine import simulate
from steinbar.lib.sim.probes import EventProbe, TimeProbe
from steinbar.models import (
    BoundInputs,
    BoundMode,
    BoundReport,
    CoefficientRow,
    DecayFit,
    DriftMode,
    EstimateCI,
    IdentityReport,
    IdentityRow,
    TermReport,
    TermRow,
    W1Row,
)
from steinbar.repos import report_table
from steinbar.repos.base import format_cell, get_csv_writer, read_rows


def test_format_cell():
    assert format_cell(None) == ""
    assert format_cell(True) == "true"
    assert format_cell(np.bool_(False)) == "false"
    assert format_cell(0.1) == "0.1"
    assert format_cell(np.float64(1 / 3)) == repr(1 / 3)
    assert format_cell(np.int64(7)) == "7"
    assert format_cell("gg1") == "gg1"


def test_writer_checks_row_width(tmp_path):
    with pytest.raises(ValueError):
        with get_csv_writer(tmp_path / "t.csv", ["a", "b"]) as w:
            w.writerow([1])


def test_writer_creates_parent_directories(tmp_path):
    path = tmp_path / "nested" / "dir" / "t.csv"
    with get_csv_writer(path, ["a"]) as w:
        w.writerows([[1], [2]])
        assert w.rows == 2
    assert path.read_text() == "a\n1\n2\n"


def test_identity_csv(tmp_path):
    report = IdentityReport(
        model_id="gg1[x]",
        se_multiple=3.0,
        rows=[
            IdentityRow(
                identity_id="EA(1)=lambda",
                estimate=0.5,
                half_width=0.01,
                std_error=0.004,
                target=0.5,
                passed=True,
            )
        ],
    )
    path = report_table.write_identity_reports(tmp_path / "identities.csv", [report])
    rows = read_rows(path)
    assert list(rows[0]) == report_table.IDENTITY_COLUMNS
    assert rows[0]["identity_id"] == "EA(1)=lambda"
    assert rows[0]["pass"] == "true"
    assert rows[0]["one_sided"] == "false"


def test_term_csv_ends_with_the_residual(tmp_path):
    report = TermReport(
        model_id="m",
        f_id="r_a",
        terms=[
            TermRow(f_id="r_a", term_id="drift:r_a", estimate=-1.0, half_width=0.0, std_error=0.0),
            TermRow(f_id="r_a", term_id="jump:A", estimate=1.0, half_width=0.1, std_error=0.03),
        ],
        residual=EstimateCI(point=0.0, half_width=0.1, std_error=0.03, batches=32),
    )
    rows = read_rows(report_table.write_term_reports(tmp_path / "bar_terms.csv", [report]))
    assert [r["term_id"] for r in rows] == ["drift:r_a", "jump:A", "residual"]
    assert rows[0]["pass"] == ""
    assert rows[-1]["pass"] == "true"


def test_bound_csv(tmp_path):
    inputs = BoundInputs(
        delta=0.5,
        lam=0.5,
        mu=1.0,
        scv_u=1.0,
        scv_s=1.0,
        eu2=8.0,
        eu3=48.0,
        es2=2.0,
        abs_cubed_u=0.4,
        abs_cubed_s=0.4,
        sigma2=0.375,
        conditional_residual=2.0,
    )
    report = BoundReport(
        model_id="m",
        mode=BoundMode.CRUDE,
        eps0_bound=2.0,
        epsA_bound=1.0,
        epsD_bound=0.5,
        theta=0.25,
        inputs=inputs,
    )
    row = read_rows(report_table.write_bound_reports(tmp_path / "bounds.csv", [report]))[0]
    assert row["mode"] == "crude"
    assert float(row["total"]) == 3.5
    assert float(row["sigma2"]) == 0.375


def test_w1_and_decay_csv(tmp_path):
    rows = [
        W1Row(config_id="c", delta=0.1, w1=0.05, w1_ci=0.01, bound_total=3.0, passed=True),
        W1Row(config_id="c", delta=0.05, w1=0.02, w1_ci=0.01, bound_total=None, passed=None),
    ]
    out = read_rows(report_table.write_w1_rows(tmp_path / "w1.csv", rows))
    assert out[1]["bound_total"] == ""
    assert out[1]["pass"] == ""
    fit = DecayFit(slope=1.02, std_error=0.03, intercept=-0.7, points=3)
    decay = read_rows(report_table.write_decay_fits(tmp_path / "decay.csv", [("simulated", fit)]))
    assert decay == [{"source": "simulated", "slope": "1.02", "std_error": "0.03", "points": "3"}]


def test_coefficient_csv(tmp_path):
    rows = [CoefficientRow(name="drift1", expansion=-0.04, srbm=-0.04, passed=True)]
    out = read_rows(
        report_table.write_coefficients(
            tmp_path / "tandem_coefficients.csv",
            "tandem[x]",
            [(DriftMode.GENERATOR_CONSISTENT, rows)],
        )
    )
    assert out[0]["drift_mode"] == "generator_consistent"
    assert out[0]["pass"] == "true"


def test_run_report_and_estimates_are_byte_identical(tmp_path, mm1):
    probes = [
        TimeProbe("q", lambda s: float(s.queues[0])),
        EventProbe("one", "A", lambda e, a: 1.0),
    ]

    def write(name: str):
        acc = simulate(mm1, 10_000, probes=probes, seed=3, batches=8)
        report_table.write_run_report(tmp_path / name / "run_report.csv", [(3, acc)])
        report_table.write_estimates(tmp_path / name / "estimates.csv", acc)

    write("a")
    write("b")
    for name in ("run_report.csv", "estimates.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    estimates = read_rows(tmp_path / "a" / "estimates.csv")
    keys = [(r["probe_id"], r["process"]) for r in estimates]
    assert keys == [("q", "time"), ("rate", "A"), ("rate", "D"), ("rate", "D1"), ("one", "A")]
    run = read_rows(tmp_path / "a" / "run_report.csv")[0]
    assert run["seed"] == "3"
    assert run["events"] == "10000"
    assert run["tie_risk"] == "false"
