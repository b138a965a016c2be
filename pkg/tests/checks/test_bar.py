from unittest.mock import patch

import pytest

from steinbar.errors import ModelMismatchError
from steinbar.lib.checks.bar import (
    compensated,
    compensated_bar_terms,
    compensated_drift,
    compensated_library,
    compensated_probes,
    extraction_check,
    extraction_probes,
    full_bar_probes,
    full_bar_terms,
    jump_processes,
    lorden_check,
    tandem_coefficient_check,
    zero_mean_jump_check,
    zero_mean_jump_probes,
)
from steinbar.lib.checks.smooth_functions import scalar_library, state_library
from steinbar.lib.sim.engine import simulate
from steinbar.models import (
    DriftMode,
    ExponentialClock,
    GG1Model,
    JSQModel,
    SystemState,
    TandemModel,
)

SE_MULTIPLE = 4.5


def _exp(rate):
    return ExponentialClock(rate=rate)


def _bar_run(model, seed, events=100_000):
    probes = [
        *full_bar_probes(model, state_library(model)),
        *compensated_probes(model, compensated_library(model)),
        *zero_mean_jump_probes(model),
    ]
    if isinstance(model, (GG1Model, JSQModel)):
        probes += extraction_probes(model, scalar_library())
    return model, simulate(model, events, probes=probes, seed=seed)


@pytest.fixture(scope="module")
def mm1_bar():
    return _bar_run(GG1Model(arrival=_exp(0.5), service=_exp(1.0)), seed=31)


@pytest.fixture(scope="module")
def jsq_bar():
    return _bar_run(JSQModel(n=2, arrival=_exp(1.0), service=_exp(1.0)), seed=32)


@pytest.fixture(scope="module")
def tandem_bar():
    model = TandemModel(arrival=_exp(0.5), service1=_exp(1.0), service2=_exp(1.0))
    return _bar_run(model, seed=33)


def test_jump_processes(mm1, tandem):
    assert jump_processes(mm1) == ("A", "D1")
    assert jump_processes(tandem) == ("A", "D1", "D2")


def test_compensated_value_and_drift(mm1, tandem):
    state = SystemState(queues=[4], r_a=1.0, r_s=[0.5])
    # 0.5 * 4 - 0.5 * 0.5 * 1.0 + 0.5 * 1.0 * 0.5
    assert compensated(mm1, state) == pytest.approx(2.0)
    assert compensated_drift(mm1, state) == pytest.approx(0.5 * (0.5 - 1.0))
    idle = SystemState(queues=[0], r_a=1.0, r_s=[0.5])
    assert compensated_drift(mm1, idle) == pytest.approx(0.25)

    pair = SystemState(queues=[1, 0], r_a=1.0, r_s=[0.5, 2.0])
    x1, x2 = compensated(tandem, pair)
    assert x1 == pytest.approx(0.5 - 0.25 + 0.25)
    assert x2 == pytest.approx(-0.25 + 1.0)
    assert compensated_drift(tandem, pair) == pytest.approx((0.5 * -0.5, 0.5))


def test_compensated_value_moves_at_its_drift(mm1):
    end = SystemState(queues=[2], r_a=0.7, r_s=[0.4])
    start = SystemState(queues=[2], r_a=0.9, r_s=[0.6])
    slope = (compensated(mm1, end) - compensated(mm1, start)) / 0.2
    assert slope == pytest.approx(compensated_drift(mm1, end))


def test_compensated_library_includes_the_stein_solution(mm1, tandem):
    ids = [fn.f_id for fn in compensated_library(mm1)]
    assert "stein[min(x,2)]" in ids
    assert len(ids) == len(scalar_library()) + 1
    assert len(compensated_library(tandem)) == 7


@pytest.mark.parametrize("fixture", ["mm1_bar", "jsq_bar", "tandem_bar"])
def test_full_bar_holds(fixture, request):
    model, acc = request.getfixturevalue(fixture)
    for fn in state_library(model):
        report = full_bar_terms(model, fn, acc, se_multiple=SE_MULTIPLE)
        assert report.passed, f"{fn.f_id}: {report.residual}"
        assert [t.term_id for t in report.terms][:2] == ["drift:r_a", "drift:r_s"]


def test_full_bar_terms_for_r_a(mm1_bar):
    model, acc = mm1_bar
    fn = {f.f_id: f for f in state_library(model)}["r_a"]
    terms = {t.term_id: t for t in full_bar_terms(model, fn, acc).terms}
    # -E 1 + lambda E U = 0
    assert terms["drift:r_a"].estimate == pytest.approx(-1.0)
    assert terms["jump:A"].estimate == pytest.approx(1.0, abs=5 * terms["jump:A"].std_error)


@pytest.mark.parametrize("fixture", ["mm1_bar", "jsq_bar", "tandem_bar"])
def test_compensated_bar_holds(fixture, request):
    model, acc = request.getfixturevalue(fixture)
    for fn in compensated_library(model):
        report = compensated_bar_terms(model, fn, acc, se_multiple=SE_MULTIPLE)
        assert report.passed, f"{fn.f_id}: {report.residual}"


@pytest.mark.parametrize("fixture", ["mm1_bar", "jsq_bar", "tandem_bar"])
def test_zero_mean_jumps(fixture, request):
    model, acc = request.getfixturevalue(fixture)
    report = zero_mean_jump_check(model, acc, se_multiple=SE_MULTIPLE)
    assert report.passed
    expected = 4 if isinstance(model, TandemModel) else model.stations + 1
    assert len(report.rows) == expected


@pytest.mark.parametrize("fixture", ["mm1_bar", "jsq_bar"])
def test_extraction_majorants_hold(fixture, request):
    model, acc = request.getfixturevalue(fixture)
    for fn in scalar_library():
        report = extraction_check(model, fn, acc, se_multiple=SE_MULTIPLE)
        if not fn.extractable:
            assert report.rows == []
            continue
        assert len(report.rows) == 2 + model.stations
        failing = [(r.term_id, r.difference.point, r.majorant) for r in report.rows if not r.passed]
        assert failing == [], fn.f_id


def test_extraction_term_ids(jsq_bar):
    model, acc = jsq_bar
    fn = {f.f_id: f for f in scalar_library()}["sin"]
    ids = [r.term_id for r in extraction_check(model, fn, acc).rows]
    assert ids == ["eps0", "epsA", "epsD1", "epsD2"]


@patch("steinbar.lib.checks.bar.logger")
def test_extraction_skips_unbounded_functions(mock_logger, mm1_bar):
    model, acc = mm1_bar
    cubic = {f.f_id: f for f in scalar_library()}["cubic"]
    report = extraction_check(model, cubic, acc)
    assert report.passed
    mock_logger.warning.assert_any_call(
        f"{model.model_id}: cubic has no finite sup norms, extraction skipped"
    )


def test_extraction_is_not_defined_for_the_tandem(tandem):
    with pytest.raises(ModelMismatchError):
        extraction_probes(tandem, scalar_library())


def test_lorden_bounds_hold(mm1_bar, jsq2):
    model, acc = mm1_bar
    report = lorden_check(model, acc, se_multiple=SE_MULTIPLE)
    assert report.passed
    assert all(r.one_sided for r in report.rows)
    with pytest.raises(ModelMismatchError):
        lorden_check(jsq2, acc)


def test_tandem_coefficients_generator_consistent():
    model = TandemModel(arrival=_exp(0.8), service1=_exp(1.0), service2=_exp(1.0))
    rows = tandem_coefficient_check(model, DriftMode.GENERATOR_CONSISTENT)
    assert len(rows) == 9
    assert all(r.passed for r in rows)


@patch("steinbar.lib.checks.bar.logger")
def test_tandem_coefficients_literal_drift_disagrees(mock_logger, tandem):
    rows = {r.name: r for r in tandem_coefficient_check(tandem, DriftMode.LITERAL)}
    assert not rows["drift1"].passed
    assert rows["drift1"].expansion == pytest.approx(-0.25)
    assert rows["drift1"].srbm == pytest.approx(-0.5)
    assert rows["diffusion11"].passed
    assert rows["boundary1:x2"].passed
    mock_logger.warning.assert_called()


def test_coefficient_check_needs_a_tandem(mm1):
    with pytest.raises(ModelMismatchError):
        tandem_coefficient_check(mm1)
