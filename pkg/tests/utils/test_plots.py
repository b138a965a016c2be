from unittest.mock import patch

from steinbar.models import IdentityReport, IdentityRow, W1Row
from steinbar.repos.report_table import write_identity_reports, write_w1_rows
from steinbar.utils.plots import plot_directory


def _write_inputs(out_dir):
    write_w1_rows(
        out_dir / "w1.csv",
        [
            W1Row(config_id="mm1", delta=d, w1=d / 2, w1_ci=d / 20, bound_total=3 * d, passed=True)
            for d in (0.2, 0.1, 0.05)
        ],
    )
    rows = [
        IdentityRow(
            identity_id=f"row{k}",
            estimate=1.0 + 0.01 * k,
            half_width=0.05,
            std_error=0.02,
            target=1.0,
            passed=k != 2,
        )
        for k in range(4)
    ]
    write_identity_reports(
        out_dir / "identities.csv", [IdentityReport(model_id="m", se_multiple=3.0, rows=rows)]
    )


def test_plot_directory_writes_both_figures(tmp_path):
    _write_inputs(tmp_path)
    written = plot_directory(tmp_path)
    assert [p.name for p in written] == ["w1_vs_delta.svg", "identity_forest.svg"]
    svg = (tmp_path / "w1_vs_delta.svg").read_text()
    assert svg.lstrip().startswith("<?xml")
    assert "<dc:date>" not in svg


def test_figures_are_byte_identical_across_runs(tmp_path):
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        _write_inputs(tmp_path / name)
        plot_directory(tmp_path / name)
    for svg in ("w1_vs_delta.svg", "identity_forest.svg"):
        assert (tmp_path / "a" / svg).read_bytes() == (tmp_path / "b" / svg).read_bytes()


@patch("steinbar.utils.plots.logger")
def test_empty_directory(mock_logger, tmp_path):
    assert plot_directory(tmp_path) == []
    mock_logger.warning.assert_called_once()
