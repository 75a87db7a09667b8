"""Tests for CSV rendering and plot script generation."""

from __future__ import annotations

import math

from dopplerfi.report import (
    METRIC_COLUMNS,
    render_csv,
    render_plot_script,
    write_csi_plot_script,
    write_csv,
    write_plot_script,
)


class TestRenderCsv:

    def test_header_and_cells(self):
        text = render_csv([{"a": 1, "b": 0.123456789, "c": "x"}], ["a", "b", "c"])
        assert text == "a,b,c\n1,0.123457,x\n"

    def test_missing_values_are_empty(self):
        text = render_csv([{"a": math.nan, "b": None}], ["a", "b", "c"])
        assert text.splitlines()[1] == ",,"

    def test_infinity(self):
        assert render_csv([{"snr": math.inf}], ["snr"]).splitlines()[1] == "inf"

    def test_no_rows(self):
        assert render_csv([], METRIC_COLUMNS) == ",".join(METRIC_COLUMNS) + "\n"

    def test_write_creates_parent(self, tmp_path):
        path = write_csv([{"x": 2}], ["x"], tmp_path / "nested" / "out.csv")
        assert path.read_text(encoding="utf-8") == "x\n2\n"


class TestPlotScripts:

    def test_render_is_valid_python(self):
        text = render_plot_script("sweep_snr_db.csv", "snr_db", ["ber", "pre_fec_ber"])
        compile(text, "plot.py", "exec")
        assert "'sweep_snr_db.csv'" in text
        assert "'sweep_snr_db.png'" in text
        assert "ber, pre_fec_ber vs snr_db" in text

    def test_custom_labels(self):
        text = render_plot_script("a.csv", "x", ["y"], title="T", y_label="Y")
        assert "ax.set_title('T')" in text
        assert "ax.set_ylabel('Y')" in text

    def test_write_next_to_csv(self, tmp_path):
        csv_path = write_csv([{"x": 1, "y": 2}], ["x", "y"], tmp_path / "run.csv")
        script = write_plot_script(csv_path, "x", ["y"])
        assert script == tmp_path / "plot_run.py"
        assert "'run.csv'" in script.read_text(encoding="utf-8")

    def test_csi_script(self, tmp_path):
        script = write_csi_plot_script(tmp_path / "b2w_csi.csv")
        assert script.name == "plot_b2w_csi.py"
        text = script.read_text(encoding="utf-8")
        compile(text, script.name, "exec")
        assert "'b2w_csi.png'" in text
