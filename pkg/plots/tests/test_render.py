import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from risplots import FigureSpec, SchemaError, render, render_spec_file

GOLDEN = Path(__file__).parent / "golden"


def spec_for(kind, input_name, out_dir, **kw):
    return FigureSpec(kind=kind, input=str(GOLDEN / input_name),
                      output=str(out_dir / f"{kind}_{input_name}.png"), **kw)


class TestGoldenFigures:
    def test_all_six_figures_render(self, tmp_path):
        # copy the golden tree so outputs land in the temp dir
        work = tmp_path / "golden"
        shutil.copytree(GOLDEN, work)
        infos = render_spec_file(work / "figures.json")
        assert len(infos) == 6
        for info in infos:
            out = Path(info.output)
            assert out.exists() and out.stat().st_size > 0

    def test_cdf_terminates_at_one(self, tmp_path):
        info = render(spec_for("cdf", "cdf.csv", tmp_path))
        assert info.terminal_cdf == pytest.approx(1.0)

    def test_heatmap_log_scale_spans_decades(self, tmp_path):
        # the golden optimized-phase map spans well over two decades
        rows = (GOLDEN / "peb_optimized.csv").read_text().splitlines()[1:]
        vals = np.array([float(r.split(",")[-1]) for r in rows])
        data_span = np.log10(vals.max() / vals.min())
        info = render(spec_for("heatmap", "peb_optimized.csv", tmp_path))
        if data_span >= 2.0:
            assert info.color_span_decades >= 2.0
        assert info.color_span_decades == pytest.approx(data_span)

    def test_deterministic_bytes(self, tmp_path):
        s1 = spec_for("sweep", "sweep.csv", tmp_path, value_column="rmse")
        render(s1)
        first = Path(s1.output).read_bytes()
        render(s1)
        assert Path(s1.output).read_bytes() == first

    def test_trace_views(self, tmp_path):
        info = render(spec_for("trace", "trace.csv", tmp_path, log_y=False))
        assert info.n_points > 0


class TestValidation:
    def test_empty_csv_no_figure(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("schema_version,n_ris,power_dbm,pn_var,trials,rmse,"
                         "median_pos_error,mean_joint_cfo_pn_mse,"
                         "median_joint_cfo_pn_mse,mean_peb,mean_hcrlb_cfo_pn,"
                         "converged_fraction\n")
        out = tmp_path / "fig.png"
        with pytest.raises(SchemaError):
            render(FigureSpec(kind="sweep", input=str(empty), output=str(out)))
        assert not out.exists()

    def test_missing_column_reported(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        with pytest.raises(SchemaError) as err:
            render(FigureSpec(kind="heatmap", input=str(bad),
                              output=str(tmp_path / "f.png")))
        assert "peb" in str(err.value)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            FigureSpec(kind="pie", input="a.csv", output="b.png")

    def test_wrong_value_column(self, tmp_path):
        with pytest.raises(SchemaError):
            render(FigureSpec(kind="sweep", input=str(GOLDEN / "sweep.csv"),
                              output=str(tmp_path / "f.png"),
                              value_column="not_a_column"))
