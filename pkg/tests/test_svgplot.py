"""SVG chart emission: structure counts, determinism, schema errors."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from concurve.errors import SchemaError
from concurve.svgplot import (
    plot_corr,
    plot_importance,
    plot_shapes,
    plot_tradeoff,
    plot_verbose,
)


def write(path, text):
    path.write_text(text)
    return path


def records_csv(tmp_path, n_lambdas=10, n_seeds=3):
    lines = ["lambda,seed,fit,rperp,wallclock_s"]
    for i in range(n_lambdas):
        lam = 0.0 if i == 0 else 10 ** (-3 + i * 0.3)
        for seed in range(n_seeds):
            fit = 1.0 + 0.01 * i + 0.001 * seed
            rp = 0.9 / (1 + i) + 0.002 * seed
            lines.append(f"{lam!r},{seed},{fit!r},{rp!r},1.000")
    return write(tmp_path / "records.csv", "\n".join(lines) + "\n")


class TestTradeoff:
    def test_marker_and_polyline_counts(self, tmp_path):
        svg = plot_tradeoff(records_csv(tmp_path, n_lambdas=10, n_seeds=3))
        root = ET.fromstring(svg)
        markers = [e for e in root.iter() if e.get("class") == "pt"]
        assert len(markers) == 30
        mean = [e for e in root.iter() if e.get("class") == "mean"]
        assert len(mean) == 1
        assert len(mean[0].get("points").split()) == 10

    def test_empty_records_render_no_data(self, tmp_path):
        path = write(tmp_path / "empty.csv", "lambda,seed,fit,rperp,wallclock_s\n")
        svg = plot_tradeoff(path)
        ET.fromstring(svg)
        assert "no data" in svg

    def test_byte_identical_across_reruns(self, tmp_path):
        path = records_csv(tmp_path)
        assert plot_tradeoff(path) == plot_tradeoff(path)

    def test_missing_column_names_row(self, tmp_path):
        path = write(tmp_path / "bad.csv", "lambda,seed,fit\n0.0,1,1.0\n")
        with pytest.raises(SchemaError, match="row 1"):
            plot_tradeoff(path)

    def test_non_numeric_cell_names_row(self, tmp_path):
        path = write(tmp_path / "bad.csv",
                     "lambda,seed,fit,rperp,wallclock_s\n0.0,1,oops,0.5,1.0\n")
        with pytest.raises(SchemaError, match="row 2"):
            plot_tradeoff(path)


class TestVerbose:
    def test_two_series_rendered(self, tmp_path):
        lines = ["metric,lambda,mean,q05,q95"]
        for lam in (0.0, 0.01, 0.1, 1.0):
            lines.append(f"fit,{lam!r},1.0,0.9,1.1")
            lines.append(f"rperp,{lam!r},0.5,0.4,0.6")
        path = write(tmp_path / "verbose.csv", "\n".join(lines) + "\n")
        svg = plot_verbose(path)
        root = ET.fromstring(svg)
        classes = {e.get("class") for e in root.iter()}
        assert {"mean-fit", "mean-rperp"} <= classes


class TestShapes:
    def shapes_csv(self, tmp_path, n_seeds=2):
        lines = ["feature,x,contribution,seed"]
        xs = np.linspace(0, 1, 16)
        for feature in ("x1", "x2"):
            for seed in range(n_seeds):
                for x in xs:
                    lines.append(f"{feature},{float(x)!r},{float(np.sin(x + seed))!r},{seed}")
        return write(tmp_path / "shapes.csv", "\n".join(lines) + "\n")

    def test_per_seed_lines_plus_mean(self, tmp_path):
        svg = plot_shapes(self.shapes_csv(tmp_path, n_seeds=3))
        root = ET.fromstring(svg)
        seed_lines = [e for e in root.iter() if e.get("class") == "seed-line"]
        mean_lines = [e for e in root.iter() if e.get("class") == "mean"]
        assert len(seed_lines) == 6   # 2 features x 3 seeds
        assert len(mean_lines) == 2

    def test_rug_strip(self, tmp_path):
        svg = plot_shapes(self.shapes_csv(tmp_path),
                          rug_values={"x1": np.array([0.2, 0.5, 0.8])})
        ET.fromstring(svg)


class TestImportance:
    def importance_csv(self, tmp_path):
        lines = ["seed,feature,importance"]
        rng = np.random.default_rng(4)
        for seed in range(8):
            for feature in ("x1", "x2", "x3"):
                lines.append(f"{seed},{feature},{rng.uniform(0.1, 1.0)!r}")
        return write(tmp_path / "importance.csv", "\n".join(lines) + "\n")

    def test_boxes_and_strips(self, tmp_path):
        svg = plot_importance(self.importance_csv(tmp_path))
        root = ET.fromstring(svg)
        boxes = [e for e in root.iter() if e.get("class") == "box"]
        strips = [e for e in root.iter() if e.get("class") == "strip"]
        assert len(boxes) == 3
        assert len(strips) == 24

    def test_jitter_is_seeded(self, tmp_path):
        path = self.importance_csv(tmp_path)
        assert plot_importance(path) == plot_importance(path)


class TestCorr:
    def test_identity_matrix_two_max_cells(self, tmp_path):
        path = write(tmp_path / "corr.csv",
                     "feature,a,b\na,1.0,0.0\nb,0.0,1.0\n")
        svg = plot_corr(path)
        root = ET.fromstring(svg)
        cells = [e for e in root.iter() if e.get("class") == "cell"]
        assert len(cells) == 4
        max_intensity = [c for c in cells if c.get("fill") == "rgb(178,24,43)"]
        assert len(max_intensity) == 2

    def test_non_square_rejected(self, tmp_path):
        path = write(tmp_path / "corr.csv", "feature,a,b\na,1.0,0.0\n")
        with pytest.raises(SchemaError):
            plot_corr(path)

    def test_ragged_row_number(self, tmp_path):
        path = write(tmp_path / "corr.csv", "feature,a,b\na,1.0\nb,0.0,1.0\n")
        with pytest.raises(SchemaError, match="row 2"):
            plot_corr(path)


class TestXmlValidity:
    def test_all_plots_parse(self, tmp_path):
        svgs = [
            plot_tradeoff(records_csv(tmp_path)),
            plot_corr(write(tmp_path / "c.csv", "feature,a,b\na,1.0,0.5\nb,0.5,1.0\n")),
        ]
        for svg in svgs:
            root = ET.fromstring(svg)
            assert root.tag.endswith("svg")
