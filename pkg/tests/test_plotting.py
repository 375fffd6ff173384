import re

import pytest

from esnfi.plotting import PlotError, export_plot, lines_from_importance_rows, render_svg


def polylines(svg):
    return [[tuple(map(float, p.split(","))) for p in pts.split()]
            for pts in re.findall(r'<polyline [^>]*points="([^"]*)"', svg)]


def test_constant_series_is_horizontal():
    (line,) = polylines(render_svg([("a", [1, 2, 3], [5.0, 5.0, 5.0])]))
    assert len({y for _, y in line}) == 1


def test_identical_series_coincide():
    svg = render_svg([("a", [1, 2, 3], [1, 3, 2]), ("b", [1, 2, 3], [1, 3, 2])])
    a, b = polylines(svg)
    assert a == b
    assert svg.count('class="legend"') == 2


def test_markers_and_determinism(tmp_path):
    lines = [("x", [1, 2, 3, 4], [0.1, 0.5, 0.2, 0.0])]
    p1 = export_plot(lines, tmp_path / "a.svg", markers=[2.5], title="t")
    p2 = export_plot(lines, tmp_path / "b.svg", markers=[2.5], title="t")
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().count('class="marker"') == 1


def test_errors(tmp_path):
    with pytest.raises(PlotError):
        render_svg([])
    with pytest.raises(PlotError):
        render_svg([("a", [], [])])
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        export_plot([("a", [1], [1])], blocker / "x.svg")


def test_lines_from_rows():
    header = ["variable", "method", "block_size", "forecast_time", "importance", "baseline_metric"]
    rows = [["A", "stZFI", "3", "2000-02", "1", "0"], ["A", "stZFI", "3", "2000-03", "2", "0"],
            ["B", "stZFI", "3", "2000-02", "0.5", "0"]]
    lines, labels, numeric = lines_from_importance_rows(header, rows)
    assert not numeric and labels == ["2000-02", "2000-03"]
    assert lines[0] == ("A stZFI b=3", [1, 2], [1.0, 2.0])
    with pytest.raises(PlotError):
        lines_from_importance_rows(header[:3], rows)
