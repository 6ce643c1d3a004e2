import csv

import numpy as np
import pytest
from matplotlib.collections import PolyCollection

from aoc_plots import FigureSpec, PlotError, build_figure, render


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def curve_csv(tmp_path):
    rows = [
        [e + 1, 2, 100.0 - e, 5.0 + e, -(100.0 - e), 4.0]
        for e in range(50)
    ]
    return write_csv(
        tmp_path / "learning_curve.csv",
        ["episode", "n_seeds", "length_mean", "length_std", "return_mean", "return_std"],
        rows,
    )


@pytest.fixture
def dominance_csv(tmp_path):
    rows = [[f, 2, 0.4 + 0.01 * i, 0.05] for i, f in enumerate(range(0, 50_000, 10_000))]
    return write_csv(
        tmp_path / "dominance_curve.csv",
        ["frames", "n_seeds", "dominant_mean", "dominant_std"],
        rows,
    )


@pytest.fixture
def layout_csv(tmp_path):
    # 3x5 map with a 3-cell corridor
    rows = []
    for r in range(3):
        for c in range(5):
            wall = 0 if r == 1 and c in (1, 2, 3) else 1
            state = {1: 0, 2: 1, 3: 2}.get(c, -1) if not wall else -1
            rows.append([r, c, wall, state, -1])
    return write_csv(
        tmp_path / "layout.csv", ["row", "col", "wall", "state", "hallway"], rows
    )


def grid_csv(tmp_path, name, values):
    values = np.asarray(values)
    header = ["state"] + [f"option_{i}" for i in range(values.shape[1])]
    rows = [[s] + list(values[s]) for s in range(values.shape[0])]
    return write_csv(tmp_path / name, header, rows)


def test_curve_has_shaded_band(curve_csv, tmp_path):
    spec = FigureSpec(kind="curve", input=str(curve_csv), out=str(tmp_path / "c.png"))
    fig = build_figure(spec)
    ax = fig.axes[0]
    assert any(isinstance(c, PolyCollection) for c in ax.collections)
    assert ax.get_ylabel() == "steps per episode"

    out = render(spec)
    assert out.exists() and out.stat().st_size > 0


def test_curve_metric_and_zero_band(curve_csv, tmp_path):
    spec = FigureSpec(
        kind="curve", input=str(curve_csv), out=str(tmp_path / "r.png"),
        metric="return", band_k=0.0,
    )
    fig = build_figure(spec)
    ax = fig.axes[0]
    assert not any(isinstance(c, PolyCollection) for c in ax.collections)
    assert ax.get_ylabel() == "return"
    # the plotted line is the return_mean column
    y = ax.lines[0].get_ydata()
    assert y[0] == -100.0 and y[-1] == -51.0


def test_dominance_curve(dominance_csv, tmp_path):
    spec = FigureSpec(
        kind="dominance", input=str(dominance_csv), out=str(tmp_path / "d.png")
    )
    fig = build_figure(spec)
    ax = fig.axes[0]
    assert ax.get_ylim() == (0.0, 1.0)
    assert any(isinstance(c, PolyCollection) for c in ax.collections)
    assert render(spec).exists()


def test_heatmap_panel_per_option(layout_csv, tmp_path):
    h = [[0.1, 0.5, 0.9], [0.2, 0.6, 1.0], [0.3, 0.7, 0.0]]
    path = grid_csv(tmp_path, "attention_final.csv", h)
    spec = FigureSpec(
        kind="heatmap", input=str(path), layout=str(layout_csv),
        out=str(tmp_path / "h.png"),
    )
    fig = build_figure(spec)
    panels = [ax for ax in fig.axes if ax.images]
    assert len(panels) == 3
    img = panels[0].images[0].get_array()
    assert img.shape == (3, 5)
    # walls are masked, walkable cells carry the option column
    assert img.mask[0, 0] and not img.mask[1, 1]
    assert float(img[1, 1]) == 0.1 and float(img[1, 3]) == 0.3
    assert render(spec).exists()


def test_usage_all_zero_is_blank(layout_csv, tmp_path):
    path = grid_csv(tmp_path, "usage_final.csv", np.zeros((3, 2)))
    spec = FigureSpec(
        kind="usage", input=str(path), layout=str(layout_csv),
        out=str(tmp_path / "u.png"),
    )
    fig = build_figure(spec)
    panels = [ax for ax in fig.axes if ax.images]
    assert len(panels) == 2
    data = panels[0].images[0].get_array()
    assert float(np.nanmax(data.filled(0.0))) == 0.0
    assert render(spec).exists()


def test_column_mismatch_is_descriptive(curve_csv, tmp_path):
    rows = list(csv.reader(open(curve_csv)))
    rows[0].remove("length_std")
    broken = write_csv(tmp_path / "broken.csv", rows[0], [r[:-1] for r in rows[1:]])
    spec = FigureSpec(kind="curve", input=str(broken), out=str(tmp_path / "x.png"))
    with pytest.raises(PlotError) as err:
        build_figure(spec)
    assert "length_std" in str(err.value) and "broken.csv" in str(err.value)


def test_grid_state_count_mismatch(layout_csv, tmp_path):
    path = grid_csv(tmp_path, "attention_final.csv", np.zeros((5, 2)))
    spec = FigureSpec(
        kind="heatmap", input=str(path), layout=str(layout_csv),
        out=str(tmp_path / "x.png"),
    )
    with pytest.raises(PlotError) as err:
        build_figure(spec)
    assert "5 states" in str(err.value)


def test_spec_validation(tmp_path, curve_csv):
    with pytest.raises(PlotError):
        FigureSpec(kind="pie", input="a.csv", out="x.png")
    with pytest.raises(PlotError):
        FigureSpec(kind="curve", input="a.csv", out="x.png", metric="speed")
    with pytest.raises(PlotError):
        FigureSpec(kind="curve", input="a.csv", out="x.png", band_k=-1.0)
    with pytest.raises(PlotError):
        FigureSpec(kind="heatmap", input="a.csv", out="x.png")
    spec = FigureSpec(kind="curve", input=str(tmp_path / "gone.csv"), out="x.png")
    with pytest.raises(PlotError):
        build_figure(spec)


def test_spec_file_parsing(tmp_path, curve_csv):
    good = tmp_path / "spec.json"
    good.write_text(
        '{"kind": "curve", "input": "%s", "out": "%s", "band_k": 1.0}'
        % (curve_csv, tmp_path / "s.png")
    )
    spec = FigureSpec.from_json(good)
    assert spec.band_k == 1.0
    assert render(spec).exists()

    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "curve", "input": "a.csv"}')
    with pytest.raises(PlotError) as err:
        FigureSpec.from_json(bad)
    assert "out" in str(err.value)

    extra = tmp_path / "extra.json"
    extra.write_text('{"kind": "curve", "input": "a", "out": "b", "dpi": 300}')
    with pytest.raises(PlotError) as err:
        FigureSpec.from_json(extra)
    assert "dpi" in str(err.value)

    with pytest.raises(PlotError):
        FigureSpec.from_json(tmp_path / "missing.json")
    notjson = tmp_path / "notjson.json"
    notjson.write_text("kind: curve")
    with pytest.raises(PlotError):
        FigureSpec.from_json(notjson)


def test_render_is_deterministic(curve_csv, tmp_path):
    a = render(FigureSpec(kind="curve", input=str(curve_csv), out=str(tmp_path / "a.png")))
    b = render(FigureSpec(kind="curve", input=str(curve_csv), out=str(tmp_path / "b.png")))
    assert a.read_bytes() == b.read_bytes()
