"""Offline figures from run CSVs.

Four figure kinds cover the standard views of a run: ``curve`` (episode
length or return, mean across seeds with a shaded deviation band),
``dominance`` (dominant-option usage over training frames), ``heatmap``
(per-option attention over the grid), and ``usage`` (per-option execution
frequency over the grid, darker meaning more frequent).

Rendering is a pure function of the CSV contents and the spec: the same
inputs produce byte-identical images under a fixed matplotlib version.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class PlotError(Exception):
    """Bad figure spec or CSV input."""


KINDS = ("curve", "heatmap", "usage", "dominance")
CURVE_METRICS = ("length", "return")

# one panel per option, laid out in a row
_PANEL_SIZE = 2.2
_DPI = 120


@dataclass
class FigureSpec:
    """Everything needed to render one figure.

    ``input`` is a CSV written by the run harness. Spatial kinds (heatmap,
    usage) also need the run's ``layout.csv`` to place states on the grid.
    ``band_k`` scales the shaded mean +/- k*std band on curve kinds.
    """

    kind: str
    input: str
    out: str
    layout: str | None = None
    band_k: float = 0.5
    metric: str = "length"
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if self.metric not in CURVE_METRICS:
            raise PlotError(
                f"unknown curve metric {self.metric!r}; expected one of {CURVE_METRICS}"
            )
        if self.band_k < 0:
            raise PlotError(f"band_k must be non-negative, got {self.band_k}")
        if self.kind in ("heatmap", "usage") and not self.layout:
            raise PlotError(f"{self.kind} figures need a layout CSV")

    @classmethod
    def from_json(cls, path) -> "FigureSpec":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except FileNotFoundError:
            raise PlotError(f"spec file not found: {path}")
        except json.JSONDecodeError as err:
            raise PlotError(f"spec file {path} is not valid JSON: {err}")
        if not isinstance(d, dict):
            raise PlotError(f"spec file {path} must hold a JSON object")
        allowed = {"kind", "input", "out", "layout", "band_k", "metric", "title"}
        unknown = set(d) - allowed
        if unknown:
            raise PlotError(f"spec file {path} has unknown keys: {sorted(unknown)}")
        missing = {"kind", "input", "out"} - set(d)
        if missing:
            raise PlotError(f"spec file {path} is missing keys: {sorted(missing)}")
        return cls(**d)


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise PlotError(f"input CSV not found: {path}")
    if not rows:
        raise PlotError(f"{path} has no data rows")
    return rows


def _require_columns(rows, needed, path):
    have = set(rows[0])
    missing = [c for c in needed if c not in have]
    if missing:
        raise PlotError(
            f"{path} is missing columns {missing}; found {sorted(have)}"
        )


def _option_columns(rows, path):
    cols = sorted(
        (c for c in rows[0] if c.startswith("option_")),
        key=lambda c: int(c.split("_")[1]),
    )
    if not cols:
        raise PlotError(f"{path} has no option_<i> columns; found {sorted(rows[0])}")
    return cols


def _float(rows, col):
    return np.array([float(r[col]) for r in rows])


def _band(ax, x, mean, std, k, color):
    ax.plot(x, mean, color=color, linewidth=1.5)
    if k > 0:
        ax.fill_between(x, mean - k * std, mean + k * std, color=color, alpha=0.25)


def _curve_figure(spec):
    rows = _read_csv(spec.input)
    mean_col, std_col = f"{spec.metric}_mean", f"{spec.metric}_std"
    _require_columns(rows, ["episode", mean_col, std_col], spec.input)
    x = _float(rows, "episode")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    _band(ax, x, _float(rows, mean_col), _float(rows, std_col), spec.band_k, "tab:blue")
    ax.set_xlabel("episode")
    ax.set_ylabel("steps per episode" if spec.metric == "length" else "return")
    ax.set_title(spec.title or f"{spec.metric} (mean ± {spec.band_k:g} std)")
    fig.tight_layout()
    return fig


def _dominance_figure(spec):
    rows = _read_csv(spec.input)
    _require_columns(rows, ["frames", "dominant_mean", "dominant_std"], spec.input)
    x = _float(rows, "frames")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    _band(
        ax, x, _float(rows, "dominant_mean"), _float(rows, "dominant_std"),
        spec.band_k, "tab:orange",
    )
    ax.set_xlabel("frames")
    ax.set_ylabel("dominant option usage")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(spec.title or "dominant-option usage")
    fig.tight_layout()
    return fig


def _read_layout(path):
    rows = _read_csv(path)
    _require_columns(rows, ["row", "col", "wall", "state"], path)
    height = max(int(r["row"]) for r in rows) + 1
    width = max(int(r["col"]) for r in rows) + 1
    state_cells = {}
    for r in rows:
        if r["wall"] == "0":
            state_cells[int(r["state"])] = (int(r["row"]), int(r["col"]))
    return height, width, state_cells


def _grid_figure(spec, *, cmap, vmax_mode):
    rows = _read_csv(spec.input)
    _require_columns(rows, ["state"], spec.input)
    opt_cols = _option_columns(rows, spec.input)
    height, width, state_cells = _read_layout(spec.layout)
    if len(rows) != len(state_cells):
        raise PlotError(
            f"{spec.input} has {len(rows)} states but {spec.layout} "
            f"defines {len(state_cells)}"
        )

    n_opt = len(opt_cols)
    fig, axes = plt.subplots(
        1, n_opt, figsize=(_PANEL_SIZE * n_opt, _PANEL_SIZE), squeeze=False
    )
    colormap = plt.get_cmap(cmap).copy()
    colormap.set_bad("#202020")
    for i, col in enumerate(opt_cols):
        grid = np.full((height, width), np.nan)
        for r in rows:
            rr, cc = state_cells[int(r["state"])]
            grid[rr, cc] = float(r[col])
        vmax = 1.0
        if vmax_mode == "data":
            top = np.nanmax(grid)
            vmax = top if top > 0 and math.isfinite(top) else 1.0
        ax = axes[0, i]
        ax.imshow(grid, cmap=colormap, vmin=0.0, vmax=vmax, interpolation="nearest")
        ax.set_title(col.replace("_", " "), fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return fig


def build_figure(spec: FigureSpec):
    """Build the matplotlib figure for a spec without saving it."""
    if spec.kind == "curve":
        return _curve_figure(spec)
    if spec.kind == "dominance":
        return _dominance_figure(spec)
    if spec.kind == "heatmap":
        return _grid_figure(spec, cmap="viridis", vmax_mode="unit")
    return _grid_figure(spec, cmap="Blues", vmax_mode="data")


def render(spec: FigureSpec) -> Path:
    """Render the figure to ``spec.out`` and return the written path."""
    fig = build_figure(spec)
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, dpi=_DPI, metadata={"Software": None})
    finally:
        plt.close(fig)
    return out
