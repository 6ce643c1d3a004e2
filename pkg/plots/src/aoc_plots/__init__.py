"""Figure generation for option-critic run CSVs."""

from .figures import KINDS, FigureSpec, PlotError, build_figure, render

__all__ = ["KINDS", "FigureSpec", "PlotError", "build_figure", "render"]
