"""CSV-to-image rendering for the tomography figure series."""

__version__ = "0.1.0"

from .render import PlotSpec, build_figure, render
