"""figurekit: publication-style figures from photonloop CLI CSV outputs."""

from .panels import (
    EmptyDataError,
    FigureKitError,
    GridMismatchError,
    MissingColumnError,
    PanelSpec,
    load_histogram_csv,
    load_panel,
)
from .render import (
    build_histogram_figure,
    build_sweep_figure,
    plot_histograms,
    plot_sweep,
)

__all__ = [
    "EmptyDataError",
    "FigureKitError",
    "GridMismatchError",
    "MissingColumnError",
    "PanelSpec",
    "load_histogram_csv",
    "load_panel",
    "build_histogram_figure",
    "build_sweep_figure",
    "plot_histograms",
    "plot_sweep",
]
