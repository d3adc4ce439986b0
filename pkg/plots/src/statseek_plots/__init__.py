"""Figure regeneration for statseek experiment outputs."""

from .figures import (
    FigureSpec,
    PlotInputError,
    build_params_figure,
    build_sweep_figure,
    build_trace_figure,
    plot_params,
    plot_sweep,
    plot_trace,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "PlotInputError",
    "build_params_figure",
    "build_sweep_figure",
    "build_trace_figure",
    "plot_params",
    "plot_sweep",
    "plot_trace",
    "render",
]
