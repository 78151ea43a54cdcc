"""Static convergence figures for herdmfg harness CSV logs."""

__version__ = "0.1.0"

from .figures import (
    FigureSpec,
    MissingColumnError,
    build_figure,
    load_figure_spec,
    plot_convergence,
    read_aggregate,
)
