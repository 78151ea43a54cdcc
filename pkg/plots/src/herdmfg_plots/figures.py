"""Render convergence figures from harness aggregate CSVs.

Consumes only the aggregate CSV schema (columns ``k`` plus
``<metric>_mean`` / ``<metric>_std`` pairs) and a small JSON figure spec:

    {
      "inputs": [{"csv": "runs/env1/aggregate.csv", "label": "single-loop"}],
      "metrics": ["grad_proxy", "mu_residual_proxy"],
      "out": "figs/env1.png",
      "log_y": true
    }

Two metrics render as the stacked two-row layout (policy proxy on top,
mean-field residual below); one metric renders as a single panel.  Each
curve is the across-seed mean with a +-1 standard deviation band.  Both a
bitmap and a vector file are written.  Rendering is deterministic: fixed
style, fixed dpi, no timestamps in the figure itself.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.5,
    "svg.hashsalt": "herdmfg-plots",
}


class MissingColumnError(KeyError):
    def __init__(self, column: str, path: str):
        super().__init__(column)
        self.column = column
        self.path = path

    def __str__(self):
        return f"column {self.column!r} missing from {self.path}"


@dataclass(frozen=True)
class FigureSpec:
    """Inputs, metric columns and output target for one figure."""

    inputs: tuple[tuple[str, str], ...]  # (aggregate csv path, label)
    metrics: tuple[str, ...]
    out: str
    log_y: bool = True

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("at least one input CSV is required")
        if not self.metrics:
            raise ValueError("at least one metric column is required")


def load_figure_spec(path: str | Path) -> FigureSpec:
    data = json.loads(Path(path).read_text())
    return FigureSpec(
        inputs=tuple((entry["csv"], entry["label"]) for entry in data["inputs"]),
        metrics=tuple(data["metrics"]),
        out=data["out"],
        log_y=bool(data.get("log_y", True)),
    )


def read_aggregate(path: str | Path) -> dict[str, np.ndarray]:
    """Read an aggregate CSV into named columns (header + float rows)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [
            [float(x) for x in line.strip().split(",")] for line in fh if line.strip()
        ]
    data = np.asarray(rows)
    return {name: data[:, i] for i, name in enumerate(header)}


def _validate_columns(spec: FigureSpec, tables: dict[str, dict[str, np.ndarray]]) -> None:
    for path, _ in spec.inputs:
        table = tables[path]
        for metric in spec.metrics:
            for suffix in ("_mean", "_std"):
                if metric + suffix not in table:
                    raise MissingColumnError(metric + suffix, path)


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure for a spec (no files written)."""
    tables = {path: read_aggregate(path) for path, _ in spec.inputs}
    _validate_columns(spec, tables)
    n_rows = len(spec.metrics)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(
            n_rows, 1, figsize=(6.0, 2.8 * n_rows), sharex=True, squeeze=False
        )
        for row, metric in enumerate(spec.metrics):
            ax = axes[row, 0]
            for path, label in spec.inputs:
                table = tables[path]
                k = table["k"]
                mean = table[metric + "_mean"]
                std = table[metric + "_std"]
                ax.plot(k, mean, label=label)
                ax.fill_between(k, mean - std, mean + std, alpha=0.25)
            if spec.log_y:
                ax.set_yscale("log")
            ax.set_ylabel(metric)
            if row == 0 and len(spec.inputs) > 0:
                ax.legend(loc="best")
        axes[-1, 0].set_xlabel("iteration")
        fig.tight_layout()
    return fig


def plot_convergence(spec: FigureSpec) -> tuple[str, str]:
    """Render the figure; writes a bitmap and a vector file.

    The vector file sits next to the bitmap with an ``.svg`` suffix.
    Returns both paths.  Input CSVs are only ever opened for reading.
    """
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    vector = out.with_suffix(".svg")
    fig = build_figure(spec)
    with plt.rc_context(STYLE):
        fig.savefig(out, metadata={"Software": "herdmfg-plots"})
        fig.savefig(vector, metadata={"Date": None})
    plt.close(fig)
    return str(out), str(vector)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="herdmfg-plots", description="Convergence figures from harness CSVs"
    )
    parser.add_argument("--spec", required=True, help="path to a figure spec JSON")
    args = parser.parse_args(argv)
    try:
        spec = load_figure_spec(args.spec)
        bitmap, vector = plot_convergence(spec)
    except MissingColumnError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"invalid figure spec: {exc}", file=sys.stderr)
        return 2
    print(bitmap)
    print(vector)
    return 0


if __name__ == "__main__":
    sys.exit(main())
