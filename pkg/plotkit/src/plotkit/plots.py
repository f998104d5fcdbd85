"""Figure rendering: metric-vs-iteration series, 2-D iterate trajectories,
and multi-variant comparison panels.

Every function returns a small structure dict (axes/series counts, labels,
output path) so callers can golden-check figures without image diffing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import TableError, read_table, require_columns


@dataclass
class SeriesSpec:
    input_path: str
    columns: list[str]
    scale: str = "linear"  # "linear" | "log-y"
    title: str = ""
    xlabel: str = "iteration"
    ylabel: str = ""
    output_path: str = "series.png"
    labels: dict = field(default_factory=dict)  # column -> legend label

    def __post_init__(self):
        if self.scale not in ("linear", "log-y"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if not self.columns:
            raise ValueError("at least one column to plot is required")


def _finish(fig, ax, path):
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_series(spec: SeriesSpec) -> dict:
    """Render one metric-vs-iteration figure; never modifies the input."""
    header, cols = read_table(spec.input_path)
    require_columns(header, cols, ["k"] + list(spec.columns))
    k = cols["k"]
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    drawn = 0
    for name in spec.columns:
        vals = cols[name]
        mask = np.isfinite(vals)
        if spec.scale == "log-y":
            mask &= vals > 0
        ax.plot(k[mask], vals[mask], label=spec.labels.get(name, name))
        drawn += 1
    if spec.scale == "log-y":
        ax.set_yscale("log")
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel or ", ".join(spec.columns))
    if spec.title:
        ax.set_title(spec.title)
    if drawn > 1 or spec.labels:
        ax.legend()
    _finish(fig, ax, spec.output_path)
    return {"path": spec.output_path, "axes": 1, "series": drawn,
            "scale": spec.scale, "columns": list(spec.columns)}


def plot_trajectory(records_path, dims=(0, 1), output_path="trajectory.png",
                    title="") -> dict:
    """2-D path of the iterates with start and end markers."""
    i, j = dims
    header, cols = read_table(records_path)
    xi, xj = f"x_{i}", f"x_{j}"
    require_columns(header, cols, [xi, xj])
    xs, ys = cols[xi], cols[xj]
    fig, ax = plt.subplots(figsize=(5.4, 5.0))
    ax.plot(xs, ys, "-", lw=1.2, color="tab:blue")
    ax.plot(xs[0], ys[0], "o", color="tab:green", label="start")
    ax.plot(xs[-1], ys[-1], "*", ms=12, color="tab:red", label="end")
    ax.set_xlabel(f"component {i}")
    ax.set_ylabel(f"component {j}")
    if title:
        ax.set_title(title)
    ax.legend()
    _finish(fig, ax, output_path)
    return {"path": output_path, "axes": 1, "series": 3, "dims": [i, j]}


def plot_compare(compare_path, metric="D", scale="log-y",
                 output_path="compare.png", title="") -> dict:
    """One labeled series per sweep variant for the chosen metric column."""
    header, cols = read_table(compare_path)
    require_columns(header, cols, ["k"])
    suffix = f"/{metric}"
    variant_cols = [name for name in header if name.endswith(suffix) and name in cols]
    if not variant_cols:
        raise TableError(f"no variant columns for metric {metric!r}")
    spec = SeriesSpec(
        input_path=compare_path,
        columns=variant_cols,
        scale=scale,
        ylabel=metric,
        title=title,
        output_path=output_path,
        labels={c: c[: -len(suffix)] for c in variant_cols},
    )
    out = plot_series(spec)
    out["metric"] = metric
    return out
