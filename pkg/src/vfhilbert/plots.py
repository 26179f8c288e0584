"""Static SVG scatter plots of measured ratios against the stratum parameters."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PLOT_AXES = ("delta", "sigma", "k", "j")
LOG_AXES = {"delta", "sigma"}


def _configure():
    plt.rcParams["svg.hashsalt"] = "vfhilbert"
    plt.rcParams["svg.fonttype"] = "none"


def ratio_plot(rows, axis, path):
    """rows: dicts with inequality_id, ratio and the axis column (CSV strings or numbers)."""
    _configure()
    series = {}
    for row in rows:
        x = float(row[axis])
        y = float(row["ratio"])
        if axis in ("k", "j") and x < 0:
            continue
        if not (np.isfinite(x) and np.isfinite(y)) or y <= 0:
            continue
        if axis in LOG_AXES and x <= 0:
            continue
        series.setdefault(row["inequality_id"], ([], []))
        series[row["inequality_id"]][0].append(x)
        series[row["inequality_id"]][1].append(y)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in sorted(series):
        xs, ys = series[name]
        ax.scatter(xs, ys, s=8, label=name)
    ax.set_yscale("log")
    if axis in LOG_AXES:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(axis)
    ax.set_ylabel("LHS / RHS")
    if series:
        ax.legend(fontsize=6, loc="best")
    else:
        ax.text(0.5, 0.5, "no records", ha="center", va="center", transform=ax.transAxes)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_plots(rows, out_dir):
    paths = []
    for axis in PLOT_AXES:
        path = out_dir / f"ratio_vs_{axis}.svg"
        ratio_plot(rows, axis, path)
        paths.append(path)
    return paths
