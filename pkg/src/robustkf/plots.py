"""Figure rendering for the CLI report paths.

Figures are built through the object API (no pyplot, no global backend
state) and rasterized by Agg, with the Software metadata stripped so a
rerun produces byte-identical PNG files.
"""

import io

import numpy as np
from matplotlib.figure import Figure

from .serialize import atomic_write_bytes

_DPI = 120


def save_figure(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=_DPI, metadata={"Software": None})
    atomic_write_bytes(path, buf.getvalue())


def density_figure(trace, r=None):
    """Ideal, contaminated, and contaminating densities over the grid."""
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.subplots()
    y = np.asarray(trace["y"])
    ax.plot(y, trace["p_id"], label="ideal", color="#1f77b4")
    ax.plot(y, trace["p_re"], label="contaminated", color="#2ca02c")
    ax.plot(y, trace["p_di"], label="contaminating", color="#d62728", linestyle="--")
    ax.set_xlabel("y")
    ax.set_ylabel("density")
    title = "observation densities at the worst case"
    if r is not None:
        title += f" (r = {r:g})"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return fig


def mse_figure(report):
    """Per-time MSE curves, one line per filter, with 2-se bands."""
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.subplots()
    for f in report["filters"]:
        mse = np.asarray(f["mse"], dtype=np.float64)
        se = np.asarray(f["se"], dtype=np.float64)
        t = np.arange(1, mse.size + 1)
        if mse.size == 1:
            ax.errorbar(t, mse, yerr=2 * se, fmt="o", capsize=4, label=f["name"])
        else:
            ax.plot(t, mse, label=f["name"])
            ax.fill_between(t, mse - 2 * se, mse + 2 * se, alpha=0.2)
    ax.set_xlabel("t")
    ax.set_ylabel("MSE")
    ax.set_title("empirical state MSE per step")
    ax.legend()
    fig.tight_layout()
    return fig
