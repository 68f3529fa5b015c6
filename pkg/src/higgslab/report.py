"""Figures for the runner: one PNG per plot table, rendered with the Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
}


def render(path, header, rows, x, y, logx=False, logy=False, title=""):
    """Plot columns y against column x of a table (header + rows)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    col = {h: i for i, h in enumerate(header)}
    data = np.array([[float(r[col[x]])] + [float(r[col[k]]) for k in y] for r in rows], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for j, name in enumerate(y):
            v = data[:, 1 + j] if data.size else np.array([])
            xs = data[:, 0] if data.size else np.array([])
            if logy:
                keep = np.isfinite(v) & (v > 0)
                xs, v = xs[keep], v[keep]
            ax.plot(xs, v, "o-", label=name)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(x)
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        # no timestamp metadata, so identical data give identical files
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path
