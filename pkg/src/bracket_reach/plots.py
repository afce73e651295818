"""Figure rendering for emitted paths.

Steering reports render a PNG alongside the CSV and manifest: the (x1, x2)
projection of the path with arcs coloured by generator, plus every
coordinate against cumulative arc time.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dpath import DPath

__all__ = ["render_dpath"]

_COLORS = plt.get_cmap("tab10")


def render_dpath(dpath: DPath, out_path, title: str = "") -> None:
    dim = dpath.start.shape[0]
    fig, (ax_xy, ax_t) = plt.subplots(1, 2, figsize=(10.0, 4.4))

    seen = set()
    for arc in dpath.arcs:
        color = _COLORS((arc.k - 1) % 10)
        label = None
        if arc.k not in seen:
            label = f"generator {arc.k}"
            seen.add(arc.k)
        ax_xy.plot(arc.points[:, 0], arc.points[:, 1], color=color, lw=1.4, label=label)
    ax_xy.plot([dpath.start[0]], [dpath.start[1]], "ko", ms=6, label="start")
    ax_xy.plot([dpath.endpoint[0]], [dpath.endpoint[1]], "k*", ms=10, label="endpoint")
    if dpath.target is not None:
        ax_xy.plot([dpath.target[0]], [dpath.target[1]], "rx", ms=8, label="target")
    ax_xy.set_xlabel("x1")
    ax_xy.set_ylabel("x2")
    ax_xy.set_title("(x1, x2) projection")
    ax_xy.legend(loc="best", fontsize=8)
    ax_xy.set_aspect("equal", adjustable="datalim")

    offset = 0.0
    for arc in dpath.arcs:
        ts = offset + np.abs(arc.times)
        for i in range(dim):
            ax_t.plot(ts, arc.points[:, i], color=_COLORS(i % 10), lw=1.0)
        offset = ts[-1]
    for i in range(dim):
        ax_t.plot([], [], color=_COLORS(i % 10), label=f"x{i + 1}")
    ax_t.set_xlabel("cumulative arc time")
    ax_t.set_ylabel("coordinates")
    ax_t.set_title("coordinates along the path")
    ax_t.legend(loc="best", fontsize=8)

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
