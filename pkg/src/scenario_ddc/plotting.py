"""Figure rendering for sweep results and consistent-set rasters.

Figures are written to files next to the CSV outputs; they are a viewing
convenience, the CSVs remain the canonical record.
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def heatmap_figure(rows, x_field: str, path, title: str = "") -> None:
    """Dot-grid summary of a sweep: color = stability, size = feasibility.

    Cells where no repetition was feasible are drawn as crosses.
    """
    xs = sorted({getattr(r, x_field) for r in rows})
    ns = sorted({r.N for r in rows})
    x_pos = {v: i for i, v in enumerate(xs)}
    n_pos = {v: i for i, v in enumerate(ns)}
    fig, ax = plt.subplots(figsize=(1.2 * len(xs) + 2.4, 0.8 * len(ns) + 1.8))
    scatter = None
    for r in rows:
        x, y = x_pos[getattr(r, x_field)], n_pos[r.N]
        if r.feas_freq == 0.0 or r.stab_freq is None:
            ax.plot(x, y, marker="x", color="0.4", markersize=9)
            continue
        scatter = ax.scatter(
            [x], [y], s=60 + 340 * r.feas_freq, c=[r.stab_freq],
            cmap="viridis", vmin=0.0, vmax=1.0, edgecolors="k", linewidths=0.5,
        )
    ax.set_xticks(range(len(xs)))
    ax.set_xticklabels([f"{v:g}" for v in xs])
    ax.set_yticks(range(len(ns)))
    ax.set_yticklabels([str(v) for v in ns])
    ax.set_xlabel(x_field)
    ax.set_ylabel("N")
    ax.set_xlim(-0.6, len(xs) - 0.4)
    ax.set_ylim(-0.6, len(ns) - 0.4)
    if title:
        ax.set_title(title)
    if scatter is not None:
        fig.colorbar(scatter, ax=ax, label="stability frequency")
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)


def rasters_figure(rasters_by_M, truth, path) -> None:
    """Grid of membership masks: one row per horizon, one column per seed."""
    horizons = sorted(rasters_by_M)
    n_seeds = max(len(v) for v in rasters_by_M.values())
    fig, axes = plt.subplots(
        len(horizons), n_seeds,
        figsize=(2.2 * n_seeds, 2.2 * len(horizons)),
        squeeze=False,
    )
    for i, M in enumerate(horizons):
        for j, raster in enumerate(rasters_by_M[M]):
            ax = axes[i][j]
            extent = [
                raster.b_values[0], raster.b_values[-1],
                raster.a_values[0], raster.a_values[-1],
            ]
            ax.imshow(
                raster.mask, origin="lower", extent=extent, aspect="auto",
                cmap="Blues", vmin=0, vmax=1,
            )
            ax.plot(truth[1], truth[0], marker="*", color="crimson", markersize=7)
            if j == 0:
                ax.set_ylabel(f"M={M}\nA")
            if i == len(horizons) - 1:
                ax.set_xlabel("B")
            ax.tick_params(labelsize=7)
        for j in range(len(rasters_by_M[M]), n_seeds):
            axes[i][j].axis("off")
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)
