"""Report figures: sweep rate charts, trial trajectories, margin maps.

Everything renders through the Agg backend straight to files; no display is
assumed. Figure helpers return matplotlib Figure objects so tests can
inspect them, and save_figure writes them out at a fixed dpi.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle

from . import certify, models
from .models import MANIPULATOR

_DPI = 130


def save_figure(fig, path) -> str:
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def sweep_figures(res, stem: str) -> list:
    """Rate chart(s) for a sweep table; returns the written paths."""
    coll, inf = res.rates()
    n_rows, n_cols = coll.shape
    if n_rows == 1 or n_cols == 1:
        labels = list(res.col_labels if n_rows == 1 else res.row_labels)
        c = coll.ravel()
        i = inf.ravel()
        xs = np.arange(len(labels))
        fig, ax = plt.subplots(figsize=(1.6 * len(labels) + 2.5, 4.0))
        ax.bar(xs - 0.18, c, width=0.36, label="collision %", color="#c0392b")
        ax.bar(xs + 0.18, i, width=0.36, label="infeasibility %", color="#7f8c8d")
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, rotation=20, ha="right")
        ax.set_ylim(0, 100)
        ax.set_ylabel("rate over trials [%]")
        ax.set_title(f"table {res.table}: {res.trials_per_cell} trials per cell")
        ax.legend()
        ax.grid(axis="y", alpha=0.3)
        return [save_figure(fig, f"{stem}_rates.png")]

    fig, axes = plt.subplots(1, 2, figsize=(12.0, 4.8))
    for ax, data, title in (
        (axes[0], coll, "collision %"),
        (axes[1], inf, "infeasibility %"),
    ):
        im = ax.imshow(data, vmin=0, vmax=100, cmap="YlOrRd", aspect="auto")
        ax.set_xticks(range(n_cols))
        ax.set_xticklabels(res.col_labels, rotation=20, ha="right")
        ax.set_yticks(range(n_rows))
        ax.set_yticklabels(res.row_labels)
        for r in range(n_rows):
            for c2 in range(n_cols):
                ax.text(
                    c2,
                    r,
                    f"{data[r, c2]:.0f}",
                    ha="center",
                    va="center",
                    fontsize=9,
                    color="black",
                )
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.suptitle(f"table {res.table}: {res.trials_per_cell} trials per cell")
    return [save_figure(fig, f"{stem}_rates.png")]


def trajectory_figure(env, model, trace):
    """Workspace view: obstacles, path, start/goal, collision marks."""
    fig, ax = plt.subplots(figsize=(6.5, 6.5))
    for center in env.obstacle_centers:
        ax.add_patch(Circle(center, env.obstacle_radius, color="#555555", alpha=0.8))
        ax.add_patch(
            Circle(
                center,
                env.combined_radius,
                fill=False,
                linestyle="--",
                edgecolor="#999999",
                linewidth=0.8,
            )
        )
    states = [np.asarray(rec["x"]) for rec in trace]
    if model.kind == MANIPULATOR:
        path = np.array([models.end_effector(model, x) for x in states])
        if states:
            pts = models.joint_positions(model, states[-1])
            ax.plot(pts[:, 0], pts[:, 1], "-o", color="#2c3e50", linewidth=2.5)
        ax.plot(*model.base, marker="s", color="#2c3e50", markersize=9)
        start_point = models.end_effector(model, env.start_state)
    else:
        path = np.array([x[:2] for x in states])
        start_point = env.start_state[:2]
    if len(path):
        ax.plot(path[:, 0], path[:, 1], color="#2980b9", linewidth=1.5)
        hit = np.array([rec["clearance"] < 0.0 for rec in trace])
        if hit.any():
            ax.plot(path[hit, 0], path[hit, 1], "x", color="#c0392b", markersize=4)
    ax.plot(*start_point, marker="o", color="#27ae60", markersize=9, label="start")
    ax.plot(*env.goal, marker="*", color="#f39c12", markersize=14, label="goal")
    ax.set_xlim(-0.5, env.workspace + 0.5)
    ax.set_ylim(-0.5, env.workspace + 0.5)
    ax.set_aspect("equal")
    ax.legend(loc="upper right")
    ax.set_title(f"{model.kind}, seed {env.seed}")
    return fig


def margin_figure(model, barrier_list, gains, grid, restrict: str = "none"):
    """Signed margin map when exactly two grid axes vary; None otherwise."""
    varying = [i for i, (_, _, count) in enumerate(grid.dims) if count > 1]
    if len(varying) != 2 or grid.total > 500_000:
        return None
    states = np.concatenate(list(grid.chunks()), axis=0)
    margins = certify.min_margin(model, barrier_list, gains, states)
    mask = certify.restrict_mask(model, barrier_list, restrict, states)
    margins = np.where(mask, margins, np.nan)
    counts = [count for _, _, count in grid.dims]
    field = margins.reshape(counts).squeeze()
    ax_y, ax_x = varying  # first varying axis runs along rows
    ys = np.linspace(*grid.dims[ax_y][:2], grid.dims[ax_y][2])
    xs = np.linspace(*grid.dims[ax_x][:2], grid.dims[ax_x][2])

    fig, ax = plt.subplots(figsize=(7.0, 5.5))
    bound = np.nanmax(np.abs(field)) if np.isfinite(field).any() else 1.0
    im = ax.pcolormesh(
        xs, ys, field, cmap="RdBu", vmin=-bound, vmax=bound, shading="auto"
    )
    fig.colorbar(im, ax=ax, label="tightest row margin")
    if np.isfinite(field).any() and np.nanmin(field) < 0.0 < np.nanmax(field):
        ax.contour(xs, ys, field, levels=[0.0], colors="black", linewidths=1.2)
    ax.set_xlabel(f"state[{ax_x}]")
    ax.set_ylabel(f"state[{ax_y}]")
    ax.set_title(f"feasibility margin ({restrict} region)")
    return fig
