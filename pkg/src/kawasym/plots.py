"""Figure rendering for the report paths.

Every file-emitting command drops a PNG next to its delimited output unless
asked not to; the figures mirror the CSV contents (profile curves for the
integrated reductions, heatmaps for (t, x) grids).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .ode import ODESolution  # noqa: E402
from .reduction import GridSolution  # noqa: E402

__all__ = ["save_profile_plot", "save_grid_plot", "save_surface_plot"]

_DPI = 150


def save_profile_plot(sol: ODESolution, path, title: str = "") -> None:
    """Profile and first derivative of an integrated reduction."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ws = np.linspace(sol.span[0], sol.span[1], 600)
    ys = sol.eval_many(ws)
    ax.plot(ws, ys[:, 0], lw=1.4, label=r"$\varphi$")
    ax.plot(ws, ys[:, 1], lw=0.9, ls="--", label=r"$\varphi'$")
    ax.set_xlabel(r"$\omega$")
    ax.set_ylabel(r"$\varphi(\omega)$")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(frameon=False, fontsize=9)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_grid_plot(grid: GridSolution, path, title: str = "") -> None:
    """Heatmap of u(t, x); flagged points render blank."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    u = np.where(grid.valid, grid.u, np.nan)
    mesh = ax.pcolormesh(grid.x, grid.t, u, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="u")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_surface_plot(ts: np.ndarray, xs: np.ndarray, u: np.ndarray, path,
                      title: str = "") -> None:
    """Heatmap plus a few time slices for a closed-form evaluation grid."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.8))
    mesh = ax1.pcolormesh(xs, ts, u, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax1, label="u")
    ax1.set_xlabel("x")
    ax1.set_ylabel("t")
    for idx in np.linspace(0, len(ts) - 1, 4).astype(int):
        ax2.plot(xs, u[idx], lw=1.1, label=f"t = {ts[idx]:.3g}")
    ax2.set_xlabel("x")
    ax2.set_ylabel("u")
    ax2.legend(frameon=False, fontsize=8)
    ax2.spines["right"].set_visible(False)
    ax2.spines["top"].set_visible(False)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
