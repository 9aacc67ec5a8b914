"""Figure rendering for the CLI report paths (files only, Agg backend)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import PolyCollection

__all__ = [
    "plot_mesh",
    "plot_convergence",
    "plot_cell_field",
    "plot_fivespot",
    "plot_random_field",
]

_PNG_META = {"Software": "mfmfe"}


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)


def plot_mesh(mesh, path, title=None):
    fig, ax = plt.subplots(figsize=(5, 5))
    polys = mesh.vertices[mesh.cells]
    ax.add_collection(
        PolyCollection(polys, facecolors="none", edgecolors="k", linewidths=0.4)
    )
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_convergence(report, path, title=None):
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    h = report.h
    series = [
        ("pressure L2", report.e_p, "o-"),
        ("pressure centers", report.e_p_centers, "s-"),
        ("velocity L2", report.e_u, "^-"),
        ("velocity faces", report.e_u_face, "v-"),
    ]
    for label, vals, style in series:
        ax.loglog(h, vals, style, label=label)
    ref = report.e_p[0] * (h / h[0])
    ax.loglog(h, ref, "k--", linewidth=0.8, label="order 1")
    ax.loglog(h, report.e_p_centers[0] * (h / h[0]) ** 2, "k:", linewidth=0.8, label="order 2")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_cell_field(mesh, values, path, title=None, cmap="viridis", log=False):
    fig, ax = plt.subplots(figsize=(5.5, 4.6))
    _cell_field_axes(ax, mesh, values, cmap, fig)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    _save(fig, path)


def _cell_field_axes(ax, mesh, values, cmap, fig):
    polys = mesh.vertices[mesh.cells]
    pc = PolyCollection(polys, cmap=cmap)
    pc.set_array(np.asarray(values))
    ax.add_collection(pc)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    fig.colorbar(pc, ax=ax, shrink=0.85)
    return pc


def plot_fivespot(result, path):
    """Pressure and log-velocity panels (plus log-permeability when present)."""
    panels = [("pressure", result.pressure, "viridis")]
    if result.log_permeability is not None:
        panels.insert(0, ("log permeability", result.log_permeability, "magma"))
    panels.append(("log10 |velocity|", result.log_speed, "plasma"))
    fig, axes = plt.subplots(1, len(panels), figsize=(4.6 * len(panels), 4.2))
    if len(panels) == 1:
        axes = [axes]
    for ax, (title, vals, cmap) in zip(axes, panels):
        _cell_field_axes(ax, result.mesh, vals, cmap, fig)
        ax.set_aspect("equal")
        ax.set_title(title)
    _save(fig, path)


def plot_random_field(mesh, log_values, path, title="log permeability"):
    plot_cell_field(mesh, log_values, path, title=title, cmap="magma")
