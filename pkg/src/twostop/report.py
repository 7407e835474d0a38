"""Figure rendering for the command-line report paths.

Every function writes a PNG next to the delimited outputs.  Rendering is
forced through the Agg backend and strips the writer's software tag so that
repeated runs of the same configuration produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .numerics import ValueField

_DPI = 130


def _save(fig, path) -> None:
    fig.savefig(path, dpi=_DPI, metadata={"Software": None})
    plt.close(fig)


def _mass_remaining_slice(field: ValueField):
    """Collapse a value field to its (mass, remaining) face at elapsed 0."""
    names = field.axis_names
    vals = field.values
    if "elapsed" in names:
        vals = vals[:, 0, :]
    mass_ax = field.axes[0]
    rem_ax = field.axes[-1]
    return mass_ax.nodes(), rem_ax.nodes(), vals


def value_heatmap(field: ValueField, delay: ValueField, path, title: str) -> None:
    """Continuation value over (mass, remaining) with the stop region hatched
    in via the zero-delay contour."""
    mass, rem, vals = _mass_remaining_slice(field)
    _, _, dly = _mass_remaining_slice(delay)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    pc = ax.pcolormesh(rem, mass, vals, shading="auto", cmap="viridis")
    fig.colorbar(pc, ax=ax, label="continuation value")
    if np.any(dly > 1e-9) and np.any(dly <= 1e-9):
        ax.contour(rem, mass, (dly > 1e-9).astype(float), levels=[0.5],
                   colors="w", linewidths=1.2)
    ax.set_xlabel("remaining horizon")
    ax.set_ylabel("accumulated mass")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def switch_curve_plot(nodes: np.ndarray, values: np.ndarray,
                      slopes: np.ndarray, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.6, 3.2))
    ax1.plot(nodes, values)
    ax1.set_xlabel("remaining horizon at relocation")
    ax1.set_ylabel("fresh-start continuation value")
    ax2.plot(nodes, slopes)
    ax2.set_xlabel("remaining horizon at relocation")
    ax2.set_ylabel("left-difference slope")
    fig.tight_layout()
    _save(fig, path)


def boundary_plot(curves: dict[str, tuple[np.ndarray, np.ndarray]], path) -> None:
    """Stop/continue frontiers: mass threshold against remaining horizon."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, (rem, mass) in curves.items():
        ax.plot(rem, mass, label=label)
    ax.set_xlabel("remaining horizon")
    ax.set_ylabel("smallest immediately-stopping mass")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def decay_plot(ks: np.ndarray, residuals: np.ndarray, modulus: float, path) -> None:
    """Distance of the K-claim truncations to the fixed point, log scale."""
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    pos = residuals > 0
    ax.semilogy(ks[pos], residuals[pos], marker="o", label="measured")
    if residuals[pos].size:
        k0, r0 = ks[pos][0], residuals[pos][0]
        ax.semilogy(ks, r0 * modulus ** (ks - k0), "--",
                    label=f"geometric, ratio {modulus:.3f}")
    ax.set_xlabel("claims allowed")
    ax.set_ylabel("sup-norm distance to fixed point")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def sweep_plot(values: np.ndarray, totals: np.ndarray, parameter: str, path) -> None:
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.plot(values, totals, marker="o")
    ax.set_xlabel(parameter)
    ax.set_ylabel("total value")
    fig.tight_layout()
    _save(fig, path)


def payoff_histogram(payoffs: np.ndarray, mean: float, path) -> None:
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.hist(payoffs, bins=60, color="tab:blue", alpha=0.8)
    ax.axvline(mean, color="k", lw=1.2, label=f"mean {mean:.4f}")
    ax.set_xlabel("realized payoff")
    ax.set_ylabel("paths")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
