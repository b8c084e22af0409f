"""Matplotlib rendering of the diagnostic tables.

Every figure here is a view of an already-emitted delimited table (or
training trace); the data files remain the primary artifact and the PNGs are
written next to them.  The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_marginal_grid(header, rows, path, title: str = "") -> None:
    """Filled contour plot of a (v_i, v_j, density) grid table."""
    rows = np.asarray(rows, dtype=float)
    v0 = np.unique(rows[:, 0])
    v1 = np.unique(rows[:, 1])
    # emit_marginal_grid rasterizes with the first axis slowest.
    density = rows[:, 2].reshape(v0.size, v1.size)
    fig, ax = plt.subplots(figsize=(5, 4))
    cs = ax.contourf(v0, v1, density.T, levels=20, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="density")
    ax.set_xlabel(header[0])
    ax.set_ylabel(header[1])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_correlation_scatter(header, rows, path, title: str = "") -> None:
    """Label-pair scatter colored by the predicted correlation."""
    rows = np.asarray(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    sc = ax.scatter(rows[:, 0], rows[:, 1], c=rows[:, 2], s=12,
                    cmap="coolwarm", vmin=-1.0, vmax=1.0)
    fig.colorbar(sc, ax=ax, label=header[2])
    ax.set_xlabel(header[0])
    ax.set_ylabel(header[1])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_trace(records, path, title: str = "") -> None:
    """Training/validation loss curves from EpochRecord entries."""
    epochs = [r.epoch for r in records]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(epochs, [r.train_loss for r in records], label="train")
    if any(r.val_loss is not None for r in records):
        ax.plot(epochs, [r.val_loss for r in records], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
