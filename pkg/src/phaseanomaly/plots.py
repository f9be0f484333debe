"""SVG figures: loss curves, period marks and labelled prediction bars."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "phaseanomaly"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    fig.clf()


def loss_curves(record, path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    for net in record.nets:
        epochs = np.arange(net.first_epoch, net.first_epoch + net.epochs)
        ax.plot(epochs, net.train_loss, color="tab:blue", lw=1)
        ax.plot(epochs, net.val_loss, color="tab:orange", lw=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(["training", "validation"])
    _save(fig, path)
    plt.close(fig)


def period_marks(x: np.ndarray, marks: Sequence[int], path: str | Path, simple: Sequence[int] | None = None) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(10, 3))
    ax.plot(x, lw=0.8, color="black")
    for t in marks:
        ax.axvline(t, color="tab:red", lw=0.6)
    if simple is not None:
        for t in simple:
            ax.axvline(t, color="tab:green", lw=0.6, ls="--")
    ax.set_xlabel("t")
    _save(fig, path)
    plt.close(fig)


def prediction_bars(x: np.ndarray, predictions, n: int, path: str | Path, stride: int | None = None) -> None:
    """Signal trace; predicted classes drawn as bars above the axis, true labels below."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(10, 3))
    lim = float(np.max(np.abs(x))) or 1.0
    cmap = plt.get_cmap("tab10", max(n, 1))
    for p in predictions:
        width = stride or (p.end - p.start)
        ax.bar(p.start, lim, width=width, bottom=0, align="edge", color=cmap(p.predicted), alpha=0.35)
        ax.bar(p.start, -lim, width=width, bottom=0, align="edge", color=cmap(p.true), alpha=0.35)
    ax.plot(x, lw=0.8, color="black")
    ax.set_ylim(-lim, lim)
    ax.set_xlabel("t")
    _save(fig, path)
    plt.close(fig)
