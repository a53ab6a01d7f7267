"""Optional PNG figures for the CLI (matplotlib, headless backend)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_history(history, path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    epochs = [r.epoch for r in history]
    ax.plot(epochs, [r.train_loss for r in history], label="train")
    ax.plot(epochs, [r.val_loss for r in history], label="validation")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_inpaint(before: np.ndarray, after: np.ndarray, observed: np.ndarray, path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(10, 3.5))
    t = np.arange(before.shape[0]) / 2.0
    ax.plot(t, before, color="0.6", lw=0.8, label="linear interpolation")
    filled = np.where(observed == 0, after, np.nan)
    ax.plot(t, np.where(observed == 1, after, np.nan), color="k", lw=0.8, label="observed")
    ax.plot(t, filled, color="tab:red", lw=1.0, label="inpainted")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("FHR (bpm)")
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_forecast(context: np.ndarray, result, path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(10, 3.5))
    n = context.shape[0]
    t_ctx = np.arange(n) / 2.0
    t_fc = (n + np.arange(result.horizon)) / 2.0
    ax.plot(t_ctx, context, color="k", lw=0.8, label="context")
    ax.plot(t_fc, 240.0 * result.mean, color="tab:blue", lw=1.0, label="forecast")
    ax.fill_between(t_fc, 240.0 * result.lower95, 240.0 * result.upper95, color="tab:blue", alpha=0.25, label="95% band")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("FHR (bpm)")
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
