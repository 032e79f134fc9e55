"""Matplotlib figures written to files (no display needed)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_histogram(hist, path, title=""):
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(np.arange(len(hist.bins)), hist.bins, width=1.0, color="tab:blue")
    ax.set_xlabel("bin (500 ps)")
    ax.set_ylabel("counts")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_scatter(truth, preds, path, title=""):
    """Per-depth mean and spread of predictions against ground truth.

    ``preds`` maps a label (method) to predictions aligned with ``truth``.
    """
    truth = np.asarray(truth)
    depths = np.unique(truth)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    lim = [0, float(depths.max()) + 0.5] if depths.size else [0, 1]
    ax.plot(lim, lim, "k--", lw=0.8)
    for label, p in preds.items():
        p = np.asarray(p)
        mean = [p[truth == d].mean() for d in depths]
        std = [p[truth == d].std() for d in depths]
        ax.errorbar(depths, mean, yerr=std, fmt="o", ms=3, capsize=2, label=label)
    ax.set_xlabel("ground truth (m)")
    ax.set_ylabel("prediction (m)")
    ax.legend()
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_depth_maps(maps, path):
    """Side-by-side depth maps; ``maps`` maps a label to a DepthMap."""
    fig, axes = plt.subplots(1, len(maps), figsize=(3.5 * len(maps), 3), squeeze=False)
    values = [m.values for m in maps.values()]
    finite = np.concatenate([v[np.isfinite(v)] for v in values]) if values else np.empty(0)
    vmin, vmax = (finite.min(), finite.max()) if finite.size else (0, 1)
    for ax, (label, m) in zip(axes[0], maps.items()):
        im = ax.imshow(np.ma.masked_invalid(m.values), vmin=vmin, vmax=vmax, cmap="viridis")
        ax.set_title(label)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes[0].tolist(), label="depth (m)")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training(log, path):
    fig, ax1 = plt.subplots(figsize=(5, 3))
    ep = [r["epoch"] for r in log]
    ax1.plot(ep, [r["train_loss"] for r in log], "b-", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax2 = ax1.twinx()
    ax2.plot(ep, [r["val_mae"] for r in log], "r-", label="val MAE (m)")
    ax2.set_ylabel("validation MAE (m)")
    return _save(fig, path)


def plot_energy(parts, path):
    """Stacked neural/synaptic energy per profile; ``parts`` rows are (name, E_n N_n, E_s N_s) in zJ."""
    fig, ax = plt.subplots(figsize=(5, 3))
    names = [p[0] for p in parts]
    neural = np.array([p[1] for p in parts], dtype=np.float64) * 1e-21
    synaptic = np.array([p[2] for p in parts], dtype=np.float64) * 1e-21
    ax.bar(names, neural, label="neural")
    ax.bar(names, synaptic, bottom=neural, label="synaptic")
    ax.set_yscale("log")
    ax.set_ylabel("energy per exposure (J)")
    ax.legend()
    return _save(fig, path)
