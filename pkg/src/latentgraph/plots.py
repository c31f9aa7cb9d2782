"""Figure rendering for run artifacts.

Every writer takes plain arrays plus an output path and renders a PNG with
the Agg backend, so figures work headless and the bytes depend only on the
inputs. Colors come from a fixed class palette so the same dataset looks
the same across figures.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .robustness import CorruptionTable

CLASS_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def class_color(label: int) -> str:
    return CLASS_COLORS[int(label) % len(CLASS_COLORS)]


def plot_metrics(columns: Sequence[str], rows: Sequence[dict], path) -> None:
    """Loss and accuracy curves over epochs; a second panel with the
    per-layer variation trajectories when those columns are present."""
    epochs = [row["epoch"] for row in rows]
    sigma_cols = [c for c in columns if c.startswith("sigma_")]
    n_panels = 2 if sigma_cols else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(6 * n_panels, 4))
    ax = axes[0] if sigma_cols else axes
    ax.plot(epochs, [r["train_loss"] for r in rows], color="#333333", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    twin = ax.twinx()
    twin.plot(epochs, [r["train_acc"] for r in rows], color="#1f77b4", label="train acc")
    twin.plot(epochs, [r["test_acc"] for r in rows], color="#d62728", label="test acc")
    twin.set_ylabel("accuracy")
    twin.set_ylim(0.0, 1.05)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = twin.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="center right", fontsize=8)
    if sigma_cols:
        ax2 = axes[1]
        for i, col in enumerate(sigma_cols):
            ax2.plot(epochs, [r[col] for r in rows],
                     color=CLASS_COLORS[i % len(CLASS_COLORS)], label=col[len("sigma_"):])
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("normalized label variation")
        ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_corruptions(table: CorruptionTable, path, baseline: Optional[CorruptionTable] = None) -> None:
    """Error rate per corruption kind over severity levels; the baseline
    model, when given, is drawn dashed in the same color per kind."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, kind in enumerate(table.kinds):
        color = CLASS_COLORS[i % len(CLASS_COLORS)]
        ax.plot(table.severities, table.row(kind), color=color, marker="o", label=kind)
        if baseline is not None:
            ax.plot(baseline.severities, baseline.row(kind), color=color,
                    linestyle="--", marker="x", label=f"{kind} (baseline)")
    ax.set_xticks(list(table.severities))
    ax.set_xlabel("severity")
    ax.set_ylabel("error rate")
    ax.set_ylim(bottom=0.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_eigenmap(coords: np.ndarray, labels: np.ndarray, adjacency: np.ndarray, path,
                  title: str = "") -> None:
    """2-D spectral embedding scatter, colored by class, with the retained
    graph edges drawn underneath."""
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels)
    A = np.asarray(adjacency, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5, 5))
    n = coords.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if A[i, j] > 0.0:
                ax.plot([coords[i, 0], coords[j, 0]], [coords[i, 1], coords[j, 1]],
                        color="#bbbbbb", linewidth=0.6, zorder=1)
    for c in np.unique(labels):
        m = labels == c
        ax.scatter(coords[m, 0], coords[m, 1], s=30, color=class_color(c),
                   label=f"class {int(c)}", zorder=2)
    ax.set_xlabel("eigenmap dim 1")
    ax.set_ylabel("eigenmap dim 2")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_variation_by_layer(names: Sequence[str], raw: Sequence[float],
                            normalized: Sequence[float], path) -> None:
    """Raw and normalized label variation across trace entries."""
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, raw, color="#333333", marker="o", label="label variation")
    ax.set_xticks(x)
    ax.set_xticklabels(list(names), rotation=30, ha="right")
    ax.set_ylabel("label variation")
    twin = ax.twinx()
    twin.plot(x, normalized, color="#d62728", marker="s", label="normalized")
    twin.set_ylabel("normalized")
    twin.set_ylim(0.0, max(1.0, float(np.max(normalized)) * 1.05))
    lines, labels_ = ax.get_legend_handles_labels()
    lines2, labels2 = twin.get_legend_handles_labels()
    ax.legend(lines + lines2, labels_ + labels2, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
