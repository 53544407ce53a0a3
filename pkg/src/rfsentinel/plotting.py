"""Matplotlib renderings of evaluation outputs (PNG, headless backend)."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_detector_sweep(rows: Sequence, path) -> Path:
    """Detection accuracy and false-alarm rate against SNR, one line per threshold."""
    by_delta = defaultdict(list)
    for r in rows:
        by_delta[r.delta_multiple].append(r)
    fig, (ax_acc, ax_far) = plt.subplots(1, 2, figsize=(10, 4))
    for delta, rs in sorted(by_delta.items()):
        rs = sorted(rs, key=lambda r: r.snr_db)
        snr = [r.snr_db for r in rs]
        ax_acc.plot(snr, [100 * r.detection_accuracy for r in rs], marker="o", label=f"{delta:g}σ")
        ax_far.plot(snr, [100 * r.far for r in rs], marker="o", label=f"{delta:g}σ")
    for ax, name in ((ax_acc, "detection accuracy (%)"), (ax_far, "false alarm rate (%)")):
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    ax_acc.legend(title="threshold", fontsize=8)
    return _save(fig, path)


def plot_accuracy_boxes(reports: Sequence, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot([r.accuracies for r in reports])
    ax.set_xticks(range(1, len(reports) + 1), [f"{r.classifier}\n{r.feature_set}" for r in reports])
    ax.set_ylabel("test accuracy")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_confusion(report, path) -> Path:
    rho = report.rho
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(rho, vmin=0, vmax=1, cmap="Blues")
    ticks = range(len(report.classes))
    ax.set_xticks(ticks, [str(c) for c in report.classes], fontsize=7)
    ax.set_yticks(ticks, [str(c) for c in report.classes], fontsize=7)
    ax.set_xlabel("predicted controller")
    ax.set_ylabel("true controller")
    ax.set_title(f"{report.classifier} ({report.feature_set})")
    fig.colorbar(im, ax=ax, label="confusion probability")
    return _save(fig, path)


def plot_accuracy_vs_snr(rows: Sequence, path) -> Path:
    by_clf = defaultdict(list)
    for r in rows:
        by_clf[r.classifier].append(r)
    fig, ax = plt.subplots(figsize=(6, 4))
    for clf, rs in sorted(by_clf.items()):
        rs = sorted(rs, key=lambda r: r.snr_db)
        ax.plot([r.snr_db for r in rs], [100 * r.stats["mean"] for r in rs], marker="o", label=clf)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("mean accuracy (%)")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_feature_weights(weights, names: Sequence[str], path) -> Path:
    w = np.asarray(getattr(weights, "w", weights), dtype=float)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(w.size), w)
    ax.set_xticks(range(w.size), names, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("feature weight")
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, path)
