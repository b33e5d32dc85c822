"""Figure rendering for the report paths; all output goes to files."""

import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save_atomic(fig, path: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=150, format="png")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def save_similarity_heatmap(matrix: np.ndarray, path: str, label_names=None):
    """Grayscale label-similarity heatmap; darker cells mean closer embeddings."""
    n = matrix.shape[0]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * n), max(3.5, 0.35 * n)))
    im = ax.imshow(matrix, cmap="gray_r", vmin=-1.0, vmax=1.0)
    fig.colorbar(im, ax=ax, fraction=0.046)
    if label_names is not None and n <= 40:
        ax.set_xticks(range(n), label_names, rotation=90, fontsize=7)
        ax.set_yticks(range(n), label_names, fontsize=7)
    ax.set_title("label embedding similarity (diagonal zeroed)")
    fig.tight_layout()
    _save_atomic(fig, path)


def save_training_curves(runlog, path: str):
    """Loss terms and validation metrics per epoch, one PNG."""
    epochs = [r.epoch for r in runlog.records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("total", "kl", "recon", "contrastive", "ce"):
        ax1.plot(epochs, [r.losses[key] for r in runlog.records], label=key)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss (batch mean)")
    ax1.legend(fontsize=8)
    for key in ("example_f1", "ha", "precision_at_1"):
        ax2.plot(epochs, [r.val[key] for r in runlog.records], label=key)
    if runlog.best_epoch > 0:
        ax2.axvline(runlog.best_epoch, color="gray", ls="--", lw=0.8, label="best epoch")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation metric")
    ax2.set_ylim(0, 1)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    _save_atomic(fig, path)


def save_per_class_f1(report, path: str, label_names=None):
    """Bar chart of per-class F1 from the confusion counts in a report."""
    tp, fp, fn = report.tp, report.fp, report.fn
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2.0 * tp / np.maximum(denom, 1), 0.0)
    n = f1.size
    fig, ax = plt.subplots(figsize=(max(4.0, 0.3 * n), 3.5))
    ax.bar(range(n), f1)
    ax.set_ylim(0, 1)
    ax.set_ylabel("per-class F1")
    ax.set_xlabel("class")
    if label_names is not None and n <= 40:
        ax.set_xticks(range(n), label_names, rotation=90, fontsize=7)
    fig.tight_layout()
    _save_atomic(fig, path)
