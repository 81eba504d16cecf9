"""Figure rendering for CLI reports.

Every report path that writes delimited output also renders a matching
figure here. Uses the Agg backend so headless runs work.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_training_curves(history, path) -> Path:
    """Loss and validation-accuracy curves from the (it, loss, val) history."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    its = [h[0] for h in history if h[1] is not None]
    losses = [h[1] for h in history if h[1] is not None]
    eval_its = [h[0] for h in history if h[2] is not None]
    vals = [h[2] for h in history if h[2] is not None]

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(its, losses, lw=1.0, color="tab:blue")
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("training loss")
    axes[0].grid(alpha=0.3)
    if eval_its:
        axes[1].plot(eval_its, vals, marker="o", ms=3, lw=1.0, color="tab:orange")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("validation accuracy")
    axes[1].set_ylim(0, 1)
    axes[1].grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_sweep(rhos, accuracies, path) -> Path:
    """Test accuracy as a function of the smoothness threshold multiplier."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(rhos, accuracies, marker="o", color="tab:green")
    ax.set_xlabel(r"$\rho$")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_smoothness_histogram(values, threshold, path) -> Path:
    """Distribution of per-edge smoothness with the sampler threshold marked."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(values, bins=50, color="tab:blue", alpha=0.8)
    if threshold is not None:
        ax.axvline(threshold, color="tab:red", ls="--", lw=1.2,
                   label=f"threshold {threshold:.4g}")
        ax.legend()
    ax.set_xlabel("pairwise feature smoothness")
    ax.set_ylabel("edges")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
