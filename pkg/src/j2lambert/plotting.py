"""Figures for training histories, correlation screens and benchmark reports."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench import BenchReport, CostReport  # noqa: E402
from .features import ScreeningReport  # noqa: E402
from .mlp import TrainHistory  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_histories(histories: dict[str, TrainHistory], path: str | Path) -> Path:
    """Validation MSE per epoch, one curve per label, log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, h in histories.items():
        ax.semilogy(np.arange(1, len(h.val_mse) + 1), h.val_mse, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation MSE (standardized)")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_correlations(report: ScreeningReport, path: str | Path) -> Path:
    n = len(report.correlations)
    cols = min(n, 3)
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 2.6 * rows), squeeze=False)
    for ax, rep in zip(axes.ravel(), report.correlations):
        im = ax.imshow(np.abs(rep.matrix), vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
        ax.set_title(rep.form.value + (" (weak row)" if rep.has_weak_rows else ""), fontsize=9)
        ax.set_xticks(range(len(rep.input_names)))
        ax.set_xticklabels(rep.input_names, rotation=90, fontsize=6)
        ax.set_yticks(range(len(rep.output_names)))
        ax.set_yticklabels(rep.output_names, fontsize=7)
    for ax in axes.ravel()[n:]:
        ax.axis("off")
    fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.8, label="|Pearson|")
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_bench(report: BenchReport, path: str | Path) -> Path:
    """Convergence ratio, mean iterations and mean time against revolutions."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    panels = (("ratio", "convergence ratio"), ("mean_iters", "mean iterations"),
              ("mean_time_s", "mean time per solve (s)"))
    for method in report.methods():
        rows = sorted((r for r in report.rows if r.method == method), key=lambda r: r.revs)
        revs = [r.revs for r in rows]
        for ax, (attr, label) in zip(axes, panels):
            ax.plot(revs, [getattr(r, attr) for r in rows], marker="o", label=method)
            ax.set_xlabel("revolutions")
            ax.set_ylabel(label)
    axes[0].set_ylim(-0.05, 1.05)
    axes[0].legend()
    for ax in axes:
        ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_cost(report: CostReport, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in sorted({r.method for r in report.rows}):
        rows = sorted((r for r in report.rows if r.method == method), key=lambda r: r.batch_size)
        ax.loglog([r.batch_size for r in rows], [r.total_s for r in rows], marker="o", label=method)
    if report.crossover is not None:
        ax.axvline(report.crossover, color="grey", linestyle="--", label=f"crossover {report.crossover}")
    ax.set_xlabel("solves in batch")
    ax.set_ylabel("total time (s)")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)
