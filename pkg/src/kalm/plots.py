"""Matplotlib figures rendered next to the CSV/JSON reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .sweep import SweepResult
from .training import LossBreakdown


def render_sweep_figure(result: SweepResult, path: str) -> None:
    """Seed-averaged ROUGE-L against the swept parameter, per-seed points faint."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for seed in result.seeds:
        xs = [p.value for p in result.points if p.seed == seed]
        ys = [p.report.rougeL_f for p in result.points if p.seed == seed]
        ax.plot(xs, ys, "o", color="tab:gray", alpha=0.4, markersize=4)
    means = result.mean_by_value("rougeL_f")
    ax.plot(list(means.keys()), list(means.values()), "o-", color="tab:blue", label="seed mean")
    ax.set_xlabel(result.param.replace("_", " "))
    ax.set_ylabel("ROUGE-L F1")
    ax.set_title(f"ROUGE-L vs {result.param.replace('_', ' ')}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_figure(history: list[LossBreakdown], path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = range(1, len(history) + 1)
    ax.plot(epochs, [h.total for h in history], "-", color="tab:blue", label="total")
    ax.plot(epochs, [h.task for h in history], "--", color="tab:orange", label="task")
    ax.plot(epochs, [h.explain for h in history], ":", color="tab:green", label="explain")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_title("training loss")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
