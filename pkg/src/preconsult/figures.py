"""Figure rendering for report artifacts.

Renders the two analysis views as PNG files next to the delimited output:
per-turn mean similarity curves, and the dual-axis pairing of training
turn frequency against evaluation failure rate. Uses the Agg backend, so
no display is required.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .inertia import TurnAggregate  # noqa: E402
from .report import RunSummary, TurnFailureProfile  # noqa: E402


def similarity_by_turn_figure(rows: Sequence[TurnAggregate], path: str | Path) -> Path:
    """Mean max-similarity per turn, one curve each for Jaccard and cosine."""
    path = Path(path)
    turns = [r.turn for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(turns, [r.mean_jaccard for r in rows], marker="o", label="Jaccard")
    ax.plot(turns, [r.mean_cosine for r in rows], marker="s", label="Cosine")
    ax.set_xlabel("Turn")
    ax.set_ylabel("Mean max similarity vs preceding questions")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def turn_failure_figure(profile: TurnFailureProfile, path: str | Path) -> Path:
    """Training frequency (bars, left axis) against failure rate (line,
    right axis)."""
    path = Path(path)
    fig, ax_freq = plt.subplots(figsize=(6, 4))
    ax_freq.bar(profile.turns, profile.training_frequency, color="#7da7d9",
                alpha=0.8, label="Training frequency")
    ax_freq.set_xlabel("Turn")
    ax_freq.set_ylabel("Training frequency")
    ax_fail = ax_freq.twinx()
    ax_fail.plot(profile.turns, profile.failure_rate, color="#c0392b", marker="o",
                 label="Failure rate (1-TCSR)")
    ax_fail.set_ylabel("Failure rate (1-TCSR)")
    ax_fail.set_ylim(-0.02, 1.02)
    if profile.rho is not None:
        ax_freq.set_title(f"Spearman rho = {profile.rho:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def rates_by_turn_figure(summary: RunSummary, path: str | Path) -> Path:
    """Per-turn format and task satisfaction rates for one run."""
    path = Path(path)
    turns = sorted(summary.turn_counts)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(turns, [float(summary.fcsr_by_turn[t]) for t in turns], marker="o",
            label="Format satisfaction")
    ax.plot(turns, [float(summary.tcsr_by_turn[t]) for t in turns], marker="s",
            label="Task satisfaction")
    ax.set_xlabel("Turn")
    ax.set_ylabel("Satisfaction rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
