"""Figure rendering for reports. Uses the Agg backend; writes files only."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import DivergenceReport  # noqa: E402


def save_results_figure(rows: list[dict], path: str | Path) -> Path:
    """Horizontal bars of in-domain/cross-domain test macro-F1 per run.

    Rows follow the report schema; a missing score (None) simply draws no
    bar for that setting.
    """
    path = Path(path)
    names = [str(r["name"]) for r in rows]
    positions = range(len(rows))

    height = max(2.5, 0.55 * len(rows) + 1.2)
    fig, ax = plt.subplots(figsize=(9, height))
    for offset, key, label, color in (
        (0.2, "in_domain_f1", "in-domain", "#7aa6c2"),
        (-0.2, "cross_domain_f1", "cross-domain", "#2d5d7b"),
    ):
        pos = [p + offset for p, r in zip(positions, rows) if r.get(key) is not None]
        vals = [float(r[key]) for r in rows if r.get(key) is not None]
        ax.barh(pos, vals, height=0.38, label=label, color=color)
    ax.set_yticks(list(positions))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("macro-F1")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_divergence_figure(report: DivergenceReport, path: str | Path) -> Path:
    """Two bars: prompts whose polarities produced identical vs distinct text."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    n_identical = round(report.exact_match_fraction * report.n_pairs)
    counts = [n_identical, report.n_pairs - n_identical]
    ax.bar(["identical", "distinct"], counts, color=["#b35f5f", "#5f8fb3"])
    for i, count in enumerate(counts):
        ax.text(i, count, str(count), ha="center", va="bottom")
    ax.set_ylabel("prompt pairs")
    ax.set_title(
        f"{report.family}: {report.exact_match_fraction:.0%} identical under opposite polarity"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
