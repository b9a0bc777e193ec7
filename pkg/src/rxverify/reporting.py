"""Report rendering: CSV tables plus matplotlib figures saved next to them.

Used by the CLI report paths (ingest statistics and evaluation metrics).
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import ConfusionCounts, MetricRow, round_percent
from .monographs import CorpusStats

FIGURE_DPI = 150


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=FIGURE_DPI, bbox_inches="tight")
    plt.close(fig)


def save_corpus_stats_report(stats: CorpusStats, directory: str | Path) -> list[Path]:
    """Write corpus_stats.csv and corpus_stats.png into the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    csv_path = directory / "corpus_stats.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ingredient", "word_count", "disease_count"])
        for (ingredient, versatility), words in zip(
            stats.versatility.items(), stats.description_word_counts
        ):
            writer.writerow([ingredient, words, versatility])

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    axes[0].bar(["adult", "pediatric"], [stats.n_adult, stats.n_pediatric], color=["#4878a8", "#e49444"])
    axes[0].set_title("ingredients per age group")
    axes[0].set_ylabel("ingredients")

    axes[1].hist(stats.description_word_counts or [0], bins=20, color="#4878a8")
    axes[1].set_title("description length")
    axes[1].set_xlabel("words")
    axes[1].set_ylabel("ingredients")

    axes[2].hist(list(stats.versatility.values()) or [0], bins=20, color="#4878a8")
    axes[2].set_title("diseases per ingredient")
    axes[2].set_xlabel("diseases")
    axes[2].set_ylabel("ingredients")

    fig.suptitle(f"monograph corpus: {stats.n_ingredients} ingredients")
    png_path = directory / "corpus_stats.png"
    _save(fig, png_path)
    return [csv_path, png_path]


def save_metrics_report(
    row: MetricRow, counts: ConfusionCounts, directory: str | Path
) -> list[Path]:
    """Write metrics.csv, metrics.png and confusion.png into the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    named = [
        ("accuracy", row.accuracy),
        ("precision", row.precision),
        ("recall", row.recall),
        ("f05", row.f05),
    ]
    csv_path = directory / "metrics.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "percent"])
        for name, value in named:
            writer.writerow([name, "" if value is None else f"{round_percent(value):.2f}"])
        writer.writerow(["tp", counts.tp])
        writer.writerow(["fp", counts.fp])
        writer.writerow(["tn", counts.tn])
        writer.writerow(["fn", counts.fn])

    fig, ax = plt.subplots(figsize=(5, 3.5))
    labels = [name for name, value in named if value is not None]
    values = [value for _name, value in named if value is not None]
    bars = ax.bar(labels, values, color="#4878a8")
    ax.set_ylim(0, 105)
    ax.set_ylabel("percent")
    ax.set_title("verification metrics")
    for bar, value in zip(bars, values):
        ax.annotate(
            f"{round_percent(value):.2f}",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center", va="bottom", fontsize=8,
        )
    metrics_png = directory / "metrics.png"
    _save(fig, metrics_png)

    fig, ax = plt.subplots(figsize=(3.5, 3.2))
    matrix = [[counts.tp, counts.fn], [counts.fp, counts.tn]]
    image = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks([0, 1], ["pred appropriate", "pred inappropriate"], fontsize=8)
    ax.set_yticks([0, 1], ["gold appropriate", "gold inappropriate"], fontsize=8)
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(matrix[i][j]), ha="center", va="center", fontsize=10)
    fig.colorbar(image, ax=ax, shrink=0.8)
    ax.set_title("confusion matrix", fontsize=10)
    confusion_png = directory / "confusion.png"
    _save(fig, confusion_png)
    return [csv_path, metrics_png, confusion_png]
