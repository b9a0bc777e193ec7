"""Evaluation harness: confusion counts, percent metrics, inference stats.

APPROPRIATE is the positive class.  Metrics are computed on the percent
scale; display rendering rounds half-up to two decimals while the raw
values stay available for machine output.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

from .core import Verdict
from .errors import KeyMismatch, UndefinedMetric
from .gateway import LmResponse


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _as_label(value) -> str:
    if isinstance(value, Verdict):
        return value.value
    label = str(value).strip().upper()
    if label not in (Verdict.APPROPRIATE.value, Verdict.INAPPROPRIATE.value):
        raise ValueError(f"unknown verdict label: {value!r}")
    return label


def score(predictions: Mapping, gold: Mapping) -> ConfusionCounts:
    """Count the confusion matrix over keyed verdicts.

    Keys are (case_id, ingredient) pairs; both maps must cover exactly the
    same keys or KeyMismatch lists the difference.
    """
    missing = [k for k in gold if k not in predictions]
    extra = [k for k in predictions if k not in gold]
    if missing or extra:
        raise KeyMismatch(missing, extra)
    tp = fp = tn = fn = 0
    positive = Verdict.APPROPRIATE.value
    for key, gold_value in gold.items():
        predicted = _as_label(predictions[key]) == positive
        actual = _as_label(gold_value) == positive
        if predicted and actual:
            tp += 1
        elif predicted and not actual:
            fp += 1
        elif not predicted and actual:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def f_beta(precision: float, recall: float, beta: float = 0.5) -> float:
    """F-beta on whatever scale precision and recall share.

    (1 + beta^2) * P * R / (beta^2 * P + R); scale-invariant, so percent
    inputs give a percent output.  Raises UndefinedMetric when the
    denominator is zero.
    """
    denominator = beta * beta * precision + recall
    if denominator == 0:
        raise UndefinedMetric("beta^2 * precision + recall is zero")
    return (1 + beta * beta) * precision * recall / denominator


@dataclass(frozen=True)
class MetricRow:
    """Percent-scale metrics; a field is None when its denominator is zero."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    f05: float | None


def metric_row(counts: ConfusionCounts) -> MetricRow:
    total = counts.total
    accuracy = 100.0 * (counts.tp + counts.tn) / total if total else None
    if counts.tp == 0 and counts.fp == 0 and counts.fn == 0 and counts.tn > 0:
        # Perfect all-negative classification: nothing was missed and
        # nothing was wrongly flagged, so every component is perfect.
        return MetricRow(accuracy=accuracy, precision=100.0, recall=100.0, f05=100.0)
    precision = 100.0 * counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else None
    recall = 100.0 * counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    f05 = None
    if precision is not None and recall is not None and (0.25 * precision + recall) > 0:
        f05 = f_beta(precision, recall, 0.5)
    return MetricRow(accuracy=accuracy, precision=precision, recall=recall, f05=f05)


def round_percent(value: float) -> float:
    """Half-up rounding to two decimals, for display."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def format_percent(value: float | None) -> str:
    if value is None:
        return "-"
    return f"{round_percent(value):.2f}"


def metric_row_display(row: MetricRow) -> dict[str, str]:
    return {
        "accuracy": format_percent(row.accuracy),
        "precision": format_percent(row.precision),
        "recall": format_percent(row.recall),
        "f05": format_percent(row.f05),
    }


@dataclass(frozen=True)
class InferenceStats:
    total_time_s: float
    total_tokens: int
    ms_per_token: float | None


def inference_stats(responses: Sequence[LmResponse]) -> InferenceStats:
    """Aggregate latency/token accounting over a batch of model calls."""
    total_ms = sum(r.latency_ms for r in responses)
    total_tokens = sum(r.generated_tokens for r in responses)
    return InferenceStats(
        total_time_s=total_ms / 1000.0,
        total_tokens=total_tokens,
        ms_per_token=(total_ms / total_tokens) if total_tokens else None,
    )
