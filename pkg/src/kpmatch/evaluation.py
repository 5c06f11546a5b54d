"""Binary evaluation: per-class F1, macro-F1, and threshold handling.

The class distribution is skewed (about one matching pair in five), so the
headline metric is macro-averaged F1: the unweighted mean of the F1 scores
of the two classes. Degenerate classes score 0 rather than raising.

Probabilities convert to labels via a strict threshold: a pair counts as
matching only when its probability exceeds the threshold. A threshold can
also be learned on dev predictions by grid search; that path is off by
default since learned thresholds land on 0.5 in most runs anyway.

The module also owns the polarity-divergence report type: how often a
generator emits the same text under opposite-polarity prompts, plus a
token-Jaccard similarity mean for a softer view of the same question.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import BadLabelValue, EmptyInput, MissingGold, MissingProbability

DEFAULT_THRESHOLD = 0.5

# learn_threshold scans 0.00, 0.01, ..., 1.00 unless given another grid
DEFAULT_GRID = tuple(round(i / 100.0, 2) for i in range(101))


@dataclass(frozen=True)
class Prediction:
    """One scored pair: the thresholded label and the raw probability."""

    pair_id: str
    label: int
    match_probability: float | None = None


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    """Per-class and macro metrics plus the label-1 confusion counts."""

    macro_f1: float
    per_class: dict[int, ClassMetrics]
    confusion: tuple[int, int, int, int]  # (tp, fp, fn, tn) with 1 positive
    n: int
    threshold_used: float | None


def _check_labels(values: list[int], what: str) -> None:
    if not values:
        raise EmptyInput(f"{what} is empty")
    for v in values:
        if v not in (0, 1):
            raise BadLabelValue(f"{what} contains non-binary value {v!r}")


def _check_probs(probs: list[float]) -> None:
    if not probs:
        raise EmptyInput("probabilities are empty")
    for p in probs:
        if not isinstance(p, (int, float)) or not math.isfinite(p) or not (0.0 <= p <= 1.0):
            raise MissingProbability(f"probability {p!r} is not a finite value in [0, 1]")


def _paired(gold: list[int], other: list, other_name: str) -> None:
    if len(gold) != len(other):
        raise MissingGold(
            f"{len(gold)} gold labels but {len(other)} {other_name}"
        )


def class_metrics(gold: list[int], pred: list[int], positive: int) -> ClassMetrics:
    """Precision/recall/F1 treating ``positive`` as the positive class.

    Empty denominators yield 0 instead of an error, so a never-predicted
    class contributes an F1 of 0.
    """
    tp = sum(1 for g, p in zip(gold, pred) if g == positive and p == positive)
    fp = sum(1 for g, p in zip(gold, pred) if g != positive and p == positive)
    fn = sum(1 for g, p in zip(gold, pred) if g == positive and p != positive)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetrics(precision, recall, f1, support=sum(1 for g in gold if g == positive))


def confusion_counts(gold: list[int], pred: list[int]) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) with label 1 as the positive class."""
    tp = sum(1 for g, p in zip(gold, pred) if g == 1 and p == 1)
    fp = sum(1 for g, p in zip(gold, pred) if g == 0 and p == 1)
    fn = sum(1 for g, p in zip(gold, pred) if g == 1 and p == 0)
    tn = sum(1 for g, p in zip(gold, pred) if g == 0 and p == 0)
    return tp, fp, fn, tn


def macro_f1_from_labels(gold: list[int], pred: list[int]) -> float:
    """Unweighted mean of the class-0 and class-1 F1 scores."""
    _check_labels(gold, "gold labels")
    _paired(gold, pred, "predictions")
    _check_labels(pred, "predictions")
    return (class_metrics(gold, pred, 0).f1 + class_metrics(gold, pred, 1).f1) / 2.0


def report_from_labels(
    gold: list[int], pred: list[int], threshold_used: float | None = None
) -> EvalReport:
    """Full report for already-thresholded label vectors."""
    score = macro_f1_from_labels(gold, pred)
    per_class = {c: class_metrics(gold, pred, c) for c in (0, 1)}
    return EvalReport(
        macro_f1=score,
        per_class=per_class,
        confusion=confusion_counts(gold, pred),
        n=len(gold),
        threshold_used=threshold_used,
    )


def _gold_for(predictions: list[Prediction], gold: Mapping[str, int]) -> list[int]:
    if not predictions:
        raise EmptyInput("no predictions to evaluate")
    labels = []
    for p in predictions:
        if p.pair_id not in gold:
            raise MissingGold(f"no gold label for pair {p.pair_id!r}")
        labels.append(gold[p.pair_id])
    _check_labels(labels, "gold labels")
    return labels


def macro_f1(
    predictions: list[Prediction],
    gold: Mapping[str, int],
    threshold_used: float | None = None,
) -> EvalReport:
    """Score predictions against a pair_id -> label mapping."""
    gold_labels = _gold_for(predictions, gold)
    pred_labels = [p.label for p in predictions]
    _check_labels(pred_labels, "predictions")
    return report_from_labels(gold_labels, pred_labels, threshold_used)


def apply_threshold(probs: list[float], threshold: float = DEFAULT_THRESHOLD) -> list[int]:
    """1 where the probability strictly exceeds the threshold, else 0."""
    _check_probs(probs)
    return [1 if p > threshold else 0 for p in probs]


def with_threshold(predictions: list[Prediction], threshold: float) -> list[Prediction]:
    """Relabel predictions from their probabilities at a new threshold."""
    out = []
    for p in predictions:
        if p.match_probability is None:
            raise MissingProbability(f"prediction for {p.pair_id!r} has no probability")
        out.append(
            Prediction(p.pair_id, 1 if p.match_probability > threshold else 0, p.match_probability)
        )
    return out


def evaluate(gold: list[int], probs: list[float], threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    """Threshold the probabilities and compute per-class and macro metrics."""
    _check_labels(gold, "gold labels")
    _paired(gold, probs, "probabilities")
    pred = apply_threshold(probs, threshold)
    return report_from_labels(gold, pred, threshold_used=threshold)


def learn_threshold(
    predictions: list[Prediction],
    gold: Mapping[str, int],
    grid: list[float] | None = None,
) -> tuple[float, float]:
    """Grid-search the threshold maximizing macro-F1 on dev predictions.

    Returns (threshold, macro_f1 at that threshold). Ties prefer the value
    closest to 0.5, then the smaller one, so an uninformative grid yields
    0.5. Predictions must carry probabilities.
    """
    gold_labels = _gold_for(predictions, gold)
    probs = []
    for p in predictions:
        if p.match_probability is None:
            raise MissingProbability(f"prediction for {p.pair_id!r} has no probability")
        probs.append(p.match_probability)
    _check_probs(probs)
    points = list(DEFAULT_GRID) if grid is None else list(grid)
    if not points:
        raise EmptyInput("threshold grid is empty")

    def macro_at(t: float) -> float:
        return macro_f1_from_labels(gold_labels, [1 if p > t else 0 for p in probs])

    best = max(points, key=lambda t: (macro_at(t), -abs(t - 0.5), -t))
    return best, macro_at(best)


# --- polarity divergence ---------------------------------------------------------

@dataclass(frozen=True)
class DivergenceExample:
    argument: str
    positive_output: str
    negative_output: str
    identical: bool


@dataclass(frozen=True)
class DivergenceReport:
    """How alike a generator's outputs are under opposite-polarity prompts."""

    family: str
    n_pairs: int
    exact_match_fraction: float
    normalized_similarity_mean: float
    examples: list[DivergenceExample]


def normalize_text(text: str) -> str:
    return " ".join(text.split()).casefold()


def token_jaccard(a: str, b: str) -> float:
    """Set overlap of whitespace tokens after normalization; empty==empty is 1."""
    ta = set(normalize_text(a).split())
    tb = set(normalize_text(b).split())
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def divergence_report(
    family: str,
    arguments: list[str],
    positive_outputs: list[str],
    negative_outputs: list[str],
    max_examples: int = 5,
) -> DivergenceReport:
    """Compare output pairs; identical means equal after normalization.

    Keeps up to ``max_examples`` identical pairs (or, failing that,
    diverging ones) for display.
    """
    if not arguments:
        raise EmptyInput("divergence needs at least one generated pair")
    if not (len(arguments) == len(positive_outputs) == len(negative_outputs)):
        raise MissingGold(
            f"{len(arguments)} arguments but {len(positive_outputs)} positive and "
            f"{len(negative_outputs)} negative outputs"
        )
    rows = [
        DivergenceExample(
            argument=arg,
            positive_output=pos,
            negative_output=neg,
            identical=normalize_text(pos) == normalize_text(neg),
        )
        for arg, pos, neg in zip(arguments, positive_outputs, negative_outputs)
    ]
    n_identical = sum(1 for r in rows if r.identical)
    similarity = sum(token_jaccard(r.positive_output, r.negative_output) for r in rows) / len(rows)
    shown = [r for r in rows if r.identical][:max_examples]
    if not shown:
        shown = rows[:max_examples]
    return DivergenceReport(
        family=family,
        n_pairs=len(rows),
        exact_match_fraction=n_identical / len(rows),
        normalized_similarity_mean=similarity,
        examples=shown,
    )
