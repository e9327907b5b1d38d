"""Scoring of attribute predictions and the multi-run / ablation protocols.

Predictions are scored against a per-class ground-truth value map with the
standard one-vs-rest metrics. A value that was never predicted has no
defined precision; that is reported as an explicit undefined marker (None),
never as a silent zero, so averages across runs are not distorted.
Tie-flagged predictions count under their resolved label, with the tie rate
reported separately.

Ground truth file format: CSV, header ``class_id,value``, UTF-8, LF.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import AttackTuple, AttributeSpace, ClassPrediction, LogitProvider, run_attack
from .errors import ConfigurationError, EvaluationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """k x k counts; rows are true values, columns predicted values."""

    counts: np.ndarray
    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        k = len(self.values)
        if self.counts.shape != (k, k):
            raise EvaluationError(
                f"confusion counts shape {self.counts.shape} != ({k}, {k})"
            )
        if (self.counts < 0).any():
            raise EvaluationError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))


@dataclass(frozen=True)
class ValueMetrics:
    """One-vs-rest metrics for a single attribute value; None marks undefined."""

    precision: float | None
    recall: float | None
    f1: float | None


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    per_value: dict[str, ValueMetrics]
    confusion: ConfusionMatrix
    runs: int = 1
    accuracy_std: float = 0.0
    tie_rate: float = 0.0

    @property
    def values(self) -> tuple[str, ...]:
        return self.confusion.values


def confusion(
    predictions: Sequence[ClassPrediction],
    truth: Mapping[int, str],
    space: AttributeSpace,
) -> ConfusionMatrix:
    """Count predictions per (true value, predicted value) cell."""
    missing = sorted(p.class_id for p in predictions if p.class_id not in truth)
    if missing:
        raise EvaluationError(
            f"classes missing from ground truth: {missing[:10]}"
            + (f" (+{len(missing) - 10} more)" if len(missing) > 10 else "")
        )
    counts = np.zeros((space.k, space.k), dtype=np.int64)
    for p in predictions:
        true_value = truth[p.class_id]
        if true_value not in space.values:
            raise EvaluationError(
                f"ground-truth value '{true_value}' for class {p.class_id} "
                f"not in attribute '{space.name}'"
            )
        counts[space.index(true_value), space.index(p.predicted_value)] += 1
    return ConfusionMatrix(counts=counts, values=space.values)


def metrics(cm: ConfusionMatrix, tie_rate: float = 0.0) -> MetricsReport:
    """Accuracy plus per-value precision/recall/F1 from one confusion matrix."""
    if cm.total < 1:
        raise EvaluationError("cannot compute metrics over an empty confusion matrix")
    accuracy = cm.trace / cm.total
    per_value: dict[str, ValueMetrics] = {}
    for i, value in enumerate(cm.values):
        tp = int(cm.counts[i, i])
        predicted = int(cm.counts[:, i].sum())
        actual = int(cm.counts[i, :].sum())
        precision = tp / predicted if predicted > 0 else None
        recall = tp / actual if actual > 0 else None
        if precision is None or recall is None:
            f1 = None
        elif precision + recall == 0.0:
            f1 = 0.0
        else:
            f1 = 2.0 * precision * recall / (precision + recall)
        per_value[value] = ValueMetrics(precision=precision, recall=recall, f1=f1)
    return MetricsReport(
        accuracy=accuracy,
        per_value=per_value,
        confusion=cm,
        runs=1,
        accuracy_std=0.0,
        tie_rate=tie_rate,
    )


def evaluate(
    predictions: Sequence[ClassPrediction],
    truth: Mapping[int, str],
    space: AttributeSpace,
) -> MetricsReport:
    """Confusion + metrics + tie rate in one step."""
    cm = confusion(predictions, truth, space)
    ties = sum(1 for p in predictions if p.tie)
    return metrics(cm, tie_rate=ties / len(predictions) if predictions else 0.0)


def _mean_defined(entries: list[float | None]) -> float | None:
    defined = [e for e in entries if e is not None]
    if not defined:
        return None
    return float(np.mean(defined))


def aggregate_runs(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean metrics over runs: headline accuracy is the per-run mean with its
    population standard deviation; confusion matrices are pooled by summing.

    Per-value metrics average over the runs where they are defined; a metric
    undefined in every run stays undefined.
    """
    if not reports:
        raise EvaluationError("aggregate_runs needs at least one report")
    values = reports[0].values
    if any(r.values != values for r in reports[1:]):
        raise EvaluationError("reports cover different attribute spaces")
    accuracies = np.array([r.accuracy for r in reports], dtype=np.float64)
    pooled = ConfusionMatrix(
        counts=sum(r.confusion.counts for r in reports), values=values
    )
    per_value = {
        v: ValueMetrics(
            precision=_mean_defined([r.per_value[v].precision for r in reports]),
            recall=_mean_defined([r.per_value[v].recall for r in reports]),
            f1=_mean_defined([r.per_value[v].f1 for r in reports]),
        )
        for v in values
    }
    return MetricsReport(
        accuracy=float(accuracies.mean()),
        per_value=per_value,
        confusion=pooled,
        runs=sum(r.runs for r in reports),
        accuracy_std=float(accuracies.std()),  # population std
        tie_rate=float(np.mean([r.tie_rate for r in reports])),
    )


def partition_subsets(
    attack_set: Sequence[AttackTuple], m: int, seed: int = 0
) -> list[list[AttackTuple]]:
    """Split an attack set into m disjoint subsets of near-equal size.

    Deterministic: a seeded shuffle followed by round-robin assignment by
    position. Subset sizes differ by at most one and their union is the
    input.
    """
    if m < 1:
        raise ConfigurationError(f"m must be >= 1, got {m}")
    if m > len(attack_set):
        raise ConfigurationError(
            f"cannot split {len(attack_set)} tuples into {m} subsets"
        )
    rng = np.random.default_rng(seed & (2**64 - 1))
    order = rng.permutation(len(attack_set))
    subsets: list[list[AttackTuple]] = [[] for _ in range(m)]
    for position, idx in enumerate(order):
        subsets[position % m].append(attack_set[idx])
    return subsets


@dataclass(frozen=True)
class AblationPoint:
    """Accuracy statistics at one attack-set size."""

    size: int
    mean_accuracy: float
    std: float
    repeats: int
    disjoint: bool
    accuracies: tuple[float, ...] = field(default_factory=tuple)


def ablate(
    attack_set: Sequence[AttackTuple],
    logit_source: LogitProvider,
    space: AttributeSpace,
    truth: Mapping[int, str],
    sizes: Sequence[int],
    repeats: int,
    seed: int = 0,
) -> list[AblationPoint]:
    """Attack accuracy as a function of the number of tuples used.

    For each size, ``repeats`` subsets are drawn with a seeded shuffle. When
    ``repeats * size`` fits in the attack set the subsets are disjoint slices
    of one permutation; otherwise each repeat samples without replacement
    under its own sub-seed and the point is flagged ``disjoint=False``.
    """
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    if not sizes:
        raise ConfigurationError("sizes must be non-empty")
    n = len(attack_set)
    if max(sizes) > n:
        raise ConfigurationError(
            f"size {max(sizes)} exceeds attack set of {n} tuples"
        )
    if min(sizes) < 1:
        raise ConfigurationError("sizes must be >= 1")

    mask = 2**64 - 1
    points = []
    for size in sorted(sizes):
        disjoint = repeats * size <= n
        if disjoint:
            order = np.random.default_rng([seed & mask, size]).permutation(n)
            draws = [order[r * size : (r + 1) * size] for r in range(repeats)]
        else:
            logger.warning(
                "size %d x %d repeats exceeds %d tuples; sampling per repeat "
                "without replacement (subsets overlap across repeats)",
                size, repeats, n,
            )
            draws = [
                np.random.default_rng([seed & mask, size, r]).choice(
                    n, size=size, replace=False
                )
                for r in range(repeats)
            ]
        accuracies = []
        for draw in draws:
            subset = [attack_set[i] for i in draw]
            result = run_attack(subset, logit_source, space)
            report = evaluate(result.predictions, truth, space)
            accuracies.append(report.accuracy)
        acc = np.array(accuracies, dtype=np.float64)
        points.append(
            AblationPoint(
                size=size,
                mean_accuracy=float(acc.mean()),
                std=float(acc.std()),
                repeats=repeats,
                disjoint=disjoint,
                accuracies=tuple(float(a) for a in acc),
            )
        )
    return points


def read_ground_truth(path: str | Path) -> dict[int, str]:
    """Read the ``class_id,value`` CSV."""
    truth: dict[int, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["class_id", "value"]:
            raise ConfigurationError(
                f"{path}: expected header 'class_id,value', got {reader.fieldnames}"
            )
        for row in reader:
            try:
                class_id = int(row["class_id"])
            except (TypeError, ValueError):
                raise ConfigurationError(
                    f"{path}: bad class_id {row.get('class_id')!r}"
                ) from None
            if class_id in truth:
                raise ConfigurationError(f"{path}: duplicate class_id {class_id}")
            truth[class_id] = row["value"]
    if not truth:
        raise ConfigurationError(f"{path}: no ground-truth rows")
    return truth


def write_ground_truth(path: str | Path, truth: Mapping[int, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("class_id,value\n")
        for class_id in sorted(truth):
            fh.write(f"{class_id},{truth[class_id]}\n")
