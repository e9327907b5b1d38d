"""Relative-advantage scoring and per-class attribute prediction.

The attack works on tuples of image variants: each tuple holds one image per
attribute value, all derived from the same base image. For a fixed target
class, the variant with the highest logit receives the gap to the
second-highest logit as its "relative advantage"; every other variant
receives zero. Summing these advantage vectors over the whole attack set and
taking the per-class argmax yields the predicted attribute value for every
class of the target model.

One logit vector per attack image scores all classes at once, so a single
forward pass over the attack set suffices; nothing here re-queries per class.

Logit contract
--------------
Providers MUST return raw pre-softmax logits. Softmax probabilities are
numerically indistinguishable from logits at this layer, but they compress
the gaps that the advantage measures and silently corrupt the attack. This
contract cannot be validated in code; it is the provider's responsibility.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    EmptyAttackSetError,
    MalformedTupleError,
    MissingRecordError,
    ProtocolError,
    TransportError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttributeSpace:
    """The sensitive attribute under attack.

    Parameters
    ----------
    name:
        Identifier for the attribute, e.g. ``"hair_color"``.
    values:
        Ordered labels of the k possible attribute values. The ordering is
        fixed for the lifetime of an attack run; it defines the value index
        used everywhere (advantage vectors, confusion matrices, tie breaks).
    prompts:
        Optional edit-prompt string per value. Pure metadata describing how
        attack images were generated; never consumed by the attack math.
    """

    name: str
    values: tuple[str, ...]
    prompts: Mapping[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 2:
            raise ConfigurationError(
                f"attribute '{self.name}' needs at least 2 values, got {len(self.values)}"
            )
        if any(not v for v in self.values):
            raise ConfigurationError(f"attribute '{self.name}' has an empty value label")
        if len(set(self.values)) != len(self.values):
            raise ConfigurationError(f"attribute '{self.name}' has duplicate value labels")
        if self.prompts is not None:
            unknown = set(self.prompts) - set(self.values)
            if unknown:
                raise ConfigurationError(
                    f"prompts reference unknown values: {sorted(unknown)}"
                )

    @property
    def k(self) -> int:
        return len(self.values)

    def index(self, value: str) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise ConfigurationError(
                f"value '{value}' not in attribute '{self.name}' {list(self.values)}"
            ) from None


@dataclass(frozen=True)
class AttackTuple:
    """One validated attack tuple: an image reference per attribute value.

    ``filter_scores`` preserves the attribute-classifier probability vectors
    that admitted the tuple through the filter, for provenance only.
    """

    tuple_id: str
    images: Mapping[str, str]
    filter_scores: Mapping[str, tuple[float, ...]] | None = None

    def check_against(self, space: AttributeSpace) -> None:
        """Raise unless ``images`` has exactly one entry per value of ``space``."""
        have = set(self.images)
        want = set(space.values)
        if have != want:
            missing = sorted(want - have)
            extra = sorted(have - want)
            raise ConfigurationError(
                f"tuple '{self.tuple_id}' images do not match attribute values "
                f"(missing={missing}, extra={extra})"
            )


@dataclass(frozen=True)
class LogitRecord:
    """Pre-softmax logit vector over all target classes for one (tuple, value) image."""

    tuple_id: str
    value: str
    logits: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "logits", np.asarray(self.logits, dtype=np.float64)
        )


@dataclass(frozen=True)
class LogitRequest:
    """One oracle query: which image of which tuple/value to score."""

    tuple_id: str
    value: str
    image: str = ""


@dataclass(frozen=True)
class LogitBatch:
    """Oracle response: one logit row per requested key, in request order."""

    keys: tuple[tuple[str, str], ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "matrix", np.asarray(self.matrix, dtype=np.float64)
        )
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.keys):
            raise ProtocolError(
                f"logit batch shape {self.matrix.shape} does not match "
                f"{len(self.keys)} request keys"
            )
        if not np.isfinite(self.matrix).all():
            raise ProtocolError("logit batch contains non-finite entries")


class LogitProvider(Protocol):
    """What ``run_attack`` needs from an oracle: class count plus batched fetch."""

    num_classes: int

    def fetch(self, requests: Sequence[LogitRequest]) -> LogitBatch: ...


@dataclass
class AdvantageTable:
    """Per-class running sum of advantage vectors over attack tuples.

    ``totals`` has shape ``(num_classes, k)``. ``tuples_seen`` counts whole
    tuples accumulated via :meth:`add_tuple`; the row-level
    :func:`accumulate` helper does not touch it.
    """

    totals: np.ndarray
    tuples_seen: int = 0

    @classmethod
    def zeros(cls, num_classes: int, k: int) -> "AdvantageTable":
        return cls(totals=np.zeros((num_classes, k), dtype=np.float64))

    def add_tuple(self, advantages: np.ndarray) -> None:
        """Accumulate one tuple's ``(num_classes, k)`` advantage matrix."""
        if advantages.shape != self.totals.shape:
            raise ValueError(
                f"advantage matrix shape {advantages.shape} != table {self.totals.shape}"
            )
        self.totals += advantages
        self.tuples_seen += 1


@dataclass(frozen=True)
class ClassPrediction:
    """Predicted attribute value for one target class."""

    class_id: int
    predicted_value: str
    advantage_totals: dict[str, float]
    tie: bool


@dataclass(frozen=True)
class AttackResult:
    """Outcome of a full attack run.

    ``predictions`` is the per-class output; ``table`` is kept so callers can
    verify bitwise reproducibility; ``skipped`` lists ``(tuple_id, reason)``
    for tuples dropped whole because a logit record was missing or failed.
    """

    predictions: list[ClassPrediction]
    table: AdvantageTable
    skipped: list[tuple[str, str]] = field(default_factory=list)


def relative_advantage(
    logits_by_value: Mapping[str, float], space: AttributeSpace
) -> np.ndarray:
    """Advantage vector of one tuple for one target class.

    The value whose image attains the unique highest logit receives the gap
    between the highest and second-highest logit; all other values receive
    zero. When the maximum is attained by two or more values the gap is zero,
    so the whole vector is zero.

    Parameters
    ----------
    logits_by_value:
        Exactly one finite logit per value of ``space`` (the target class's
        logit on each image of the tuple).
    space:
        Attribute space fixing the value ordering of the returned vector.

    Returns
    -------
    np.ndarray
        Nonnegative vector of length ``space.k`` with at most one nonzero
        entry.

    Raises
    ------
    MalformedTupleError
        If a value is missing, a logit is non-finite, or an unknown value
        label appears.
    """
    extra = set(logits_by_value) - set(space.values)
    if extra:
        raise MalformedTupleError(
            f"logits for unknown values {sorted(extra)} of attribute '{space.name}'"
        )
    vec = np.empty(space.k, dtype=np.float64)
    for i, value in enumerate(space.values):
        if value not in logits_by_value:
            raise MalformedTupleError(f"missing logit for value '{value}'")
        x = float(logits_by_value[value])
        if not math.isfinite(x):
            raise MalformedTupleError(f"non-finite logit for value '{value}'")
        vec[i] = x
    out = np.zeros(space.k, dtype=np.float64)
    top = int(np.argmax(vec))
    second = np.max(np.delete(vec, top))
    if vec[top] != second:  # tied maximum leaves the whole vector at zero
        out[top] = vec[top] - second
    return out


def tuple_advantage_matrix(logit_matrix: np.ndarray) -> np.ndarray:
    """Advantage vectors of one tuple for every target class at once.

    Parameters
    ----------
    logit_matrix:
        Shape ``(k, num_classes)``; row z holds the logits of the value-z
        image over all classes.

    Returns
    -------
    np.ndarray
        Shape ``(num_classes, k)``; row y is the advantage vector for class
        y, bitwise identical to calling :func:`relative_advantage` per class.
    """
    matrix = np.asarray(logit_matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValueError(f"expected (k>=2, num_classes) logit matrix, got {matrix.shape}")
    k, num_classes = matrix.shape
    top = matrix.argmax(axis=0)
    part = np.partition(matrix, k - 2, axis=0)
    gaps = part[k - 1] - part[k - 2]  # exactly 0.0 under a tied maximum
    out = np.zeros((num_classes, k), dtype=np.float64)
    out[np.arange(num_classes), top] = gaps
    return out


def accumulate(table: AdvantageTable, class_id: int, adv: np.ndarray) -> AdvantageTable:
    """Add one advantage vector into a class row, in place.

    Returns the same table for chaining. Does not change ``tuples_seen``:
    one tuple contributes a row to every class, so the tuple count is
    maintained by :meth:`AdvantageTable.add_tuple` / :func:`run_attack`.
    """
    num_classes, k = table.totals.shape
    if not 0 <= class_id < num_classes:
        raise IndexError(f"class_id {class_id} out of range [0, {num_classes})")
    adv = np.asarray(adv, dtype=np.float64)
    if adv.shape != (k,):
        raise ValueError(f"advantage vector shape {adv.shape} != ({k},)")
    table.totals[class_id] += adv
    return table


def predict(table: AdvantageTable, space: AttributeSpace) -> list[ClassPrediction]:
    """Final attribute prediction per class: argmax of accumulated advantages.

    Ties are broken toward the lowest value index in the space ordering and
    surfaced through the ``tie`` flag.
    """
    if table.tuples_seen < 1:
        raise EmptyAttackSetError("advantage table has seen no tuples")
    num_classes, k = table.totals.shape
    if k != space.k:
        raise ConfigurationError(
            f"table width {k} does not match attribute with {space.k} values"
        )
    predictions = []
    for class_id in range(num_classes):
        row = table.totals[class_id]
        best = int(np.argmax(row))  # lowest index wins on exact ties
        tie = int(np.count_nonzero(row == row[best])) >= 2
        totals = {value: float(row[i]) for i, value in enumerate(space.values)}
        predictions.append(
            ClassPrediction(
                class_id=class_id,
                predicted_value=space.values[best],
                advantage_totals=totals,
                tie=tie,
            )
        )
    return predictions


def run_attack(
    attack_set: Sequence[AttackTuple],
    logit_source: LogitProvider,
    space: AttributeSpace,
    sample_limit: int | None = None,
) -> AttackResult:
    """Run the full attack: fetch logits per tuple, accumulate, predict.

    Tuples are processed in ascending ``tuple_id`` order; ``sample_limit``
    keeps only the first N of that ordering. A tuple whose logit fetch fails
    (unreachable oracle, missing file record) is skipped whole and logged;
    partial tuples would bias the advantage, so they are never counted.
    Structural violations (wrong row width, non-finite rows) abort the run.

    Raises
    ------
    EmptyAttackSetError
        If the attack set is empty or every tuple was skipped.
    ProtocolError
        If the provider's class count changes mid-run.
    """
    if not attack_set:
        raise EmptyAttackSetError("attack set is empty")
    ids = [t.tuple_id for t in attack_set]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigurationError(f"duplicate tuple_ids in attack set: {dupes}")
    ordered = sorted(attack_set, key=lambda t: t.tuple_id)
    if sample_limit is not None:
        if not 1 <= sample_limit <= len(ordered):
            raise ConfigurationError(
                f"sample_limit {sample_limit} outside [1, {len(ordered)}]"
            )
        ordered = ordered[:sample_limit]

    num_classes = logit_source.num_classes
    if num_classes < 1:
        raise ProtocolError(f"provider reports {num_classes} classes")

    table = AdvantageTable.zeros(num_classes, space.k)
    skipped: list[tuple[str, str]] = []
    for tup in ordered:
        tup.check_against(space)
        requests = [
            LogitRequest(tup.tuple_id, value, tup.images[value])
            for value in space.values
        ]
        try:
            batch = logit_source.fetch(requests)
        except (MissingRecordError, TransportError) as exc:
            logger.warning("skipping tuple '%s': %s", tup.tuple_id, exc)
            skipped.append((tup.tuple_id, str(exc)))
            continue
        if batch.matrix.shape != (space.k, num_classes):
            raise ProtocolError(
                f"tuple '{tup.tuple_id}': logit rows {batch.matrix.shape} do not "
                f"match (k={space.k}, num_classes={num_classes})"
            )
        table.add_tuple(tuple_advantage_matrix(batch.matrix))

    if table.tuples_seen == 0:
        raise EmptyAttackSetError(
            f"all {len(ordered)} tuples were skipped; no logits to aggregate"
        )
    return AttackResult(
        predictions=predict(table, space), table=table, skipped=skipped
    )
