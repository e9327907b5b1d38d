"""Confidence filtering of candidate tuples into a validated attack set.

Image editing does not always produce the intended attribute value, so every
candidate tuple carries, per value, the softmax score vector of an external
attribute classifier on that value's image. A tuple is accepted only if, for
every value z, the classifier's argmax on the value-z image is z itself AND
the winning score clears the confidence threshold tau. Filtering consumes
scores, not images: classifier inference belongs to the oracle layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import AttackTuple, AttributeSpace
from .errors import ConfigurationError, EmptyAttackSetError, MalformedScoreError

REASON_WRONG_ARGMAX = "wrong-argmax"
REASON_BELOW_THRESHOLD = "below-threshold"
REASON_MISSING_SCORE = "missing-score"

# Softmax vectors serialized in decimal may miss an exact sum of 1.
PROBABILITY_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class CandidateTuple:
    """An unfiltered tuple: images plus attribute-classifier scores per value.

    ``scores[z]`` is the classifier's probability vector (over all k values,
    in attribute-space order) for the image that is supposed to depict value
    z. ``scores`` may be ``None`` when filtering is bypassed entirely.
    """

    tuple_id: str
    images: Mapping[str, str]
    scores: Mapping[str, Sequence[float]] | None = None


@dataclass(frozen=True)
class FilterDecision:
    """Why a candidate was accepted or rejected; one (value, reason) per failure."""

    tuple_id: str
    accepted: bool
    failures: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class FilterResult:
    """Accepted tuples plus the decision trail of the whole consumption."""

    attack_set: list[AttackTuple]
    decisions: list[FilterDecision]
    under_target: bool


def check_score_vector(vec, k: int, context: str = "") -> np.ndarray:
    """Validate one probability vector: length k, finite, in [0,1], sums to 1.

    Raises MalformedScoreError on violation; returns the vector as float64.
    """
    where = f" ({context})" if context else ""
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != k:
        raise MalformedScoreError(
            f"score vector{where} has shape {arr.shape}, expected ({k},)"
        )
    if not np.isfinite(arr).all():
        raise MalformedScoreError(f"score vector{where} has non-finite entries")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise MalformedScoreError(f"score vector{where} has entries outside [0, 1]")
    if abs(arr.sum() - 1.0) > PROBABILITY_SUM_TOLERANCE:
        raise MalformedScoreError(
            f"score vector{where} sums to {arr.sum():.9f}, off by more than "
            f"{PROBABILITY_SUM_TOLERANCE}"
        )
    return arr


def filter_tuple(
    candidate: CandidateTuple, tau: float, space: AttributeSpace
) -> FilterDecision:
    """Decide one candidate: every value's image must be classified as that
    value with confidence at least ``tau``.

    An argmax tie in a score vector counts as correct only if the tied set is
    exactly the intended value, i.e. never (conservative acceptance). Missing
    score vectors are recorded as failures, not raised.
    """
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError(f"tau must be in [0, 1], got {tau}")
    failures: list[tuple[str, str]] = []
    scores = candidate.scores or {}
    for z in space.values:
        if z not in scores:
            failures.append((z, REASON_MISSING_SCORE))
            continue
        vec = check_score_vector(
            scores[z], space.k, context=f"tuple '{candidate.tuple_id}' value '{z}'"
        )
        top = vec.max()
        tied = {space.values[i] for i in np.flatnonzero(vec == top)}
        if tied != {z}:
            failures.append((z, REASON_WRONG_ARGMAX))
        elif top < tau:
            failures.append((z, REASON_BELOW_THRESHOLD))
    return FilterDecision(
        tuple_id=candidate.tuple_id,
        accepted=not failures,
        failures=tuple(failures),
    )


def build_attack_set(
    candidates: Iterable[CandidateTuple],
    tau: float,
    target_count: int,
    space: AttributeSpace,
    bypass_filter: bool = False,
) -> FilterResult:
    """Consume candidates in order until ``target_count`` are accepted.

    Consumption stops at the target, so the decision list covers exactly the
    candidates looked at. If the stream ends short, whatever was accepted is
    returned with ``under_target=True`` — an adversary may simply not have
    more candidates. ``bypass_filter=True`` accepts every candidate
    unconditionally (the no-filtering ablation arm).

    Raises
    ------
    EmptyAttackSetError
        If not a single candidate was accepted.
    """
    if target_count < 1:
        raise ConfigurationError(f"target_count must be >= 1, got {target_count}")
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError(f"tau must be in [0, 1], got {tau}")

    attack_set: list[AttackTuple] = []
    decisions: list[FilterDecision] = []
    seen_ids: set[str] = set()
    for candidate in candidates:
        if bypass_filter:
            decision = FilterDecision(candidate.tuple_id, accepted=True)
        else:
            decision = filter_tuple(candidate, tau, space)
        decisions.append(decision)
        if decision.accepted:
            if candidate.tuple_id in seen_ids:
                raise ConfigurationError(
                    f"duplicate tuple_id '{candidate.tuple_id}' in candidate stream"
                )
            seen_ids.add(candidate.tuple_id)
            tup = AttackTuple(
                tuple_id=candidate.tuple_id,
                images=dict(candidate.images),
                filter_scores=(
                    {z: tuple(float(p) for p in vec) for z, vec in candidate.scores.items()}
                    if candidate.scores
                    else None
                ),
            )
            tup.check_against(space)
            attack_set.append(tup)
            if len(attack_set) >= target_count:
                break

    if not attack_set:
        raise EmptyAttackSetError(
            f"no candidate passed the filter (tau={tau}, {len(decisions)} examined)"
        )
    return FilterResult(
        attack_set=attack_set,
        decisions=decisions,
        under_target=len(attack_set) < target_count,
    )
