"""Readers and writers for the toolkit's JSON file formats.

Formats (all JSON, UTF-8):
  caia-attackset/1    validated attack-set manifest
  caia-candidates/1   unfiltered candidate manifest (same shape, scores usual)
  caia-predictions/1  per-class attribute predictions
  caia-report/1       metrics report
  caia-decisions/1    filter decision trail
  caia-curve/1        ablation curve
Logit JSONL and grid/mask formats live next to their modules.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import AttackTuple, AttributeSpace, ClassPrediction
from .errors import ConfigurationError, EvaluationError
from .evaluation import AblationPoint, ConfusionMatrix, MetricsReport, ValueMetrics
from .filtering import CandidateTuple, FilterResult

ATTACKSET_FORMAT = "caia-attackset/1"
CANDIDATES_FORMAT = "caia-candidates/1"
PREDICTIONS_FORMAT = "caia-predictions/1"
REPORT_FORMAT = "caia-report/1"
DECISIONS_FORMAT = "caia-decisions/1"
CURVE_FORMAT = "caia-curve/1"


def _load_json(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON: {exc}") from exc


def _dump_json(path: str | Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _check_format(doc: dict, path, expected: tuple[str, ...]) -> None:
    fmt = doc.get("format")
    if fmt not in expected:
        raise ConfigurationError(
            f"{path}: format {fmt!r} is not one of {list(expected)}"
        )


def _space_from_doc(doc: dict, path) -> AttributeSpace:
    attr = doc.get("attribute")
    if not isinstance(attr, dict) or "name" not in attr or "values" not in attr:
        raise ConfigurationError(f"{path}: missing or malformed 'attribute' block")
    return AttributeSpace(
        name=attr["name"],
        values=tuple(attr["values"]),
        prompts=attr.get("prompts"),
    )


def _space_to_doc(space: AttributeSpace) -> dict:
    return {"name": space.name, "values": list(space.values)}


# -- attack set / candidates -------------------------------------------------


def write_attack_manifest(
    path: str | Path,
    space: AttributeSpace,
    tuples: Sequence[AttackTuple],
    config: Mapping | None = None,
) -> None:
    doc = {
        "format": ATTACKSET_FORMAT,
        "attribute": _space_to_doc(space),
        "tuples": [
            {
                "id": t.tuple_id,
                "images": {v: t.images[v] for v in space.values},
                **(
                    {"scores": {z: list(vec) for z, vec in t.filter_scores.items()}}
                    if t.filter_scores
                    else {}
                ),
            }
            for t in tuples
        ],
    }
    if config is not None:
        doc["config"] = dict(config)
    _dump_json(path, doc)


def read_attack_manifest(path: str | Path) -> tuple[AttributeSpace, list[AttackTuple]]:
    doc = _load_json(path)
    _check_format(doc, path, (ATTACKSET_FORMAT,))
    space = _space_from_doc(doc, path)
    tuples = []
    for i, raw in enumerate(doc.get("tuples", [])):
        try:
            tup = AttackTuple(
                tuple_id=raw["id"],
                images=dict(raw["images"]),
                filter_scores=(
                    {z: tuple(float(p) for p in vec) for z, vec in raw["scores"].items()}
                    if "scores" in raw
                    else None
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"{path}: tuple #{i} malformed: {exc}") from exc
        tup.check_against(space)
        tuples.append(tup)
    if not tuples:
        raise ConfigurationError(f"{path}: manifest holds no tuples")
    ids = [t.tuple_id for t in tuples]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"{path}: duplicate tuple ids")
    return space, tuples


def read_candidates(path: str | Path) -> tuple[AttributeSpace, list[CandidateTuple]]:
    """Candidate manifests share the attack-set shape; scores usually present."""
    doc = _load_json(path)
    _check_format(doc, path, (CANDIDATES_FORMAT, ATTACKSET_FORMAT))
    space = _space_from_doc(doc, path)
    candidates = []
    for i, raw in enumerate(doc.get("tuples", [])):
        try:
            candidates.append(
                CandidateTuple(
                    tuple_id=raw["id"],
                    images=dict(raw["images"]),
                    scores=(
                        {z: [float(p) for p in vec] for z, vec in raw["scores"].items()}
                        if "scores" in raw
                        else None
                    ),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"{path}: tuple #{i} malformed: {exc}") from exc
    if not candidates:
        raise ConfigurationError(f"{path}: manifest holds no tuples")
    return space, candidates


def write_candidates(
    path: str | Path, space: AttributeSpace, candidates: Sequence[CandidateTuple]
) -> None:
    doc = {
        "format": CANDIDATES_FORMAT,
        "attribute": _space_to_doc(space),
        "tuples": [
            {
                "id": c.tuple_id,
                "images": dict(c.images),
                **(
                    {"scores": {z: list(map(float, vec)) for z, vec in c.scores.items()}}
                    if c.scores
                    else {}
                ),
            }
            for c in candidates
        ],
    }
    _dump_json(path, doc)


# -- predictions ---------------------------------------------------------------


def write_predictions(
    path: str | Path,
    space: AttributeSpace,
    predictions: Sequence[ClassPrediction],
    config: Mapping | None = None,
) -> None:
    doc = {
        "format": PREDICTIONS_FORMAT,
        "attribute": _space_to_doc(space),
        "classes": [
            {
                "class_id": p.class_id,
                "predicted": p.predicted_value,
                "tie": p.tie,
                "advantage": {v: p.advantage_totals[v] for v in space.values},
            }
            for p in predictions
        ],
        "config": dict(config or {}),
    }
    _dump_json(path, doc)


def read_predictions(
    path: str | Path,
) -> tuple[AttributeSpace, list[ClassPrediction]]:
    doc = _load_json(path)
    _check_format(doc, path, (PREDICTIONS_FORMAT,))
    space = _space_from_doc(doc, path)
    predictions = []
    for i, raw in enumerate(doc.get("classes", [])):
        try:
            predictions.append(
                ClassPrediction(
                    class_id=int(raw["class_id"]),
                    predicted_value=raw["predicted"],
                    advantage_totals={
                        v: float(raw["advantage"][v]) for v in space.values
                    },
                    tie=bool(raw["tie"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"{path}: class #{i} malformed: {exc}") from exc
    if not predictions:
        raise ConfigurationError(f"{path}: no class predictions")
    return space, predictions


# -- metrics reports -----------------------------------------------------------


def write_report(
    path: str | Path, report: MetricsReport, config: Mapping | None = None
) -> None:
    doc = {
        "format": REPORT_FORMAT,
        "accuracy": report.accuracy,
        "accuracy_std": report.accuracy_std,
        "per_value": {
            v: {
                "precision": report.per_value[v].precision,
                "recall": report.per_value[v].recall,
                "f1": report.per_value[v].f1,
            }
            for v in report.values
        },
        "confusion": report.confusion.counts.tolist(),
        "runs": report.runs,
        "tie_rate": report.tie_rate,
        "config": dict(config or {}),
    }
    _dump_json(path, doc)


def read_report(path: str | Path) -> MetricsReport:
    doc = _load_json(path)
    _check_format(doc, path, (REPORT_FORMAT,))
    per_value_doc = doc.get("per_value")
    if not isinstance(per_value_doc, dict) or not per_value_doc:
        raise ConfigurationError(f"{path}: missing per_value block")
    values = tuple(per_value_doc.keys())  # JSON object order carries the space order
    try:
        cm = ConfusionMatrix(
            counts=np.asarray(doc["confusion"], dtype=np.int64), values=values
        )
        per_value = {
            v: ValueMetrics(
                precision=per_value_doc[v]["precision"],
                recall=per_value_doc[v]["recall"],
                f1=per_value_doc[v]["f1"],
            )
            for v in values
        }
        return MetricsReport(
            accuracy=float(doc["accuracy"]),
            per_value=per_value,
            confusion=cm,
            runs=int(doc["runs"]),
            accuracy_std=float(doc["accuracy_std"]),
            tie_rate=float(doc.get("tie_rate", 0.0)),
        )
    except (KeyError, TypeError, ValueError, EvaluationError) as exc:
        raise ConfigurationError(f"{path}: malformed report: {exc}") from exc


def render_report_table(report: MetricsReport) -> str:
    """Aligned-column text rendering of a metrics report."""
    def fmt(x: float | None) -> str:
        return "   n/a" if x is None else f"{x:6.4f}"

    width = max(len(v) for v in report.values)
    lines = [
        f"accuracy {report.accuracy:.4f} (std {report.accuracy_std:.4f}, "
        f"{report.runs} run{'s' if report.runs != 1 else ''}, "
        f"tie rate {report.tie_rate:.4f})",
        f"{'value'.ljust(width)}  precision  recall  f1",
    ]
    for v in report.values:
        m = report.per_value[v]
        lines.append(
            f"{v.ljust(width)}     {fmt(m.precision)}  {fmt(m.recall)}  {fmt(m.f1)}"
        )
    return "\n".join(lines)


# -- filter decisions ----------------------------------------------------------


def write_decisions(
    path: str | Path, result: FilterResult, config: Mapping | None = None
) -> None:
    doc = {
        "format": DECISIONS_FORMAT,
        "decisions": [
            {
                "tuple_id": d.tuple_id,
                "accepted": d.accepted,
                "failures": [
                    {"value": value, "reason": reason} for value, reason in d.failures
                ],
            }
            for d in result.decisions
        ],
        "accepted_count": len(result.attack_set),
        "under_target": result.under_target,
        "config": dict(config or {}),
    }
    _dump_json(path, doc)


# -- ablation curves -----------------------------------------------------------


def write_curve(
    path: str | Path, points: Sequence[AblationPoint], config: Mapping | None = None
) -> None:
    doc = {
        "format": CURVE_FORMAT,
        "points": [
            {
                "size": p.size,
                "mean_accuracy": p.mean_accuracy,
                "std": p.std,
                "repeats": p.repeats,
                "disjoint": p.disjoint,
                "accuracies": list(p.accuracies),
            }
            for p in points
        ],
        "config": dict(config or {}),
    }
    _dump_json(path, doc)


# -- attribution sample lists ----------------------------------------------------


def read_samples_list(path: str | Path) -> list[tuple[str, dict[str, str]]]:
    """Read an attribution sample list: map path + mask path per region."""
    doc = _load_json(path)
    samples_doc = doc.get("samples")
    if not isinstance(samples_doc, list) or not samples_doc:
        raise ConfigurationError(f"{path}: missing non-empty 'samples' list")
    base = Path(path).parent
    out = []
    for i, raw in enumerate(samples_doc):
        try:
            map_path = str(base / raw["map"])
            masks = {region: str(base / p) for region, p in raw["masks"].items()}
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"{path}: sample #{i} malformed: {exc}") from exc
        out.append((map_path, masks))
    return out


# -- prompt catalog --------------------------------------------------------------


def default_prompts() -> dict:
    """The shipped edit-prompt catalog (metadata for manifest generation)."""
    text = (
        resources.files("caia").joinpath("prompts/default.json").read_text("utf-8")
    )
    return json.loads(text)


def default_attribute_space(name: str) -> AttributeSpace:
    """Build an AttributeSpace from the shipped prompt catalog by name."""
    catalog = default_prompts()
    attrs = catalog["attributes"]
    if name not in attrs:
        raise ConfigurationError(
            f"attribute '{name}' not in catalog {sorted(attrs)}"
        )
    entry = attrs[name]
    return AttributeSpace(
        name=name, values=tuple(entry["values"]), prompts=entry["prompts"]
    )
