"""Offline logit export: run the wrapped model over an attack-set manifest.

Reads the attack client's manifest format (``caia-attackset/1``) and writes
its logit file format (``caia-logits/1`` JSON Lines), so attacks can run
against a static file instead of the live bridge. The two paths produce
identical predictions because the same model sees the same bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import BridgeConfig
from .models import build_model


class ExportError(Exception):
    """The manifest is unusable or image files are missing."""


def _load_manifest(path: str | Path) -> tuple[list[str], list[dict]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ExportError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("format") != "caia-attackset/1":
        raise ExportError(
            f"{path}: format {doc.get('format')!r} is not 'caia-attackset/1'"
        )
    try:
        values = list(doc["attribute"]["values"])
        tuples = list(doc["tuples"])
    except (KeyError, TypeError) as exc:
        raise ExportError(f"{path}: malformed manifest: {exc}") from exc
    if not tuples:
        raise ExportError(f"{path}: manifest holds no tuples")
    return values, tuples


def export_logits(
    config: BridgeConfig, manifest_path: str | Path, out_path: str | Path
) -> int:
    """Write one logit record per (tuple, value) image; returns record count.

    Raises ExportError listing every unreadable image path before any
    inference runs, so a partial export is never written.
    """
    values, tuples = _load_manifest(manifest_path)
    model = build_model(config)

    jobs: list[tuple[str, str, Path]] = []
    missing: list[str] = []
    for raw in tuples:
        tuple_id = raw.get("id")
        images = raw.get("images", {})
        for value in values:
            if value not in images:
                raise ExportError(
                    f"tuple '{tuple_id}' has no image for value '{value}'"
                )
            path = Path(images[value])
            if not path.is_file():
                missing.append(str(path))
            jobs.append((tuple_id, value, path))
    if missing:
        raise ExportError(
            "missing image files:\n  " + "\n  ".join(missing)
        )

    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        header = {
            "format": "caia-logits/1",
            "num_classes": model.num_classes,
            "name": model.name,
        }
        fh.write(json.dumps(header) + "\n")
        for tuple_id, value, path in jobs:
            row = model.logits([path.read_bytes()])[0]
            record = {
                "tuple_id": tuple_id,
                "value": value,
                "logits": row.tolist(),
            }
            fh.write(json.dumps(record) + "\n")
            count += 1
    return count
