"""Bridge configuration: which model to wrap and how to preprocess inputs.

The server owns preprocessing (resize + per-channel normalization); the
attacking client submits plain encoded images and never needs to know the
model's input pipeline. The active preprocessing is advertised in the
``name`` field of ``/v1/metadata`` so runs are auditable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

MODES = ("logits", "attribute_scores", "both")
MODEL_KINDS = ("stub", "torchscript")


class BridgeConfigError(Exception):
    """Invalid bridge configuration."""


@dataclass(frozen=True)
class PreprocessSpec:
    """Deterministic input tensorization: resize then normalize."""

    height: int = 224
    width: int = 224
    mean: tuple[float, ...] = (0.5, 0.5, 0.5)
    std: tuple[float, ...] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise BridgeConfigError("resize dimensions must be positive")
        if len(self.mean) != len(self.std):
            raise BridgeConfigError("mean and std must have equal channel counts")
        if any(s <= 0 for s in self.std):
            raise BridgeConfigError("std entries must be positive")

    def describe(self) -> str:
        mean = ",".join(f"{m:g}" for m in self.mean)
        std = ",".join(f"{s:g}" for s in self.std)
        return f"resize={self.height}x{self.width} mean={mean} std={std}"


@dataclass(frozen=True)
class BridgeConfig:
    model_kind: str = "stub"
    model_path: str | None = None
    num_classes: int = 10
    device: str = "cpu"
    bind: str = "127.0.0.1:0"
    mode: str = "both"
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise BridgeConfigError(
                f"model kind '{self.model_kind}' not one of {MODEL_KINDS}"
            )
        if self.mode not in MODES:
            raise BridgeConfigError(f"mode '{self.mode}' not one of {MODES}")
        if self.model_kind == "torchscript" and not self.model_path:
            raise BridgeConfigError("torchscript models need a model_path")
        if self.num_classes < 2:
            raise BridgeConfigError("num_classes must be >= 2")


def load_config(path: str | Path) -> BridgeConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BridgeConfigError(f"{path}: not valid JSON: {exc}") from exc
    pre_raw = raw.pop("preprocess", {})
    try:
        pre = PreprocessSpec(
            height=int(pre_raw.get("height", 224)),
            width=int(pre_raw.get("width", 224)),
            mean=tuple(pre_raw.get("mean", (0.5, 0.5, 0.5))),
            std=tuple(pre_raw.get("std", (0.5, 0.5, 0.5))),
        )
        return BridgeConfig(
            model_kind=raw.get("model_kind", "stub"),
            model_path=raw.get("model_path"),
            num_classes=int(raw.get("num_classes", 10)),
            device=raw.get("device", "cpu"),
            bind=raw.get("bind", "127.0.0.1:0"),
            mode=raw.get("mode", "both"),
            preprocess=pre,
        )
    except (TypeError, ValueError) as exc:
        raise BridgeConfigError(f"{path}: malformed config: {exc}") from exc
