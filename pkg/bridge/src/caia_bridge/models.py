"""Model backends behind the bridge.

The stub backend maps the SHA-256 digest of the submitted image bytes
through a fixed linear layer to logits. It needs no ML runtime, is fully
deterministic (identical request bytes produce identical responses), and
still validates that the payload decodes as an image, so it exercises the
whole protocol surface in minimal CI.

The torchscript backend wraps a traced/scripted classifier for field use:
images are resized, normalized per the preprocessing spec, and batched
through the model; raw pre-softmax outputs are returned.
"""

from __future__ import annotations

import hashlib
import io
from typing import Protocol, Sequence

import numpy as np
from PIL import Image

from .config import BridgeConfig, BridgeConfigError, PreprocessSpec


class UndecodableImageError(Exception):
    """The submitted bytes are not a decodable image."""


class InferenceError(Exception):
    """The wrapped model failed on a valid input."""


class Model(Protocol):
    num_classes: int
    name: str

    def logits(self, images: Sequence[bytes]) -> np.ndarray: ...

    def attribute_scores(self, images: Sequence[bytes], k: int) -> np.ndarray: ...


def _decode_image(data: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
        return img
    except Exception as exc:
        raise UndecodableImageError(f"cannot decode image: {exc}") from exc


class StubModel:
    """Fixed linear map of the image byte hash to logits."""

    def __init__(self, num_classes: int = 10, preprocess: PreprocessSpec | None = None):
        self.num_classes = num_classes
        self.preprocess = preprocess or PreprocessSpec()
        self.name = f"caia-bridge-stub/1 {self.preprocess.describe()}"
        rng = np.random.default_rng(0xCA1A)
        self._weights = rng.normal(0.0, 1.0, size=(num_classes, 32))
        self._attr_weights: dict[int, np.ndarray] = {}

    @staticmethod
    def _digest_vector(data: bytes) -> np.ndarray:
        digest = hashlib.sha256(data).digest()
        return np.frombuffer(digest, dtype=np.uint8).astype(np.float64) / 255.0

    def logits(self, images: Sequence[bytes]) -> np.ndarray:
        rows = []
        for data in images:
            _decode_image(data)  # protocol: undecodable payloads are rejected
            rows.append(self._weights @ self._digest_vector(data))
        return np.stack(rows)

    def attribute_scores(self, images: Sequence[bytes], k: int) -> np.ndarray:
        if k not in self._attr_weights:
            rng = np.random.default_rng(1000 + k)
            self._attr_weights[k] = rng.normal(0.0, 1.5, size=(k, 32))
        weights = self._attr_weights[k]
        rows = []
        for data in images:
            _decode_image(data)
            z = weights @ self._digest_vector(data)
            e = np.exp(z - z.max())
            rows.append(e / e.sum())
        return np.stack(rows)


class TorchscriptModel:
    """Field backend: a TorchScript classifier with owned preprocessing."""

    def __init__(self, path: str, num_classes: int, preprocess: PreprocessSpec,
                 device: str = "cpu"):
        try:
            import torch
        except ImportError as exc:  # pragma: no cover - field-only path
            raise BridgeConfigError(
                "torchscript models need the 'torch' package installed"
            ) from exc
        self._torch = torch
        self._device = torch.device(device)
        self._model = torch.jit.load(path, map_location=self._device).eval()
        self.num_classes = num_classes
        self.preprocess = preprocess
        self.name = f"caia-bridge-torchscript/1 {preprocess.describe()}"

    def _tensorize(self, images: Sequence[bytes]):
        spec = self.preprocess
        arrays = []
        for data in images:
            img = _decode_image(data).convert("RGB")
            img = img.resize((spec.width, spec.height), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
            arr = (arr - np.asarray(spec.mean, dtype=np.float32)) / np.asarray(
                spec.std, dtype=np.float32
            )
            arrays.append(arr.transpose(2, 0, 1))
        return self._torch.from_numpy(np.stack(arrays)).to(self._device)

    def logits(self, images: Sequence[bytes]) -> np.ndarray:
        batch = self._tensorize(images)
        try:
            with self._torch.no_grad():
                out = self._model(batch)
        except Exception as exc:
            raise InferenceError(str(exc)) from exc
        rows = out.detach().cpu().numpy().astype(np.float64)
        if rows.shape != (len(images), self.num_classes):
            raise InferenceError(
                f"model produced {rows.shape}, expected "
                f"({len(images)}, {self.num_classes})"
            )
        return rows

    def attribute_scores(self, images: Sequence[bytes], k: int) -> np.ndarray:
        rows = self.logits(images)
        if rows.shape[1] != k:
            raise InferenceError(
                f"attribute classifier has {rows.shape[1]} outputs, request "
                f"names {k} values"
            )
        shifted = rows - rows.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


def build_model(config: BridgeConfig) -> Model:
    if config.model_kind == "stub":
        return StubModel(config.num_classes, config.preprocess)
    return TorchscriptModel(
        config.model_path, config.num_classes, config.preprocess, config.device
    )
