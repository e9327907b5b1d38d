"""Relative attribution: the share of total importance inside region masks.

Given an absolute (nonnegative) pixel-wise attribution map and binary
segmentation masks for facial regions, the per-region share is the masked
attribution mass divided by the total mass; the report averages shares over
all supplied samples. Attribution maps and masks are produced by external
tools (e.g. Integrated Gradients and a face parser) and arrive as files —
nothing here computes gradients or segmentations. Callers supply absolute
attributions; taking |.| of signed maps is their job.

File formats
------------
Attribution map: two lines — a JSON header
``{"format": "caia-grid/1", "height": H, "width": W, "dtype": "f32le"}``
followed by base64 of row-major little-endian float32 data.

Mask: PNG, 8-bit grayscale, pixel 0 = outside, 255 = inside; any other
pixel value is rejected.
"""

from __future__ import annotations

import json
from base64 import b64decode, b64encode
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import (
    DegenerateSampleError,
    MalformedGridError,
    MalformedMaskError,
    ShapeError,
)

GRID_FORMAT = "caia-grid/1"


@dataclass(frozen=True)
class RelativeAttributionReport:
    """Mean share per region, with the number of samples contributing."""

    shares: dict[str, float]
    counts: dict[str, int]


def _check_map(grid: np.ndarray, index: int) -> np.ndarray:
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"sample {index}: attribution map must be 2-D, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise MalformedGridError(f"sample {index}: map has non-finite entries")
    if (arr < 0).any():
        raise MalformedGridError(
            f"sample {index}: map has negative entries; pass absolute attributions"
        )
    return arr


def relative_attribution(
    samples: Sequence[tuple[np.ndarray, Mapping[str, np.ndarray]]],
) -> RelativeAttributionReport:
    """Average, per region, the fraction of attribution mass inside the mask.

    Parameters
    ----------
    samples:
        Pairs of (attribution map, {region label: binary mask}). Masks must
        match their map's shape; maps must have positive total mass.

    Raises
    ------
    DegenerateSampleError
        If a map's total mass is zero (the share is undefined).
    ShapeError
        If a mask's dimensions differ from its map's.
    """
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for index, (grid, masks) in enumerate(samples):
        arr = _check_map(grid, index)
        total = float(np.sum(arr, dtype=np.float64))
        if total == 0.0:
            raise DegenerateSampleError(
                f"sample {index}: attribution map has zero total mass"
            )
        for region, mask in masks.items():
            mask_arr = np.asarray(mask)
            if mask_arr.shape != arr.shape:
                raise ShapeError(
                    f"sample {index} region '{region}': mask {mask_arr.shape} "
                    f"does not match map {arr.shape}"
                )
            masked = float(np.sum(arr * mask_arr.astype(np.float64), dtype=np.float64))
            sums[region] = sums.get(region, 0.0) + masked / total
            counts[region] = counts.get(region, 0) + 1
    shares = {region: sums[region] / counts[region] for region in sums}
    return RelativeAttributionReport(shares=shares, counts=counts)


def read_float_grid(path: str | Path) -> np.ndarray:
    """Read a caia-grid/1 file; returns float32 array of shape (H, W)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        data_line = fh.readline()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise MalformedGridError(f"{path}: unparseable header: {exc}") from exc
    if header.get("format") != GRID_FORMAT:
        raise MalformedGridError(
            f"{path}: format {header.get('format')!r} is not '{GRID_FORMAT}'"
        )
    if header.get("dtype") != "f32le":
        raise MalformedGridError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    try:
        height, width = int(header["height"]), int(header["width"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedGridError(f"{path}: bad height/width: {exc}") from exc
    try:
        raw = b64decode(data_line.strip(), validate=True)
    except Exception as exc:
        raise MalformedGridError(f"{path}: undecodable base64 payload") from exc
    expected = height * width * 4
    if len(raw) != expected:
        raise MalformedGridError(
            f"{path}: payload is {len(raw)} bytes, expected {expected}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(height, width).copy()


def write_float_grid(path: str | Path, grid: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(grid, dtype="<f4"))
    if arr.ndim != 2:
        raise ShapeError(f"grid must be 2-D, got shape {arr.shape}")
    header = {
        "format": GRID_FORMAT,
        "height": int(arr.shape[0]),
        "width": int(arr.shape[1]),
        "dtype": "f32le",
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        fh.write(b64encode(arr.tobytes()).decode("ascii") + "\n")


def read_mask(path: str | Path) -> np.ndarray:
    """Read a mask PNG; returns uint8 array of {0, 1}."""
    path = Path(path)
    with Image.open(path) as img:
        if img.mode != "L":
            raise MalformedMaskError(
                f"{path}: mask must be 8-bit grayscale, got mode '{img.mode}'"
            )
        arr = np.asarray(img, dtype=np.uint8)
    values = np.unique(arr)
    if not np.isin(values, (0, 255)).all():
        raise MalformedMaskError(
            f"{path}: mask pixels must be 0 or 255, found {values[:6].tolist()}"
        )
    return (arr == 255).astype(np.uint8)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {arr.shape}")
    img = Image.fromarray((arr > 0).astype(np.uint8) * 255, mode="L")
    img.save(path, format="PNG")
