import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def image_dir(tmp_path):
    """Small deterministic PNGs: one per (tuple, value)."""
    root = tmp_path / "images"
    root.mkdir()
    rng = np.random.default_rng(42)
    paths = {}
    for t in range(3):
        for value in ("female", "male"):
            arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
            path = root / f"t{t:03d}_{value}.png"
            Image.fromarray(arr, mode="RGB").save(path)
            paths[(f"t{t:03d}", value)] = path
    return paths


@pytest.fixture
def attack_manifest(tmp_path, image_dir):
    """Hand-rolled caia-attackset/1 manifest over the generated images."""
    tuple_ids = sorted({tid for tid, _ in image_dir})
    doc = {
        "format": "caia-attackset/1",
        "attribute": {"name": "gender", "values": ["female", "male"]},
        "tuples": [
            {
                "id": tid,
                "images": {
                    value: str(image_dir[(tid, value)])
                    for value in ("female", "male")
                },
            }
            for tid in tuple_ids
        ],
    }
    path = tmp_path / "attack_set.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def run_attack_cli(attack_set, oracle_descriptor, out, tmp_path):
    """Drive the attack client through its CLI (the external interface)."""
    descriptor_path = tmp_path / f"oracle_{Path(out).stem}.json"
    descriptor_path.write_text(json.dumps(oracle_descriptor))
    proc = subprocess.run(
        [
            sys.executable, "-m", "caia.cli", "attack",
            "--attack-set", str(attack_set),
            "--oracle", str(descriptor_path),
            "--out", str(out),
        ],
        capture_output=True,
        text=True,
    )
    return proc
