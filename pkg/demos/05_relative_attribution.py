"""Relative attribution: where does a model put its importance?

Given absolute pixel-wise attribution maps and binary region masks (both
produced by external tools and shipped as files), the report states the
average share of total attribution mass falling inside each region.
"""

import tempfile
from pathlib import Path

import numpy as np

from caia import (
    read_float_grid,
    read_mask,
    relative_attribution,
    write_float_grid,
    write_mask,
)

rng = np.random.default_rng(11)
size = (32, 32)

# Synthetic stand-ins: a map concentrating mass in the upper band ("hair")
# and uniform elsewhere, plus masks for three regions.
rows = np.arange(size[0])[:, None]
attribution = rng.random(size) * np.where(rows < 8, 6.0, 1.0)

hair_mask = (rows < 8).astype(np.uint8) * np.ones(size, dtype=np.uint8)
eyes_mask = np.zeros(size, dtype=np.uint8)
eyes_mask[10:13, 8:24] = 1
skin_mask = 1 - np.maximum(hair_mask, eyes_mask)

report = relative_attribution(
    [(attribution, {"hair": hair_mask, "eyes": eyes_mask, "skin": skin_mask})]
)
for region, share in report.shares.items():
    print(f"{region:5s}: {share:.4f} of total attribution mass")
print(f"partition check: shares sum to {sum(report.shares.values()):.12f}")

# The same computation driven through files, as the CLI consumes them.
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    write_float_grid(tmp / "map.grid", attribution.astype(np.float32))
    write_mask(tmp / "hair.png", hair_mask)
    loaded = relative_attribution(
        [(read_float_grid(tmp / "map.grid"), {"hair": read_mask(tmp / "hair.png")})]
    )
    print(f"\nfrom files, hair share: {loaded.shares['hair']:.4f}")
