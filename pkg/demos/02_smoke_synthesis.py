"""Procedural smoke: density tiers, plume growth, thermal drift, compositing.

Writes a few illustrative PNGs to demos/out/ and prints the dataset manifest
for a tiny generated set.

Run: python3 demos/02_smoke_synthesis.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from pfan.imageio import save_image
from pfan.smoke import (SmokeParams, composite, generate_dataset,
                        plume_sigma, render_smoke_frame)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

base = dict(intensity=0.8, temperature=0.6, source=(0.5, 0.55),
            light_loc=(0.3, 0.3), light_intensity=0.6, seed=11)

print("== one plume over time (sigma grows, pattern drifts upward) ==")
for frame in (0, 16, 40):
    p = SmokeParams(density=0.8, frame=frame, **base)
    layer = render_smoke_frame(p, 128, 128)
    save_image(layer, out / f"smoke_frame{frame:02d}.png")
    print(f"frame {frame:2d}: sigma={plume_sigma(frame):.3f} "
          f"mean opacity={layer.mean():.4f}")

print("\n== density tiers on the same clean image ==")
rng = np.random.default_rng(0)
clean = np.kron(rng.random((8, 8, 3)), np.ones((16, 16, 1))).astype(np.float32)
save_image(clean, out / "clean.png")
for density, name in ((0.25, "light"), (0.5, "medium"), (0.8, "heavy")):
    p = SmokeParams(density=density, frame=8, **base)
    syn = composite(clean, render_smoke_frame(p, 128, 128))
    save_image(syn, out / f"syn_{name}.png")
    print(f"{name:>6}: mean brightness lift "
          f"{float(syn.mean() - clean.mean()):+.4f}")

print("\n== a tiny paired dataset with manifest ==")
with tempfile.TemporaryDirectory() as tmp:
    clean_dir = Path(tmp) / "clean"
    clean_dir.mkdir()
    for i in range(11):
        save_image(rng.random((32, 32, 3)).astype(np.float32),
                   clean_dir / f"{i:02d}.png")
    rows = generate_dataset(clean_dir, Path(tmp) / "ds", n_pairs=11, seed=0)
    counts = {}
    for row in rows:
        counts[row["split"]] = counts.get(row["split"], 0) + 1
    print("split counts (8:1:2 rule):", counts)
    print("first manifest row:")
    print(json.dumps(rows[0], indent=2))

print(f"\nimages written to {out}/")
