"""End-to-end desk run: synthesize pairs, train the GAN briefly, evaluate.

A scaled-down version of the full pipeline that finishes in about a minute:
small generator, 8 pairs of 32x32 images, 100 optimizer steps. Expect a
modest PSNR improvement; the acceptance suite runs the longer version.

Run: python3 demos/05_desk_training.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from pfan.imageio import chw, hwc, load_image, save_image
from pfan.metrics import evaluate_dataset, psnr
from pfan.model import PfanConfig
from pfan.smoke import generate_dataset
from pfan.train import TrainConfig, train

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    clean_dir = tmp / "clean"
    clean_dir.mkdir()
    rng = np.random.default_rng(0)
    for i in range(8):
        img = np.kron(rng.random((4, 4, 3)), np.ones((8, 8, 1)))
        save_image(np.clip(img, 0, 1).astype(np.float32),
                   clean_dir / f"{i}.png")

    ds = tmp / "ds"
    rows = generate_dataset(clean_dir, ds, n_pairs=8, seed=0,
                            density_tier="heavy")
    for row in rows:
        row["split"] = "train"  # deliberate overfit on every pair

    cfg = PfanConfig.desk()
    print("desk generator config:", cfg)
    tc = TrainConfig(batch=8, crop=32, d_warmup_epochs=1, epochs=10 ** 6,
                     seed=1)
    print("training 100 steps ...")
    res = train(rows, ds, cfg, tc, tmp / "run", max_steps=100, log_every=25)

    for line in open(res["log_path"]):
        e = json.loads(line)
        print(f"  step {e['step']:3d}  loss_d={e['loss_d']:.4f} "
              f"loss_g={e['loss_g']:.4f} l1={e['l1']:.4f}")

    gen = res["generator"]
    base, after = [], []
    for row in rows:
        syn = load_image(ds / row["syn"])
        cl = load_image(ds / row["clean"])
        base.append(psnr(syn, cl))
        after.append(psnr(hwc(gen.infer(chw(syn))), cl))
    print(f"\nsmoky-vs-clean baseline PSNR: {np.mean(base):.2f} dB")
    print(f"desmoked PSNR after 100 steps: {np.mean(after):.2f} dB "
          f"({np.mean(after) - np.mean(base):+.2f} dB)")

    report = evaluate_dataset(gen, rows, ds, split="train")
    print("\nevaluation table:")
    print(report.to_table())
