"""Image quality metrics: PSNR, SSIM and CIEDE2000 behaviour under noise.

Run: python3 demos/04_metrics.py
"""

import numpy as np

from pfan.metrics import (ciede2000, image_ciede2000, psnr, srgb_to_lab,
                          lab_to_srgb, ssim)

rng = np.random.default_rng(0)
clean = rng.random((64, 64, 3))

print("== all three metrics as noise grows ==")
print(f"{'noise':>6} {'PSNR':>8} {'SSIM':>8} {'dE2000':>8}")
noise = rng.standard_normal(clean.shape)
for s in (0.0, 0.02, 0.05, 0.1, 0.2):
    noisy = np.clip(clean + s * noise, 0, 1)
    p = psnr(clean, noisy)
    print(f"{s:>6.2f} {p if p != float('inf') else float('inf'):>8.2f} "
          f"{ssim(clean, noisy):>8.4f} {image_ciede2000(clean, noisy):>8.4f}")

print("\n== Lab conversion reference points ==")
for name, rgb in (("white", (1, 1, 1)), ("black", (0, 0, 0)),
                  ("mid gray", (0.5, 0.5, 0.5)), ("pure red", (1, 0, 0))):
    lab = srgb_to_lab(np.array(rgb, dtype=float))
    print(f"{name:>9}: L={lab[0]:7.3f} a={lab[1]:8.3f} b={lab[2]:8.3f}")

rgb = rng.random((5, 3))
err = np.abs(lab_to_srgb(srgb_to_lab(rgb)) - rgb).max()
print(f"\nsRGB -> Lab -> sRGB roundtrip worst error: {err:.2e}")

print("\n== a published color-difference pair ==")
lab1 = (50.0, 2.6772, -79.7751)
lab2 = (50.0, 0.0, -82.7485)
print(f"dE2000{lab1} vs {lab2} = {ciede2000(lab1, lab2):.4f} "
      "(reference: 2.0425)")
