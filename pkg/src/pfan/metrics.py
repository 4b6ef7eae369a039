"""Image quality metrics: PSNR, SSIM and CIEDE2000 (with sRGB <-> Lab).

Conventions, fixed so reported numbers are well-defined:
  - images are (H, W, 3) floats in [0, 1];
  - SSIM: single scale, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03,
    L=1, computed per RGB channel over valid window positions and averaged;
  - Lab uses the D65/2-degree white point; CIEDE2000 uses k_L=k_C=k_H=1;
  - PSNR uses max_val=1 for float images (a 255 path converts first);
    identical images report +inf, serialized as the token "inf".
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pfan import imageio
from pfan.imageio import ImageDecodeError

PSNR_INF_TOKEN = "inf"


class MetricShapeError(ValueError):
    """Raised when compared images differ in shape."""


class EmptyManifestError(ValueError):
    """Raised when an evaluation manifest selects no usable pairs."""


# -- PSNR ---------------------------------------------------------------------


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """10*log10(max_val^2 / MSE); +inf when the images are identical."""
    if a.shape != b.shape:
        raise MetricShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / mse)


def psnr_u8(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR for 8-bit inputs: converted to [0,1] floats before computation."""
    return psnr(a.astype(np.float64) / 255.0, b.astype(np.float64) / 255.0)


# -- SSIM ---------------------------------------------------------------------


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_channel(x: np.ndarray, y: np.ndarray, win: np.ndarray,
                  c1: float, c2: float) -> float:
    k = win.shape[0]
    sw = np.lib.stride_tricks.sliding_window_view
    wx = sw(x, (k, k))
    wy = sw(y, (k, k))
    mx = np.einsum("hwij,ij->hw", wx, win)
    my = np.einsum("hwij,ij->hw", wy, win)
    mxx = np.einsum("hwij,ij->hw", wx * wx, win)
    myy = np.einsum("hwij,ij->hw", wy * wy, win)
    mxy = np.einsum("hwij,ij->hw", wx * wy, win)
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03,
         max_val: float = 1.0) -> float:
    """Mean SSIM over valid 11x11 windows, averaged across RGB channels."""
    if a.shape != b.shape:
        raise MetricShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.shape[0] < 11 or a.shape[1] < 11:
        raise MetricShapeError(f"image {a.shape[:2]} smaller than the 11x11 window")
    win = _gaussian_window()
    c1 = (k1 * max_val) ** 2
    c2 = (k2 * max_val) ** 2
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    if x.ndim == 2:
        return _ssim_channel(x, y, win, c1, c2)
    return float(np.mean([_ssim_channel(x[..., c], y[..., c], win, c1, c2)
                          for c in range(x.shape[-1])]))


# -- sRGB <-> Lab --------------------------------------------------------------

# sRGB linear -> XYZ, D65
_RGB2XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
_WHITE = np.array([0.95047, 1.0, 1.08883])  # D65/2-degree reference white
_DELTA = 6.0 / 29.0


@dataclass
class LabColor:
    L: float
    a: float
    b: float


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) sRGB in [0,1] -> (..., 3) CIE Lab (D65)."""
    s = np.asarray(rgb, dtype=np.float64)
    lin = np.where(s <= 0.04045, s / 12.92, ((s + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB2XYZ.T
    t = xyz / _WHITE
    f = np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of srgb_to_lab; in-gamut colors round-trip within 1e-3."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f > _DELTA, f ** 3, 3 * _DELTA ** 2 * (f - 4.0 / 29.0))
    lin = (t * _WHITE) @ _XYZ2RGB.T
    lin = np.clip(lin, 0.0, None)
    return np.where(lin <= 0.0031308, 12.92 * lin,
                    1.055 * lin ** (1.0 / 2.4) - 0.055)


# -- CIEDE2000 ------------------------------------------------------------------


def ciede2000(lab1, lab2) -> float | np.ndarray:
    """CIEDE2000 color difference with k_L = k_C = k_H = 1.

    Accepts (..., 3) arrays, 3-tuples or LabColor; symmetric, nonnegative,
    and zero exactly for identical Lab inputs.
    """
    def unpack(lab):
        if isinstance(lab, LabColor):
            return np.float64(lab.L), np.float64(lab.a), np.float64(lab.b)
        arr = np.asarray(lab, dtype=np.float64)
        return arr[..., 0], arr[..., 1], arr[..., 2]

    L1, a1, b1 = unpack(lab1)
    L2, a2, b2 = unpack(lab2)

    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    Cbar = 0.5 * (C1 + C2)
    c7 = Cbar ** 7
    G = 0.5 * (1.0 - np.sqrt(c7 / (c7 + 25.0 ** 7)))
    a1p = (1.0 + G) * a1
    a2p = (1.0 + G) * a2
    C1p = np.hypot(a1p, b1)
    C2p = np.hypot(a2p, b2)

    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h1p = np.where((a1p == 0) & (b1 == 0), 0.0, h1p)
    h2p = np.where((a2p == 0) & (b2 == 0), 0.0, h2p)

    dLp = L2 - L1
    dCp = C2p - C1p
    zero_chroma = (C1p * C2p) == 0
    dhp = h2p - h1p
    dhp = np.where(dhp > 180.0, dhp - 360.0, dhp)
    dhp = np.where(dhp < -180.0, dhp + 360.0, dhp)
    dhp = np.where(zero_chroma, 0.0, dhp)
    dHp = 2.0 * np.sqrt(C1p * C2p) * np.sin(np.radians(dhp) / 2.0)

    Lbar = 0.5 * (L1 + L2)
    Cbarp = 0.5 * (C1p + C2p)
    hsum = h1p + h2p
    hdiff = np.abs(h1p - h2p)
    hbarp = np.where(hdiff <= 180.0, 0.5 * hsum,
                     np.where(hsum < 360.0, 0.5 * (hsum + 360.0),
                              0.5 * (hsum - 360.0)))
    hbarp = np.where(zero_chroma, hsum, hbarp)

    rad = np.radians
    T = (1.0 - 0.17 * np.cos(rad(hbarp - 30.0))
         + 0.24 * np.cos(rad(2.0 * hbarp))
         + 0.32 * np.cos(rad(3.0 * hbarp + 6.0))
         - 0.20 * np.cos(rad(4.0 * hbarp - 63.0)))
    dtheta = 30.0 * np.exp(-(((hbarp - 275.0) / 25.0) ** 2))
    cp7 = Cbarp ** 7
    RC = 2.0 * np.sqrt(cp7 / (cp7 + 25.0 ** 7))
    SL = 1.0 + 0.015 * (Lbar - 50.0) ** 2 / np.sqrt(20.0 + (Lbar - 50.0) ** 2)
    SC = 1.0 + 0.045 * Cbarp
    SH = 1.0 + 0.015 * Cbarp * T
    RT = -np.sin(rad(2.0 * dtheta)) * RC

    dE = np.sqrt((dLp / SL) ** 2 + (dCp / SC) ** 2 + (dHp / SH) ** 2
                 + RT * (dCp / SC) * (dHp / SH))
    return float(dE) if np.ndim(dE) == 0 else dE


def image_ciede2000(a: np.ndarray, b: np.ndarray) -> float:
    """Arithmetic mean per-pixel Delta E00 between two sRGB images."""
    if a.shape != b.shape:
        raise MetricShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(ciede2000(srgb_to_lab(a), srgb_to_lab(b))))


# -- dataset evaluation -----------------------------------------------------------


def _fmt(v: float) -> str:
    return PSNR_INF_TOKEN if math.isinf(v) else f"{v:.4f}"


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)
    mean_psnr: float = 0.0
    mean_ssim: float = 0.0
    mean_ciede2000: float = 0.0
    param_count: int = 0
    config_digest: str = ""
    skipped: int = 0

    def recompute_means(self) -> None:
        self.mean_psnr = float(np.mean([r["psnr"] for r in self.rows]))
        self.mean_ssim = float(np.mean([r["ssim"] for r in self.rows]))
        self.mean_ciede2000 = float(np.mean([r["ciede2000"] for r in self.rows]))

    def to_json(self) -> str:
        def enc(v):
            return PSNR_INF_TOKEN if isinstance(v, float) and math.isinf(v) else v

        payload = {
            "param_count": self.param_count,
            "config_digest": self.config_digest,
            "skipped": self.skipped,
            "mean": {
                "psnr": enc(self.mean_psnr),
                "ssim": self.mean_ssim,
                "ciede2000": self.mean_ciede2000,
            },
            "rows": [{**r, "psnr": enc(r["psnr"])} for r in self.rows],
        }
        return json.dumps(payload, indent=2)

    def to_table(self) -> str:
        header = f"{'image':>8} {'Parameters':>12} {'PSNR':>10} {'SSIM':>8} {'CIEDE2000':>10}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(f"{r['index']:>8} {'':>12} {_fmt(r['psnr']):>10} "
                         f"{r['ssim']:>8.4f} {r['ciede2000']:>10.4f}")
        lines.append(f"{'mean':>8} {self.param_count:>12} {_fmt(self.mean_psnr):>10} "
                     f"{self.mean_ssim:>8.4f} {self.mean_ciede2000:>10.4f}")
        return "\n".join(lines)


def evaluate_dataset(generator, manifest_rows: list, dataset_root,
                     split: str = "test") -> MetricsReport:
    """Run the generator over a manifest split and score against clean frames.

    Missing or undecodable files are skipped with a warning and counted.
    """
    from pfan.layers import count_params

    root = Path(dataset_root)
    selected = [r for r in manifest_rows if r["split"] == split]
    if not selected:
        raise EmptyManifestError(f"manifest has no rows in split {split!r}")

    report = MetricsReport(param_count=count_params(generator.store),
                           config_digest=generator.cfg.digest())
    for row in selected:
        try:
            syn = imageio.load_image(root / row["syn"])
            clean = imageio.load_image(root / row["clean"])
        except (FileNotFoundError, ImageDecodeError) as exc:
            warnings.warn(f"skipping pair {row['index']}: {exc}")
            report.skipped += 1
            continue
        out = imageio.hwc(generator.infer(imageio.chw(syn)))
        report.rows.append({
            "index": row["index"],
            "psnr": psnr(out, clean),
            "ssim": ssim(out, clean),
            "ciede2000": image_ciede2000(out, clean),
        })
    if not report.rows:
        raise EmptyManifestError("every pair in the split was skipped")
    report.recompute_means()
    return report
