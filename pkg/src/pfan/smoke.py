"""Procedural smoke-pair synthesis.

A fractal value-noise field stands in for a fluid render: the field is
advected upward over time, masked by a Gaussian plume that starts at the
source location and widens with the frame index, scaled by density and
intensity, and brightened toward the light position. Smoke composites onto
clean frames additively (achromatic, gray-white) with a final clamp.

Dataset layout: out_dir/{train,val,test}/{clean,smoke,syn}/NNNNN.png plus a
line-delimited manifest.jsonl; every row carries the full parameter set, so
pairs re-render bit-for-bit.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from pfan.imageio import ImageDecodeError, load_image, quantize, save_image

NOISE_OCTAVES = 4
NOISE_LACUNARITY = 2
NOISE_PERSISTENCE = 0.5
NOISE_BASE_FREQ = 4

PLUME_SIGMA0 = 0.08       # initial plume radius parameter, normalized coords
PLUME_GROWTH = 0.05       # sigma growth per frame
DRIFT_SPEED = 0.015       # upward advection per frame at S_t = 1
LIGHT_SIGMA = 0.35

DENSITY_TIERS = {
    "light": (0.15, 0.35),
    "medium": (0.4, 0.6),
    "heavy": (0.65, 0.9),
}

_SPLIT_DIRS = ("train", "val", "test")


class ExtentError(ValueError):
    """Raised on degenerate or mismatched image extents."""


class EmptySourceError(ValueError):
    """Raised when the clean-image folder holds no decodable image."""


@dataclass
class SmokeParams:
    """The six generation knobs plus seed and frame index."""

    density: float        # S_d
    intensity: float      # S_i
    temperature: float    # S_t, maps to upward drift speed
    source: tuple         # S_l, (x, y) in [0,1]^2
    light_loc: tuple      # L_l, (x, y) in [0,1]^2
    light_intensity: float  # L_i
    seed: int
    frame: int

    def __post_init__(self):
        for name in ("density", "intensity", "temperature", "light_intensity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("source", "light_loc"):
            pt = tuple(float(c) for c in getattr(self, name))
            if len(pt) != 2 or not all(0.0 <= c <= 1.0 for c in pt):
                raise ValueError(f"{name}={pt} outside [0, 1]^2")
            setattr(self, name, pt)
        if self.frame < 0:
            raise ValueError("frame index must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "SmokeParams":
        return SmokeParams(**{**d,
                              "source": tuple(d["source"]),
                              "light_loc": tuple(d["light_loc"])})


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def _value_noise_octave(u: np.ndarray, v: np.ndarray, seed: int, octave: int,
                        freq: int) -> np.ndarray:
    """Bilinearly interpolated lattice noise, periodic with period ``freq``."""
    rng = np.random.default_rng([seed, octave])
    lattice = rng.random((freq, freq))
    x = u * freq
    y = v * freq
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx = _smoothstep(x - x0)
    fy = _smoothstep(y - y0)
    x0 %= freq
    y0 %= freq
    x1 = (x0 + 1) % freq
    y1 = (y0 + 1) % freq
    n00 = lattice[y0, x0]
    n10 = lattice[y0, x1]
    n01 = lattice[y1, x0]
    n11 = lattice[y1, x1]
    top = n00 + fx * (n10 - n00)
    bot = n01 + fx * (n11 - n01)
    return top + fy * (bot - top)


def fractal_noise(u: np.ndarray, v: np.ndarray, seed: int) -> np.ndarray:
    """Four-octave value noise in [0, 1], lacunarity 2, persistence 0.5."""
    total = np.zeros_like(u)
    norm = 0.0
    amp = 1.0
    freq = NOISE_BASE_FREQ
    for octave in range(NOISE_OCTAVES):
        total += amp * _value_noise_octave(u, v, seed, octave, freq)
        norm += amp
        amp *= NOISE_PERSISTENCE
        freq *= NOISE_LACUNARITY
    return total / norm


def plume_sigma(t: int) -> float:
    """Plume radius parameter at frame t; nondecreasing in t."""
    return PLUME_SIGMA0 * (1.0 + PLUME_GROWTH * t)


def initial_plume_radius() -> float:
    """Radius (normalized coords) holding essentially all frame-0 mass."""
    return 3.0 * PLUME_SIGMA0


def render_smoke_frame(p: SmokeParams, h: int, w: int) -> np.ndarray:
    """Render one (H, W) additive luminance layer in [0, 1].

    Pure function of (params, H, W); identical inputs give bit-identical
    output.
    """
    if h < 8 or w < 8:
        raise ExtentError(f"extents {h}x{w} too small to render (need >= 8)")
    v, u = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w,
                       indexing="ij")
    drift = DRIFT_SPEED * p.temperature * p.frame
    noise = fractal_noise(u, v + drift, p.seed)

    sx, sy = p.source
    sig = plume_sigma(p.frame)
    d2 = (u - sx) ** 2 + (v - sy) ** 2
    mask = np.exp(-d2 / (2.0 * sig * sig))

    amplitude = p.density * (0.3 + 0.7 * p.intensity)
    layer = amplitude * noise * mask

    lx, ly = p.light_loc
    dl2 = (u - lx) ** 2 + (v - ly) ** 2
    layer *= 1.0 + 0.5 * p.light_intensity * np.exp(-dl2 / (2.0 * LIGHT_SIGMA ** 2))
    return np.clip(layer, 0.0, 1.0).astype(np.float32)


def composite(clean: np.ndarray, smoke: np.ndarray) -> np.ndarray:
    """Additive overlay, clamped: clip(clean + smoke, 0, 1) per RGB channel."""
    if clean.shape[:2] != smoke.shape:
        raise ExtentError(f"clean {clean.shape[:2]} vs smoke {smoke.shape}")
    return np.clip(clean + smoke[..., None], 0.0, 1.0).astype(np.float32)


def split_counts(n_sources: int) -> tuple:
    """8:1:2 split over source images: floor for train and val, rest to test."""
    n_train = (8 * n_sources) // 11
    n_val = n_sources // 11
    return n_train, n_val, n_sources - n_train - n_val


def _sample_params(rng: np.random.Generator, tier: str) -> SmokeParams:
    if tier == "random":
        band = (0.15, 0.9)
        source = (float(rng.uniform(0.15, 0.85)), float(rng.uniform(0.15, 0.85)))
        temperature = float(rng.uniform())
    elif tier in DENSITY_TIERS:
        band = DENSITY_TIERS[tier]
        # density-tier test sets use fixed starting positions and temperatures
        source = (0.5, 0.5)
        temperature = 0.5
    else:
        raise ValueError(f"unknown density tier {tier!r}")
    return SmokeParams(
        density=float(rng.uniform(*band)),
        intensity=float(rng.uniform()),
        temperature=temperature,
        source=source,
        light_loc=(float(rng.uniform()), float(rng.uniform())),
        light_intensity=float(rng.uniform()),
        seed=int(rng.integers(0, 2 ** 31)),
        frame=int(rng.integers(0, 48)),
    )


def _list_sources(clean_dir: Path) -> list:
    exts = {".png", ".jpg", ".jpeg", ".bmp"}
    files = sorted(f for f in clean_dir.iterdir()
                   if f.is_file() and f.suffix.lower() in exts)
    good = []
    for f in files:
        try:
            load_image(f)
            good.append(f)
        except ImageDecodeError:
            continue
    return good


def generate_dataset(clean_dir, out_dir, n_pairs: int, seed: int,
                     density_tier: str = "random") -> list:
    """Emit paired PNGs plus manifest.jsonl; returns the manifest rows.

    Splits are assigned per source image (8:1:2; no source appears in two
    splits). Deterministic under (seed, n_pairs, tier, folder contents).
    """
    clean_dir = Path(clean_dir)
    out_dir = Path(out_dir)
    sources = _list_sources(clean_dir)
    if not sources:
        raise EmptySourceError(f"no decodable images in {clean_dir}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sources))
    n_train, n_val, _ = split_counts(len(sources))
    split_of = {}
    for rank, src_idx in enumerate(order):
        if rank < n_train:
            split_of[src_idx] = "train"
        elif rank < n_train + n_val:
            split_of[src_idx] = "val"
        else:
            split_of[src_idx] = "test"

    for split in _SPLIT_DIRS:
        for sub in ("clean", "smoke", "syn"):
            (out_dir / split / sub).mkdir(parents=True, exist_ok=True)

    jobs = []
    for i in range(n_pairs):
        src_idx = i % len(sources)
        jobs.append((i, sources[src_idx], split_of[src_idx],
                     _sample_params(rng, density_tier)))

    def run(job):
        index, src, split, params = job
        name = f"{index:05d}.png"
        clean_u8 = quantize(load_image(src))
        cleanf = clean_u8.astype(np.float32) / 255.0
        smoke = render_smoke_frame(params, *cleanf.shape[:2])
        syn = composite(cleanf, smoke)
        save_image(cleanf, out_dir / split / "clean" / name)
        save_image(smoke, out_dir / split / "smoke" / name)
        save_image(syn, out_dir / split / "syn" / name)
        return {
            "index": index,
            "split": split,
            "source": src.name,
            "clean": f"{split}/clean/{name}",
            "smoke": f"{split}/smoke/{name}",
            "syn": f"{split}/syn/{name}",
            "params": params.to_dict(),
        }

    workers = max(1, int(os.environ.get("PFAN_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]

    with open(out_dir / "manifest.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return rows


def read_manifest(path) -> list:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
