"""Lightweight laparoscopic image desmoking toolkit.

A small numpy-backed tensor engine with reverse-mode autodiff, the PFAN
generator/discriminator architecture, procedural smoke-pair synthesis,
image quality metrics (PSNR / SSIM / CIEDE2000), a GAN training loop and
attention FLOP benchmarks.
"""

from pfan.tensor import Tensor
from pfan.layers import ParamStore, LayerSpec
from pfan.model import PfanConfig, Generator, PatchDiscriminator

__all__ = [
    "Tensor",
    "ParamStore",
    "LayerSpec",
    "PfanConfig",
    "Generator",
    "PatchDiscriminator",
]

__version__ = "0.1.0"
