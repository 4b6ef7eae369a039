import numpy as np
import pytest

from pfan.model import PfanConfig


def rng(seed=0):
    return np.random.default_rng(seed)


def tiny_config() -> PfanConfig:
    """Small double-checkable topology: 4 channels, 4-wide windows."""
    return PfanConfig(base_channels=4, n_mbi=1, n_lat=1, mbi_kernels=(3, 7, 11),
                      mbi_groups=4, mbi_expand_ratio=2, lat_window=4,
                      leff_expand_ratio=2, disc_layers=2)


def grad_check(make_loss, params, h=1e-4, max_coords=64):
    """Central finite differences vs autodiff, in the params' own precision.

    ``make_loss`` rebuilds the scalar loss from current parameter values.
    Checks every coordinate of tensors up to ``max_coords`` elements and an
    evenly strided subset of larger ones. Returns the max relative error.
    """
    for p in params:
        p.zero_grad()
    make_loss().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        analytic = analytic.reshape(-1).copy()
        flat = p.data.reshape(-1)
        n = flat.size
        stride = max(1, n // max_coords)
        for i in range(0, n, stride):
            orig = flat[i]
            flat[i] = orig + h
            lp = make_loss().item()
            flat[i] = orig - h
            lm = make_loss().item()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            diff = abs(analytic[i] - numeric)
            if diff < 1e-7:
                continue
            rel = diff / max(abs(analytic[i]), abs(numeric), 1e-6)
            if rel > 1e-4:
                # A piecewise-linear kink inside [x-h, x+h] corrupts the
                # central difference; a genuinely wrong gradient stays
                # wrong when the step shrinks.
                hs = h / 100.0
                flat[i] = orig + hs
                lp = make_loss().item()
                flat[i] = orig - hs
                lm = make_loss().item()
                flat[i] = orig
                numeric = (lp - lm) / (2.0 * hs)
                diff = abs(analytic[i] - numeric)
                if diff < 1e-7:
                    continue
                rel = diff / max(abs(analytic[i]), abs(numeric), 1e-6)
            worst = max(worst, rel)
    return worst


@pytest.fixture
def tmp_clean_dir(tmp_path):
    """A folder of small random clean images."""
    from pfan.imageio import save_image

    d = tmp_path / "clean"
    d.mkdir()
    r = np.random.default_rng(7)
    for i in range(11):
        img = r.random((24, 24, 3)).astype(np.float32)
        save_image(img, d / f"img{i:02d}.png")
    return d
