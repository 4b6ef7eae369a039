"""PFAN architecture: generator, discriminator and their building blocks.

The generator runs a 3x3 stem, a stack of multi-scale bottleneck-inverting
(MBI) blocks extracting high-frequency detail, a stack of windowed axial
attention transformer (LAT) blocks extracting global structure, a channel
attention fusion gate, and a 3x3 reconstruction conv with a global input
skip. The discriminator is a PatchGAN: stride-2 convs down to a grid of
per-patch logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pfan.layers import LayerSpec, ParamStore, init_params
from pfan import tensor as T
from pfan.tensor import Tensor


@dataclass
class PfanConfig:
    base_channels: int = 64
    n_mbi: int = 4
    n_lat: int = 2
    mbi_kernels: tuple = (3, 7, 11)
    mbi_groups: int = 64
    mbi_expand_ratio: int = 4
    mbi_residual: bool = False
    lat_window: int = 8
    leff_expand_ratio: int = 2
    use_global_input_skip: bool = True
    disc_layers: int = 3

    def __post_init__(self):
        if self.base_channels % self.mbi_groups:
            raise ValueError(
                f"mbi_groups={self.mbi_groups} must divide base_channels={self.base_channels}")
        for name in ("n_mbi", "n_lat", "lat_window", "leff_expand_ratio",
                     "mbi_expand_ratio", "disc_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @staticmethod
    def desk() -> "PfanConfig":
        """Tiny configuration for tests and laptop-scale runs."""
        return PfanConfig(base_channels=8, n_mbi=1, n_lat=1, mbi_groups=8,
                          mbi_expand_ratio=2, lat_window=8, disc_layers=2)

    def digest(self) -> str:
        import hashlib
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


# -- parameterized primitives -------------------------------------------------


class Conv2d:
    def __init__(self, store: ParamStore, prefix: str, rng, cin: int, cout: int,
                 kernel: int, stride: int = 1, padding: int | None = None,
                 groups: int = 1, dtype=np.float32):
        spec = LayerSpec("conv", cin, cout, kernel, groups)
        p = init_params(spec, rng, store, prefix, dtype=dtype)
        self.w, self.b = p["w"], p["b"]
        self.stride = stride
        self.padding = (kernel - 1) // 2 if padding is None else padding
        self.groups = groups

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.w, self.b, stride=self.stride,
                        padding=self.padding, groups=self.groups)


class Linear:
    def __init__(self, store, prefix, rng, cin, cout, dtype=np.float32):
        p = init_params(LayerSpec("linear", cin, cout), rng, store, prefix, dtype=dtype)
        self.w, self.b = p["w"], p["b"]

    def __call__(self, tokens: Tensor) -> Tensor:
        return T.matmul(tokens, self.w.permute(1, 0)) + self.b


class LayerNorm:
    def __init__(self, store, prefix, rng, channels, dtype=np.float32):
        p = init_params(LayerSpec("norm", channels, channels), rng, store, prefix,
                        dtype=dtype)
        self.gamma, self.beta = p["gamma"], p["beta"]

    def __call__(self, tokens: Tensor) -> Tensor:
        return T.layer_norm(tokens, self.gamma, self.beta)


# -- PFAN blocks --------------------------------------------------------------


class MbiBlock:
    """Multi-scale grouped convs summed, then a pointwise expand/contract pair."""

    def __init__(self, cfg: PfanConfig, store, prefix, rng, dtype=np.float32):
        c = cfg.base_channels
        hidden = c * cfg.mbi_expand_ratio
        self.gconvs = [
            Conv2d(store, f"{prefix}.gconv{k}", rng, c, c, k, groups=cfg.mbi_groups,
                   dtype=dtype)
            for k in cfg.mbi_kernels
        ]
        self.pw_expand = Conv2d(store, f"{prefix}.pw_expand", rng, c, hidden, 1,
                                dtype=dtype)
        self.pw_project = Conv2d(store, f"{prefix}.pw_project", rng, hidden, c, 1,
                                 dtype=dtype)
        self.residual = cfg.mbi_residual

    def __call__(self, x: Tensor) -> Tensor:
        ms = T.gelu(self.gconvs[0](x))
        for conv in self.gconvs[1:]:
            ms = ms + T.gelu(conv(x))
        out = self.pw_project(T.gelu(self.pw_expand(ms)))
        return out + x if self.residual else out


class SeaAttention:
    """Axial attention over row- and column-averaged (squeezed) q/k/v.

    Output position (i, j) is the row-attention result for row i plus the
    column-attention result for column j; channels return to C through an
    output projection. No sqrt(d) scaling and no positional encoding.
    """

    def __init__(self, channels: int, store, prefix, rng, c_qk: int | None = None,
                 c_v: int | None = None, dtype=np.float32):
        c = channels
        self.c_qk = c_qk or c // 2
        self.c_v = c_v or c // 2
        std = 0.02
        self.wq = store.add(f"{prefix}.wq", rng.normal(0, std, (self.c_qk, c)).astype(dtype))
        self.wk = store.add(f"{prefix}.wk", rng.normal(0, std, (self.c_qk, c)).astype(dtype))
        self.wv = store.add(f"{prefix}.wv", rng.normal(0, std, (self.c_v, c)).astype(dtype))
        self.wo = store.add(f"{prefix}.wo", rng.normal(0, std, (c, self.c_v)).astype(dtype))

    def _project(self, x: Tensor):
        c, h, w = x.shape
        xf = x.reshape(c, h * w)
        q = T.matmul(self.wq, xf).reshape(self.c_qk, h, w)
        k = T.matmul(self.wk, xf).reshape(self.c_qk, h, w)
        v = T.matmul(self.wv, xf).reshape(self.c_v, h, w)
        return q, k, v

    def __call__(self, x: Tensor) -> Tensor:
        c, h, w = x.shape
        q, k, v = self._project(x)
        # squeeze along W -> per-row sequences, along H -> per-column sequences
        qh, kh, vh = (t.mean(axis=2).permute(1, 0) for t in (q, k, v))
        qv, kv, vv = (t.mean(axis=1).permute(1, 0) for t in (q, k, v))
        attn_h = T.softmax(T.matmul(qh, kh.T), axis=-1)   # (H, H)
        attn_v = T.softmax(T.matmul(qv, kv.T), axis=-1)   # (W, W)
        out_h = T.matmul(attn_h, vh)                      # (H, C_v)
        out_v = T.matmul(attn_v, vv)                      # (W, C_v)
        y = out_h.permute(1, 0).reshape(self.c_v, h, 1) + \
            out_v.permute(1, 0).reshape(self.c_v, 1, w)
        return T.matmul(self.wo, y.reshape(self.c_v, h * w)).reshape(c, h, w)

    def full(self, x: Tensor) -> Tensor:
        """Global self-attention over all HW tokens (oracle / benchmark only)."""
        c, h, w = x.shape
        q, k, v = self._project(x)
        qt = q.reshape(self.c_qk, h * w).permute(1, 0)    # (HW, C_qk)
        kf = k.reshape(self.c_qk, h * w)
        attn = T.softmax(T.matmul(qt, kf), axis=-1)       # (HW, HW)
        y = T.matmul(attn, v.reshape(self.c_v, h * w).permute(1, 0))  # (HW, C_v)
        return T.matmul(self.wo, y.permute(1, 0)).reshape(c, h, w)


class Leff:
    """Feed-forward with an interposed 3x3 depthwise conv on the 2-D window."""

    def __init__(self, channels: int, expand: int, store, prefix, rng,
                 dtype=np.float32):
        hidden = channels * expand
        self.hidden = hidden
        self.fc1 = Linear(store, f"{prefix}.fc1", rng, channels, hidden, dtype=dtype)
        self.dw = Conv2d(store, f"{prefix}.dw", rng, hidden, hidden, 3,
                         groups=hidden, dtype=dtype)
        self.fc2 = Linear(store, f"{prefix}.fc2", rng, hidden, channels, dtype=dtype)

    def __call__(self, tokens: Tensor, window_hw: tuple) -> Tensor:
        h, w = window_hw
        n = tokens.shape[0]
        if n != h * w:
            raise T.ShapeError(f"{n} tokens do not fill a {h}x{w} window")
        t = T.leaky_relu(self.fc1(tokens))
        maps = t.permute(1, 0).reshape(self.hidden, h, w)
        maps = T.leaky_relu(self.dw(maps))
        t = maps.reshape(self.hidden, n).permute(1, 0)
        return T.leaky_relu(self.fc2(t))


def _to_tokens(x: Tensor) -> Tensor:
    c, h, w = x.shape
    return x.reshape(c, h * w).permute(1, 0)


def _to_map(tokens: Tensor, c: int, h: int, w: int) -> Tensor:
    return tokens.permute(1, 0).reshape(c, h, w)


class LatBlock:
    """Pre-norm transformer block over non-overlapping square windows.

    Inputs whose extents are not window multiples are reflection-padded,
    processed, and cropped back.
    """

    def __init__(self, cfg: PfanConfig, store, prefix, rng, dtype=np.float32):
        c = cfg.base_channels
        self.window = cfg.lat_window
        self.ln1 = LayerNorm(store, f"{prefix}.ln1", rng, c, dtype=dtype)
        self.sea = SeaAttention(c, store, f"{prefix}.sea", rng, dtype=dtype)
        self.ln2 = LayerNorm(store, f"{prefix}.ln2", rng, c, dtype=dtype)
        self.leff = Leff(c, cfg.leff_expand_ratio, store, f"{prefix}.leff", rng,
                         dtype=dtype)

    def _window(self, win: Tensor) -> Tensor:
        c, h, w = win.shape
        normed = _to_map(self.ln1(_to_tokens(win)), c, h, w)
        x_sea = self.sea(normed) + win
        tokens = self.ln2(_to_tokens(x_sea))
        return _to_map(self.leff(tokens, (h, w)), c, h, w) + x_sea

    def __call__(self, x: Tensor) -> Tensor:
        c, h, w = x.shape
        ws = self.window
        ph = (ws - h % ws) % ws
        pw = (ws - w % ws) % ws
        xp = T.pad2d(x, (0, ph), (0, pw), mode="reflect") if (ph or pw) else x
        hp, wp = h + ph, w + pw
        rows = []
        for i in range(0, hp, ws):
            row = [self._window(T.crop2d(xp, i, i + ws, j, j + ws))
                   for j in range(0, wp, ws)]
            rows.append(row[0] if len(row) == 1 else T.concat(row, axis=2))
        out = rows[0] if len(rows) == 1 else T.concat(rows, axis=1)
        if ph or pw:
            out = T.crop2d(out, 0, h, 0, w)
        return out


class FusionBlock:
    """Channel attention gate: sigmoid(LEFF(avg) + LEFF(max)), one shared LEFF.

    Pooled vectors run through the LEFF as 1x1 windows, where the depthwise
    3x3 sees only zero padding and degenerates to a scaled identity.
    """

    def __init__(self, cfg: PfanConfig, store, prefix, rng, dtype=np.float32):
        self.channels = cfg.base_channels
        self.leff = Leff(cfg.base_channels, cfg.leff_expand_ratio, store,
                         f"{prefix}.leff", rng, dtype=dtype)

    def gate(self, x: Tensor) -> Tensor:
        avg = T.avg_pool_spatial(x).reshape(1, self.channels)
        mx = T.max_pool_spatial(x).reshape(1, self.channels)
        return T.sigmoid(self.leff(avg, (1, 1)) + self.leff(mx, (1, 1)))

    def __call__(self, x: Tensor) -> Tensor:
        return x * self.gate(x).reshape(self.channels, 1, 1)


class Generator:
    """Smoky RGB image in [0,1] -> desmoked RGB image."""

    def __init__(self, cfg: PfanConfig, seed: int = 0, dtype=np.float32,
                 store: ParamStore | None = None):
        self.cfg = cfg
        self.store = store if store is not None else ParamStore()
        rng = np.random.default_rng(seed)
        c = cfg.base_channels
        self.stem = Conv2d(self.store, "gen.stem", rng, 3, c, 3, dtype=dtype)
        self.mbi = [MbiBlock(cfg, self.store, f"gen.mbi{i}", rng, dtype=dtype)
                    for i in range(cfg.n_mbi)]
        self.lat = [LatBlock(cfg, self.store, f"gen.lat{i}", rng, dtype=dtype)
                    for i in range(cfg.n_lat)]
        self.fusion = FusionBlock(cfg, self.store, "gen.fusion", rng, dtype=dtype)
        self.out_conv = Conv2d(self.store, "gen.out", rng, c, 3, 3, dtype=dtype)

    def __call__(self, img: Tensor) -> Tensor:
        """Unclamped forward pass (training losses need live gradients)."""
        if img.shape[0] != 3 or img.data.ndim != 3:
            raise T.ShapeError(f"expected a (3, H, W) image, got {img.shape}")
        x = self.stem(img)
        for block in self.mbi:
            x = block(x)
        x_hf = x
        for block in self.lat:
            x = block(x)
        x_lf = self.fusion(x)
        out = self.out_conv(x_hf + x_lf)
        if self.cfg.use_global_input_skip:
            out = out + img
        return out

    def infer(self, img: np.ndarray) -> np.ndarray:
        """Inference on a (3, H, W) array in [0,1]; output clamped to [0,1]."""
        return T.clamp01(self(Tensor(img)).data)


class PatchDiscriminator:
    """PatchGAN over a channel-concatenated (condition, candidate) pair.

    disc_layers stride-2 3x3 convs (channels C, 2C, 4C, ...) with
    LeakyReLU(0.2), then a stride-1 3x3 conv to one logit channel. Each
    stride-2 conv maps extent n to (n - 1) // 2 + 1, so the output grid is
    ceil(H / 2^disc_layers) x ceil(W / 2^disc_layers).
    """

    def __init__(self, cfg: PfanConfig, seed: int = 1, dtype=np.float32,
                 store: ParamStore | None = None):
        self.cfg = cfg
        self.store = store if store is not None else ParamStore()
        rng = np.random.default_rng(seed)
        self.convs = []
        cin = 6
        cout = cfg.base_channels
        for i in range(cfg.disc_layers):
            self.convs.append(Conv2d(self.store, f"disc.conv{i}", rng, cin, cout, 3,
                                     stride=2, dtype=dtype))
            cin, cout = cout, cout * 2
        self.head = Conv2d(self.store, "disc.head", rng, cin, 1, 3, dtype=dtype)

    def __call__(self, pair: Tensor) -> Tensor:
        if pair.shape[0] != 6:
            raise T.ShapeError(f"expected a (6, H, W) image pair, got {pair.shape}")
        x = pair
        for conv in self.convs:
            x = T.leaky_relu(conv(x), 0.2)
        return self.head(x)

    def receptive_field(self) -> int:
        """Input extent influencing one interior output logit."""
        rf, jump = 1, 1
        for _ in range(self.cfg.disc_layers):
            rf += 2 * jump          # (k-1) * jump with k=3
            jump *= 2
        rf += 2 * jump              # stride-1 head conv
        return rf


# -- complexity model ---------------------------------------------------------


def flop_count(kind: str, c: int, c_qk: int, c_v: int, h: int, w: int) -> int:
    """Closed-form scalar-op counts for the two attention kernels.

    Counted ops, exactly as the instrumented kernels in pfan.bench execute
    them (projections to q/k/v and the output projection are common to both
    kernels and excluded):

      full: logit and value matmuls over HW tokens
            = (HW)^2 * C_qk + (HW)^2 * C_v

      sea:  squeeze scaling, one multiply per squeezed element
            = (H + W) * (2*C_qk + C_v)
            + axial logit/value matmuls  = (H^2 + W^2) * (C_qk + C_v)
            + broadcast assembly adds    = H * W * C_v
    """
    if min(c, c_qk, c_v, h, w) < 1:
        raise ValueError("extents must be positive")
    if kind == "full":
        return h * h * w * w * (c_qk + c_v)
    if kind == "sea":
        return ((h + w) * (2 * c_qk + c_v)
                + (h * h + w * w) * (c_qk + c_v)
                + h * w * c_v)
    raise ValueError(f"unknown kind {kind!r}")
