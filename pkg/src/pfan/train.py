"""GAN training: Adam, least-squares adversarial + L1 losses, alternation.

Protocol: the discriminator first trains alone for d_warmup_epochs, then
every batch runs one discriminator update (generator output detached) and
one generator update (discriminator gradients computed but never applied).
Crops share offsets between the smoky and clean image of a pair. Everything
is keyed by one seed, so identical runs produce identical logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pfan import imageio
from pfan import tensor as T
from pfan.layers import ParamStore, save_weights
from pfan.model import Generator, PatchDiscriminator, PfanConfig
from pfan.tensor import Tensor


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch: int = 6
    crop: int = 128
    d_warmup_epochs: int = 1
    epochs: int = 10
    lambda_l1: float = 100.0
    seed: int = 0
    adv_loss: str = "least-squares"  # or "cross-entropy"

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.adv_loss not in ("least-squares", "cross-entropy"):
            raise ValueError(f"unknown adv_loss {self.adv_loss!r}")


class Adam:
    """Bias-corrected Adam over every parameter of one store."""

    def __init__(self, store: ParamStore, lr: float = 2e-4,
                 betas: tuple = (0.5, 0.999), eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in store.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for name, p in self.store.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            v *= self.b2
            if g is not None:
                m += (1.0 - self.b1) * g
                v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _adv_d(d_real: Tensor, d_fake: Tensor, kind: str) -> Tensor:
    if kind == "least-squares":
        return 0.5 * (((d_real - 1.0) ** 2).mean() + (d_fake ** 2).mean())
    # sigmoid cross-entropy on patch logits
    return -(T.sigmoid(d_real).log().mean() + (1.0 - T.sigmoid(d_fake)).log().mean())


def _adv_g(d_fake: Tensor, kind: str) -> Tensor:
    if kind == "least-squares":
        return ((d_fake - 1.0) ** 2).mean()
    return -T.sigmoid(d_fake).log().mean()


def gan_losses(d_real: Tensor, d_fake: Tensor, g_out: Tensor, target: Tensor,
               lambda_l1: float = 100.0,
               adv_loss: str = "least-squares") -> tuple:
    """(loss_D, loss_G): adversarial terms plus lambda * L1 on the generator."""
    loss_d = _adv_d(d_real, d_fake, adv_loss)
    l1 = (g_out - target).abs().mean()
    loss_g = _adv_g(d_fake, adv_loss) + lambda_l1 * l1
    return loss_d, loss_g


class TrainError(ValueError):
    pass


def _load_pairs(manifest_rows: list, root: Path) -> list:
    pairs = []
    for row in manifest_rows:
        if row["split"] != "train":
            continue
        syn = imageio.chw(imageio.load_image(root / row["syn"]))
        clean = imageio.chw(imageio.load_image(root / row["clean"]))
        pairs.append((syn, clean))
    return pairs


def _crop_pair(syn: np.ndarray, clean: np.ndarray, crop: int,
               rng: np.random.Generator) -> tuple:
    _, h, w = syn.shape
    if crop > h or crop > w:
        raise TrainError(f"crop {crop} larger than image {h}x{w}")
    # one shared offset for both images of the pair
    i = int(rng.integers(0, h - crop + 1))
    j = int(rng.integers(0, w - crop + 1))
    return syn[:, i:i + crop, j:j + crop], clean[:, i:i + crop, j:j + crop]


def train(manifest_rows: list, dataset_root, pfan_cfg: PfanConfig,
          train_cfg: TrainConfig, out_dir, max_steps: int | None = None,
          log_every: int = 1) -> dict:
    """Run the two-phase GAN loop; emit checkpoints and a scalar log.

    Returns {"generator", "discriminator", "log_path", "steps"}.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = _load_pairs(manifest_rows, Path(dataset_root))
    if not pairs:
        raise TrainError("train split is empty")

    rng = np.random.default_rng(train_cfg.seed)
    gen = Generator(pfan_cfg, seed=int(rng.integers(2 ** 31)))
    disc = PatchDiscriminator(pfan_cfg, seed=int(rng.integers(2 ** 31)))
    opt_g = Adam(gen.store, train_cfg.lr, (train_cfg.beta1, train_cfg.beta2))
    opt_d = Adam(disc.store, train_cfg.lr, (train_cfg.beta1, train_cfg.beta2))

    log_path = out_dir / "train_log.jsonl"
    log_fh = open(log_path, "w")
    step = 0

    def batch_indices():
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), train_cfg.batch):
            yield order[start:start + train_cfg.batch]

    def d_loss_on(batch, fakes=None):
        total = None
        for n, (syn_t, clean_t) in enumerate(batch):
            fake = fakes[n] if fakes is not None else gen(syn_t).detach()
            d_real = disc(T.concat_channels([syn_t, clean_t]))
            d_fake = disc(T.concat_channels([syn_t, fake]))
            term = _adv_d(d_real, d_fake, train_cfg.adv_loss)
            total = term if total is None else total + term
        return total * (1.0 / len(batch))

    def make_batch(idx):
        batch = []
        for i in idx:
            syn, clean = _crop_pair(*pairs[i], train_cfg.crop, rng)
            batch.append((Tensor(syn), Tensor(clean)))
        return batch

    def emit(step, loss_d, loss_g, l1):
        log_fh.write(json.dumps({"step": step, "loss_d": loss_d,
                                 "loss_g": loss_g, "l1": l1}) + "\n")

    done = False
    # phase 1: discriminator-only warmup
    for _ in range(train_cfg.d_warmup_epochs):
        if done:
            break
        for idx in batch_indices():
            batch = make_batch(idx)
            disc.store.zero_grad()
            loss_d = d_loss_on(batch)
            loss_d.backward()
            opt_d.step()
            step += 1
            if step % log_every == 0:
                emit(step, loss_d.item(), 0.0, 0.0)
            if max_steps is not None and step >= max_steps:
                done = True
                break

    # phase 2: alternate D then G per batch
    for _ in range(train_cfg.epochs):
        if done:
            break
        for idx in batch_indices():
            batch = make_batch(idx)

            # D update: generator output detached, G untouched
            disc.store.zero_grad()
            loss_d = d_loss_on(batch)
            loss_d.backward()
            opt_d.step()

            # G update: D gradients flow but are never applied
            gen.store.zero_grad()
            disc.store.zero_grad()
            loss_g_total = None
            l1_total = 0.0
            for syn_t, clean_t in batch:
                fake = gen(syn_t)
                d_fake = disc(T.concat_channels([syn_t, fake]))
                l1 = (fake - clean_t).abs().mean()
                term = _adv_g(d_fake, train_cfg.adv_loss) + train_cfg.lambda_l1 * l1
                loss_g_total = term if loss_g_total is None else loss_g_total + term
                l1_total += l1.item()
            loss_g = loss_g_total * (1.0 / len(batch))
            loss_g.backward()
            opt_g.step()
            disc.store.zero_grad()

            step += 1
            if step % log_every == 0:
                emit(step, loss_d.item(), loss_g.item(), l1_total / len(batch))
            if max_steps is not None and step >= max_steps:
                done = True
                break

    log_fh.close()
    save_weights(gen.store, out_dir / "generator.pfw")
    save_weights(disc.store, out_dir / "discriminator.pfw")
    return {"generator": gen, "discriminator": disc,
            "log_path": log_path, "steps": step}
