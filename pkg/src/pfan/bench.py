"""Attention scaling benchmark: analytic vs instrumented op counts, wall time.

The instrumented kernels run the same math as the model's attention paths on
plain arrays, incrementing a counter for every op family the closed-form
polynomials in pfan.model.flop_count describe. Acceptance binds to the op
counts; wall time is reported for context only (machine dependent).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from pfan.model import flop_count

FULL_ATTENTION_SIZE_CAP = 128 * 128  # token count guard for the O(N^2) kernel


class BenchSizeError(ValueError):
    """Raised when full attention would exceed the documented size cap."""


class OpCounter:
    def __init__(self):
        self.count = 0

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        m, k = a.shape
        k2, n = b.shape
        assert k == k2
        self.count += m * n * k
        return a @ b

    def scale(self, a: np.ndarray, s: float) -> np.ndarray:
        self.count += a.size
        return a * s

    def accumulate(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = a + b
        self.count += out.size
        return out


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sea_attention_counted(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                          counter: OpCounter | None = None) -> np.ndarray:
    """Squeezed axial attention on pre-projected (C, H, W) q/k/v maps."""
    counter = counter or OpCounter()
    c_qk, h, w = q.shape
    c_v = v.shape[0]
    # squeeze: sums are free, the 1/n scaling is one multiply per element
    qh = counter.scale(q.sum(axis=2).T, 1.0 / w)   # (H, C_qk)
    kh = counter.scale(k.sum(axis=2).T, 1.0 / w)
    vh = counter.scale(v.sum(axis=2).T, 1.0 / w)   # (H, C_v)
    qv = counter.scale(q.sum(axis=1).T, 1.0 / h)   # (W, C_qk)
    kv = counter.scale(k.sum(axis=1).T, 1.0 / h)
    vv = counter.scale(v.sum(axis=1).T, 1.0 / h)
    out_h = counter.matmul(_softmax(counter.matmul(qh, kh.T)), vh)  # (H, C_v)
    out_v = counter.matmul(_softmax(counter.matmul(qv, kv.T)), vv)  # (W, C_v)
    y = counter.accumulate(out_h.T[:, :, None],
                           np.broadcast_to(out_v.T[:, None, :], (c_v, h, w)))
    return y


def full_attention_counted(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                           counter: OpCounter | None = None) -> np.ndarray:
    """Global self-attention over all HW tokens on (C, H, W) q/k/v maps."""
    counter = counter or OpCounter()
    c_qk, h, w = q.shape
    c_v = v.shape[0]
    if h * w > FULL_ATTENTION_SIZE_CAP:
        raise BenchSizeError(
            f"full attention at {h}x{w} exceeds the {FULL_ATTENTION_SIZE_CAP}-token cap")
    qt = q.reshape(c_qk, h * w).T                          # (HW, C_qk)
    attn = _softmax(counter.matmul(qt, k.reshape(c_qk, h * w)))
    y = counter.matmul(attn, v.reshape(c_v, h * w).T)      # (HW, C_v)
    return y.T.reshape(c_v, h, w)


@dataclass
class BenchRecord:
    kind: str
    h: int
    w: int
    c: int
    c_qk: int
    c_v: int
    median_seconds: float
    analytic_flops: int
    measured_flops: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def run_attention_bench(sizes: list, c: int = 64, reps: int = 5,
                        seed: int = 0) -> list:
    """Run both kernels on identical random inputs at each (H, W) size."""
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    c_qk = c_v = c // 2
    rng = np.random.default_rng(seed)
    records = []
    for h, w in sizes:
        q = rng.standard_normal((c_qk, h, w)).astype(np.float32)
        k = rng.standard_normal((c_qk, h, w)).astype(np.float32)
        v = rng.standard_normal((c_v, h, w)).astype(np.float32)
        for kind, kernel in (("sea", sea_attention_counted),
                             ("full", full_attention_counted)):
            counter = OpCounter()
            kernel(q, k, v, counter)
            measured = counter.count
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                kernel(q, k, v, OpCounter())
                times.append(time.perf_counter() - t0)
            records.append(BenchRecord(
                kind=kind, h=h, w=w, c=c, c_qk=c_qk, c_v=c_v,
                median_seconds=float(np.median(times)),
                analytic_flops=flop_count(kind, c, c_qk, c_v, h, w),
                measured_flops=measured,
            ))
    return records


def format_table(records: list) -> str:
    header = (f"{'kind':>5} {'H':>5} {'W':>5} {'C':>4} "
              f"{'median_s':>10} {'analytic':>14} {'measured':>14}")
    lines = [header, "-" * len(header)]
    for r in records:
        lines.append(f"{r.kind:>5} {r.h:>5} {r.w:>5} {r.c:>4} "
                     f"{r.median_seconds:>10.6f} {r.analytic_flops:>14} "
                     f"{r.measured_flops:>14}")
    return "\n".join(lines)
