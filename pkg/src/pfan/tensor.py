"""Dense tensors with reverse-mode automatic differentiation.

Values are float32 by default (training precision). Any tensor built from a
float64 array stays float64, which is how gradient checking runs the whole
graph in double precision.

Broadcasting follows trailing-dimension alignment only. Backward passes are
single-threaded over one graph; tensors carry no global state, so independent
graphs may run concurrently.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float32

# plain Python floats: NumPy scalar constants would promote float32 arrays
_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float64:
        return arr
    return arr.astype(DEFAULT_DTYPE, copy=False)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after trailing-dim broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """N-dimensional array of scalars with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._vjp = None

    # -- construction -----------------------------------------------------

    @staticmethod
    def _result(data, parents, vjp) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        return out

    @staticmethod
    def zeros(shape, dtype=None) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype or DEFAULT_DTYPE))

    @staticmethod
    def ones(shape, dtype=None) -> "Tensor":
        return Tensor(np.ones(shape, dtype=dtype or DEFAULT_DTYPE))

    # -- introspection ----------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- backward ---------------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every requires_grad leaf.

        Repeated calls keep accumulating; use zero_grad to reset leaves.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")

        # iterative topological sort (graphs can exceed recursion limits)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is not None:
                for parent, pg in zip(node._parents, node._vjp(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    if id(parent) in grads:
                        grads[id(parent)] += pg
                    else:
                        grads[id(parent)] = np.array(pg, copy=True)
            elif node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g

    # -- elementwise arithmetic -------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        if isinstance(other, (int, float, np.integer, np.floating)):
            # plain scalars adopt this tensor's dtype instead of promoting
            return Tensor(np.asarray(other, dtype=self.data.dtype))
        return Tensor(other)

    @staticmethod
    def _broadcast_check(a: "Tensor", b: "Tensor") -> None:
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError as exc:
            raise ShapeError(f"shapes {a.shape} and {b.shape} do not broadcast") from exc

    def __add__(self, other):
        b = self._coerce(other)
        Tensor._broadcast_check(self, b)

        def vjp(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, b.shape)

        return Tensor._result(self.data + b.data, (self, b), vjp)

    __radd__ = __add__

    def __sub__(self, other):
        b = self._coerce(other)
        Tensor._broadcast_check(self, b)

        def vjp(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, b.shape)

        return Tensor._result(self.data - b.data, (self, b), vjp)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        a, b = self, self._coerce(other)
        Tensor._broadcast_check(a, b)

        def vjp(g):
            return (_unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape))

        return Tensor._result(a.data * b.data, (a, b), vjp)

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, self._coerce(other)
        Tensor._broadcast_check(a, b)

        def vjp(g):
            return (_unbroadcast(g / b.data, a.shape),
                    _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._result(a.data / b.data, (a, b), vjp)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __neg__(self):
        def vjp(g):
            return (-g,)

        return Tensor._result(-self.data, (self,), vjp)

    def __pow__(self, exponent: float):
        p = float(exponent)

        def vjp(g):
            return (g * p * self.data ** (p - 1.0),)

        return Tensor._result(self.data ** p, (self,), vjp)

    # -- shape ops ----------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        new_size = int(np.prod(shape)) if -1 not in shape else self.size
        if -1 not in shape and new_size != self.size:
            raise ShapeError(f"cannot reshape {self.shape} ({self.size} elems) to {shape}")
        old_shape = self.shape

        def vjp(g):
            return (g.reshape(old_shape),)

        return Tensor._result(self.data.reshape(shape), (self,), vjp)

    def permute(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)

        def vjp(g):
            return (np.transpose(g, inv),)

        return Tensor._result(np.transpose(self.data, axes), (self,), vjp)

    @property
    def T(self) -> "Tensor":
        if self.data.ndim != 2:
            raise ShapeError("T is defined for 2-D tensors")
        return self.permute(1, 0)

    def __getitem__(self, key) -> "Tensor":
        shape = self.shape

        def vjp(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[key] = g
            return (full,)

        return Tensor._result(self.data[key], (self,), vjp)

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, shape).copy(),)

        return Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), vjp)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        else:
            n = self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def abs(self) -> "Tensor":
        def vjp(g):
            return (g * np.sign(self.data),)

        return Tensor._result(np.abs(self.data), (self,), vjp)

    # -- transcendental -------------------------------------------------------

    def exp(self) -> "Tensor":
        y = np.exp(self.data)

        def vjp(g):
            return (g * y,)

        return Tensor._result(y, (self,), vjp)

    def log(self) -> "Tensor":
        def vjp(g):
            return (g / self.data,)

        return Tensor._result(np.log(self.data), (self,), vjp)


# -- functional ops ---------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product with gradients g·bᵀ and aᵀ·g."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._result(a.data @ b.data, (a, b), vjp)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis``."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return Tensor._result(y, (x,), vjp)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x · Φ(x)."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)

    def vjp(g):
        return (g * (cdf + x.data * pdf),)

    return Tensor._result(x.data * cdf, (x,), vjp)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data >= 0

    def vjp(g):
        return (g * np.where(mask, 1.0, slope),)

    return Tensor._result(np.where(mask, x.data, slope * x.data), (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    # stable for large |x| in either direction
    y = np.empty_like(x.data)
    pos = x.data >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    y[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * y * (1.0 - y),)

    return Tensor._result(y, (x,), vjp)


def mean_along_axis(x: Tensor, axis: int) -> Tensor:
    return x.mean(axis=axis)


def concat(tensors: list, axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            g[tuple(slice(None) if d != axis % g.ndim else slice(offsets[i], offsets[i + 1])
                    for d in range(g.ndim))]
            for i in range(len(tensors))
        )

    return Tensor._result(np.concatenate([t.data for t in tensors], axis=axis),
                          tuple(tensors), vjp)


def concat_channels(tensors: list) -> Tensor:
    """Concatenate feature maps / images along their leading channel axis."""
    return concat(tensors, axis=0)


def _reflect_indices(n: int, before: int, after: int) -> np.ndarray:
    return np.pad(np.arange(n), (before, after), mode="reflect")


def _fold_axis(g: np.ndarray, idx: np.ndarray, n: int, axis: int) -> np.ndarray:
    """Scatter-add ``g`` along ``axis`` into an array of extent ``n``."""
    gm = np.moveaxis(g, axis, -1)
    out = np.zeros(gm.shape[:-1] + (n,), dtype=gm.dtype)
    np.add.at(out, (..., idx), gm)
    return np.moveaxis(out, -1, axis)


def pad2d(x: Tensor, pad_h: tuple, pad_w: tuple, mode: str = "zero") -> Tensor:
    """Pad the last two axes. ``mode`` is "zero" or "reflect"."""
    (hb, ha), (wb, wa) = pad_h, pad_w
    H, W = x.shape[-2], x.shape[-1]
    width = [(0, 0)] * (x.data.ndim - 2) + [(hb, ha), (wb, wa)]
    if mode == "zero":
        data = np.pad(x.data, width)

        def vjp(g):
            return (g[..., hb:hb + H, wb:wb + W],)

    elif mode == "reflect":
        data = np.pad(x.data, width, mode="reflect")
        ih = _reflect_indices(H, hb, ha)
        iw = _reflect_indices(W, wb, wa)

        def vjp(g):
            g = _fold_axis(g, iw, W, axis=-1)
            return (_fold_axis(g, ih, H, axis=-2),)

    else:
        raise ValueError(f"unknown pad mode {mode!r}")
    return Tensor._result(data, (x,), vjp)


def crop2d(x: Tensor, h0: int, h1: int, w0: int, w1: int) -> Tensor:
    """Keep rows [h0, h1) and columns [w0, w1) of the last two axes."""
    return x[..., h0:h1, w0:w1]


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, groups: int = 1) -> Tensor:
    """Grouped 2-D cross-correlation.

    ``x`` is (C_in, H, W) or (N, C_in, H, W); ``w`` is (C_out, C_in/g, k, k).
    groups=1 is a standard convolution, groups=C_in=C_out is depthwise.
    """
    squeeze_batch = x.data.ndim == 3
    xd = x.data[None] if squeeze_batch else x.data
    if xd.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d expects (N,C,H,W)/(C,H,W) input and (O,I,k,k) weights")
    n, c_in, hh, ww = xd.shape
    c_out, c_per_g, kh, kw = w.shape
    if kh != kw:
        raise ShapeError("square kernels only")
    k = kh
    if c_in % groups or c_out % groups:
        raise ShapeError(f"groups={groups} must divide C_in={c_in} and C_out={c_out}")
    if c_per_g != c_in // groups:
        raise ShapeError(f"weight expects {c_per_g} channels per group, input provides {c_in // groups}")
    if k > hh + 2 * padding or k > ww + 2 * padding:
        raise ShapeError(f"kernel {k} larger than padded input ({hh + 2 * padding}x{ww + 2 * padding})")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (hh + 2 * padding - k) // stride + 1
    wo = (ww + 2 * padding - k) // stride + 1
    # (N, C_in, Ho, Wo, k, k) strided view of every receptive field
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.reshape(n, groups, c_in // groups, ho, wo, k, k)
    wg = w.data.reshape(groups, c_out // groups, c_in // groups, k, k)
    out = np.einsum("ngchwij,gocij->ngohw", cols, wg, optimize=True)
    out = out.reshape(n, c_out, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, c_out, 1, 1)
    out_data = out[0] if squeeze_batch else out

    def vjp(g):
        gb = g[None] if squeeze_batch else g
        gg = gb.reshape(n, groups, c_out // groups, ho, wo)
        dw = np.einsum("ngchwij,ngohw->gocij", cols, gg, optimize=True).reshape(w.shape)
        dcols = np.einsum("ngohw,gocij->ngchwij", gg, wg, optimize=True)
        dcols = dcols.reshape(n, c_in, ho, wo, k, k)
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[..., i, j]
        dx = dxp[:, :, padding:padding + hh, padding:padding + ww]
        if squeeze_batch:
            dx = dx[0]
        db = None if bias is None else gb.sum(axis=(0, 2, 3))
        return dx, dw, db

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor._result(out_data, parents, vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing (channel) axis, then affine.

    A zero-variance token normalizes to 0, so the output there is beta.
    """
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    c = x.shape[-1]

    def vjp(g):
        gx = g * gamma.data
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        reduce_axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=reduce_axes).reshape(gamma.shape) if g.ndim > 1 else g * xhat
        dbeta = g.sum(axis=reduce_axes).reshape(beta.shape) if g.ndim > 1 else np.array(g, copy=True)
        return dx, dgamma, dbeta

    _ = c
    return Tensor._result(out, (x, gamma, beta), vjp)


def avg_pool_spatial(x: Tensor) -> Tensor:
    """Global average over H and W of a (C, H, W) map → (C,)."""
    if x.data.ndim != 3:
        raise ShapeError("avg_pool_spatial expects (C, H, W)")
    c, h, w = x.shape
    scale = 1.0 / (h * w)

    def vjp(g):
        return (np.broadcast_to(g.reshape(c, 1, 1) * scale, (c, h, w)).copy(),)

    return Tensor._result(x.data.mean(axis=(1, 2)), (x,), vjp)


def max_pool_spatial(x: Tensor) -> Tensor:
    """Global max over H and W of a (C, H, W) map → (C,).

    Ties route the gradient to the first maximum in row-major scan order.
    """
    if x.data.ndim != 3:
        raise ShapeError("max_pool_spatial expects (C, H, W)")
    c = x.shape[0]
    flat = x.data.reshape(c, -1)
    arg = flat.argmax(axis=1)  # np.argmax returns the first maximum

    def vjp(g):
        dx = np.zeros_like(flat)
        dx[np.arange(c), arg] = g
        return (dx.reshape(x.shape),)

    return Tensor._result(flat[np.arange(c), arg], (x,), vjp)


def clamp01(img: np.ndarray) -> np.ndarray:
    """Inference-time clamp to [0, 1]; not part of any gradient graph."""
    return np.clip(img, 0.0, 1.0)
