"""Parameter registry, layer specs, initialization and weight serialization.

Weight file layout (little-endian throughout):

    offset  size  field
    0       8     magic  b"PFANWTS\\x01" (last byte is the format version)
    8       4     uint32 entry count
    then per entry:
            2     uint16 name length
            n     utf-8 parameter name
            1     uint8  dtype code (0 = float32, 1 = float64)
            1     uint8  rank
            4*r   uint32 extents
            *     raw row-major scalar data

Round-trips are bit-exact; loading never leaves partial state behind.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from pfan.tensor import Tensor

MAGIC = b"PFANWTS\x01"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}

INIT_STD = 0.02


class WeightFormatError(ValueError):
    """Raised for unreadable, truncated or version-mismatched weight files."""


class WeightShapeError(ValueError):
    """Raised when loaded weights do not match the target topology."""


@dataclass
class LayerSpec:
    """Declarative description of one parameterized layer."""

    kind: str  # conv | pointwise | depthwise | linear | norm
    in_channels: int
    out_channels: int
    kernel: int = 1
    groups: int = 1
    activation: str | None = None

    def __post_init__(self):
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"groups={self.groups} must divide in={self.in_channels} "
                f"and out={self.out_channels}")


class ParamStore:
    """Hierarchically named parameters with deterministic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray, requires_grad: bool = True) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=requires_grad)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def checksum(self) -> int:
        """Order-sensitive hash of every value bit; used by freeze tests."""
        h = 0
        for name, t in self._params.items():
            h = hash((h, name, t.data.tobytes())) & 0xFFFFFFFFFFFFFFFF
        return h

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for name, t in self._params.items():
            out.add(name, t.data.astype(dtype))
        return out


def init_params(spec: LayerSpec, rng: np.random.Generator, store: ParamStore,
                prefix: str, dtype=np.float32) -> dict[str, Tensor]:
    """Create the parameters of one layer: weights ~ Normal(0, 0.02), biases 0.

    Norm layers get gamma=1 / beta=0. Deterministic under the generator state.
    """
    entries: dict[str, Tensor] = {}
    if spec.kind == "norm":
        entries["gamma"] = store.add(f"{prefix}.gamma",
                                     np.ones(spec.out_channels, dtype=dtype))
        entries["beta"] = store.add(f"{prefix}.beta",
                                    np.zeros(spec.out_channels, dtype=dtype))
        return entries
    if spec.kind == "linear":
        wshape = (spec.out_channels, spec.in_channels)
    else:
        wshape = (spec.out_channels, spec.in_channels // spec.groups,
                  spec.kernel, spec.kernel)
    w = rng.normal(0.0, INIT_STD, size=wshape).astype(dtype)
    entries["w"] = store.add(f"{prefix}.w", w)
    entries["b"] = store.add(f"{prefix}.b", np.zeros(spec.out_channels, dtype=dtype))
    return entries


def count_params(store: ParamStore) -> int:
    """Exact scalar count over every entry."""
    return sum(t.size for t in store.tensors())


def save_weights(store: ParamStore, path) -> None:
    chunks = [MAGIC, struct.pack("<I", len(store))]
    for name, t in store.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(t.data)
        code = _DTYPE_CODES.get(arr.dtype)
        if code is None:
            raise WeightFormatError(f"unsupported dtype {arr.dtype} for {name!r}")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BB", code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype(_CODE_DTYPES[code], copy=False).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_weights(path) -> ParamStore:
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise WeightFormatError(f"truncated weight file: expected {what}")
        out = blob[pos:pos + n]
        pos += n
        return out

    pos = 0
    magic = take(8, "magic header")
    if magic[:7] != MAGIC[:7]:
        raise WeightFormatError("not a weight file (bad magic)")
    if magic[7] != MAGIC[7]:
        raise WeightFormatError(f"unsupported weight format version {magic[7]}")
    (count,) = struct.unpack("<I", take(4, "entry count"))
    store = ParamStore()
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        code, rank = struct.unpack("<BB", take(2, "dtype/rank"))
        if code not in _CODE_DTYPES:
            raise WeightFormatError(f"unknown dtype code {code} for {name!r}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "shape"))
        dt = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        data = np.frombuffer(take(nbytes, f"data of {name!r}"), dtype=dt).reshape(shape)
        store.add(name, np.array(data))  # owned, writable copy
    return store


def load_into(store: ParamStore, loaded: ParamStore) -> None:
    """Copy ``loaded`` values into an existing model store, validating shapes."""
    missing = [n for n in store.names() if n not in loaded]
    if missing:
        raise WeightShapeError(f"weight file is missing parameter {missing[0]!r}")
    extra = [n for n in loaded.names() if n not in store]
    if extra:
        raise WeightShapeError(f"weight file has unknown parameter {extra[0]!r}")
    for name, t in store.items():
        src = loaded[name]
        if src.shape != t.shape:
            raise WeightShapeError(
                f"shape mismatch for {name!r}: file {src.shape}, model {t.shape}")
    for name, t in store.items():
        t.data = loaded[name].data.astype(t.data.dtype, copy=True)
