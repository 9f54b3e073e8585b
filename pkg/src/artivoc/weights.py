"""Binary weight container: magic "RTVC1", little-endian f32 tensors.

Layout: magic (5 bytes), version u32, tensor count u32, then per tensor:
name_len u16, name utf-8, ndim u8, dims u32 * ndim, raw f32 data in C order.
Save/load round-trips bit-exactly; tensor order is preserved.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError, GraphMismatchError, TruncationError
from .graphs import ModelGraph

MAGIC = b"RTVC1"
VERSION = 1


@dataclass
class WeightBundle:
    version: int = VERSION
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def require(self, name: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
        t = self.tensors.get(name)
        if t is None:
            raise GraphMismatchError(f"missing tensor {name!r}")
        if shape is not None and t.shape != tuple(shape):
            raise GraphMismatchError(
                f"tensor {name!r} has shape {t.shape}, expected {tuple(shape)}"
            )
        return t

    def validate_for(self, graph: ModelGraph) -> None:
        for name, shape in graph.tensor_shapes().items():
            self.require(name, shape)


def _check_tensor(name: str, arr: np.ndarray) -> np.ndarray:
    if not name or len(name.encode("utf-8")) > 0xFFFF:
        raise FormatError(f"bad tensor name {name!r}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if arr.ndim > 0xFF:
        raise FormatError(f"tensor {name!r} has too many dims")
    if not np.isfinite(arr).all():
        raise DataError(f"tensor {name!r} contains NaN or inf")
    return arr


def save_bytes(bundle: WeightBundle) -> bytes:
    out = [MAGIC, struct.pack("<I", bundle.version), struct.pack("<I", len(bundle.tensors))]
    for name, arr in bundle.tensors.items():
        arr = _check_tensor(name, arr)
        nb = name.encode("utf-8")
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes(order="C"))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncationError(
                f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def load_bytes(data: bytes) -> WeightBundle:
    r = _Reader(bytes(data))
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError("bad magic, not a weight bundle")
    (version,) = struct.unpack("<I", r.take(4))
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    (count,) = struct.unpack("<I", r.take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", r.take(1))
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim)) if ndim else ()
        n_el = 1
        for d in shape:
            n_el *= d
        raw = r.take(4 * n_el)
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if not np.isfinite(arr).all():
            raise DataError(f"tensor {name!r} contains NaN or inf")
        if name in tensors:
            raise FormatError(f"duplicate tensor {name!r}")
        tensors[name] = arr
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after tensor table")
    return WeightBundle(version, tensors)


def save_file(bundle: WeightBundle, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_bytes(bundle))


def load_file(path) -> WeightBundle:
    with open(path, "rb") as fh:
        return load_bytes(fh.read())


def random_init(graph: ModelGraph, seed: int, bias_scale: float = 0.0) -> WeightBundle:
    """Deterministic random weights for one graph.

    Weights are fan-in scaled so activations stay O(1) through deep stacks;
    biases default to zero, which keeps zero input mapping to zero features.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in graph.tensor_shapes().items():
        if name.endswith(".bias"):
            if bias_scale > 0:
                t = rng.normal(0.0, bias_scale, size=shape)
            else:
                t = np.zeros(shape)
        else:
            fan_in = 1
            for d in shape[1:]:
                fan_in *= d
            t = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
        tensors[name] = t.astype(np.float32)
    return WeightBundle(VERSION, tensors)


def init_registry(registry: dict[str, ModelGraph], seed: int) -> WeightBundle:
    """One bundle holding fresh random weights for every registry graph.

    Each graph gets an independent, name-derived stream so adding a model
    never shifts another model's draws.
    """
    merged: dict[str, np.ndarray] = {}
    for name in sorted(registry):
        sub_seed = np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))])
        sub = random_init(registry[name], np.random.default_rng(sub_seed).integers(2**31))
        merged.update(sub.tensors)
    return WeightBundle(VERSION, merged)


def merge_bundles(*bundles: WeightBundle) -> WeightBundle:
    merged: dict[str, np.ndarray] = {}
    for b in bundles:
        for name, arr in b.tensors.items():
            if name in merged:
                raise FormatError(f"duplicate tensor {name!r} while merging")
            merged[name] = arr
    return WeightBundle(VERSION, merged)
