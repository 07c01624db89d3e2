"""Seeded block weights and their binary tensor container.

Container layout (all integers little-endian)::

    bytes 0..7    magic b"AEROWTS1"
    bytes 8..11   uint32 length L of the JSON manifest
    next L bytes  UTF-8 JSON: {"meta": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
    remainder     float64 little-endian payload; ``offset`` counts values, not bytes
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

MAGIC = b"AEROWTS1"


@dataclass(frozen=True)
class NeuralParams:
    """Toy-scale sizes and loss weights."""

    d: int = 64
    d_t: int = 32
    h: int = 4
    k: int = 64
    n_keypoints: int = 32
    seed: int = 0
    ffn_mult: int = 2
    weight_aux: float = 1.0
    weight_mvc: float = 1.0
    weight_match: float = 1.0
    weight_tra: float = 1.0
    weight_rot: float = 1.0

    def __post_init__(self):
        for name in ("d", "d_t", "h", "k", "n_keypoints", "ffn_mult"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.d % self.h:
            raise ValueError(f"head count h={self.h} must divide d={self.d}")
        for name in ("weight_aux", "weight_mvc", "weight_match", "weight_tra", "weight_rot"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _shapes(p: NeuralParams) -> dict:
    d, k, f = p.d, p.k, p.ffn_mult * p.d
    shapes = {
        "wsa.q": (d, d), "wsa.k": (d, d), "wsa.v": (d, d),
        "wsa.phi_w": (d, d), "wsa.phi_b": (d,),
        "fuse.in_w": (d, d), "fuse.in_b": (d,), "fuse.proj": (d, k),
        "fuse.q": (d, d), "fuse.k": (d, d), "fuse.v": (d, d),
        "temp.filter_w": (2 * d, d), "temp.filter_b": (d,),
        "shape.filter_w": (d + 3, d), "shape.filter_b": (d,),
        "shape.ffn_w1": (d, f), "shape.ffn_b1": (f,), "shape.ffn_w2": (f, d), "shape.ffn_b2": (d,),
        "kp.q": (d, d), "kp.k": (d, d), "kp.v": (d, d), "kp.proj": (d, k), "kp.head": (d, p.n_keypoints),
        "tri.xy": (d, p.d_t), "tri.yz": (d, p.d_t), "tri.xz": (d, p.d_t),
    }
    for block in ("temp.mha1", "temp.mha2", "shape.mha"):
        for m in ("q", "k", "v", "o"):
            shapes[f"{block}.{m}"] = (d, d)
    for norm in ("temp.norm1", "temp.norm2", "shape.norm1", "shape.norm2"):
        shapes[f"{norm}.gain"] = (d,)
        shapes[f"{norm}.bias"] = (d,)
    return shapes


class BlockWeights:
    """Named weight tensors, read-only after construction.

    Matrices and biases are uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``;
    normalization gains start at one and their biases at zero.
    """

    def __init__(self, params: NeuralParams, tensors: dict):
        expected = _shapes(params)
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ValueError(f"weight names differ: missing={missing} extra={extra}")
        self.params = params
        self._t = {}
        for name, shape in expected.items():
            a = np.array(tensors[name], dtype=np.float64)
            if a.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name}: non-finite entries")
            a.setflags(write=False)
            self._t[name] = a

    @classmethod
    def seeded(cls, params: NeuralParams | None = None) -> "BlockWeights":
        params = params or NeuralParams()
        rng = np.random.default_rng(params.seed)
        tensors = {}
        # sorted names keep the draw order independent of dict construction
        for name, shape in sorted(_shapes(params).items()):
            if name.endswith(".gain"):
                tensors[name] = np.ones(shape)
            elif ".norm" in name and name.endswith(".bias"):
                tensors[name] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                tensors[name] = rng.uniform(-bound, bound, size=shape)
        return cls(params, tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._t[name]

    def names(self) -> list:
        return sorted(self._t)

    @property
    def h(self) -> int:
        return self.params.h

    @property
    def k(self) -> int:
        return self.params.k

    def __eq__(self, other):
        if not isinstance(other, BlockWeights):
            return NotImplemented
        return self.params == other.params and all(np.array_equal(self._t[n], other._t[n]) for n in self._t)


def save_weights(w: BlockWeights, fh) -> None:
    """Write ``w`` to a binary file object."""
    entries, offset = [], 0
    for name in w.names():
        a = w[name]
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size
    manifest = json.dumps({"meta": asdict(w.params), "tensors": entries}, sort_keys=True).encode("utf-8")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", len(manifest)))
    fh.write(manifest)
    for name in w.names():
        fh.write(np.ascontiguousarray(w[name], dtype="<f8").tobytes())


def load_weights(fh) -> BlockWeights:
    """Read a container written by :func:`save_weights`."""
    if fh.read(8) != MAGIC:
        raise ValueError("not a weight container (bad magic)")
    (length,) = struct.unpack("<I", fh.read(4))
    manifest = json.loads(fh.read(length).decode("utf-8"))
    payload = np.frombuffer(fh.read(), dtype="<f8")
    tensors = {}
    for e in manifest["tensors"]:
        size = int(np.prod(e["shape"], dtype=int))
        chunk = payload[e["offset"]:e["offset"] + size]
        if chunk.size != size:
            raise ValueError(f"{e['name']}: truncated payload")
        tensors[e["name"]] = chunk.reshape(e["shape"]).astype(np.float64)
    return BlockWeights(NeuralParams(**manifest["meta"]), tensors)
