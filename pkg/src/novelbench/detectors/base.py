"""Common detector contract and the on-disk blob format.

Blob layout: ``MAGIC`` (8 bytes), header length (uint32 little endian),
UTF-8 JSON header, then an uncompressed ``.npz`` payload with the arrays.
The header records the format version, algorithm, config and fit time.
"""

from __future__ import annotations

import io
import json
import struct
from abc import ABC, abstractmethod

import numpy as np

from .._util import stable_seed
from ..nn import Layer, Mlp
from .config import DetectorConfig

MAGIC = b"NVBDET\x00\x01"
FORMAT_VERSION = 1

_REGISTRY: dict[str, type["TrainedDetector"]] = {}


class TrainedDetector(ABC):
    """A fitted anomaly scorer; higher scores mean more anomalous."""

    algorithms: tuple[str, ...] = ()

    def __init__(self, config: DetectorConfig, dim: int):
        self.config = config
        self.dim = dim
        self.fit_time = 0.0

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        for a in cls.algorithms:
            _REGISTRY[a] = cls

    @property
    def algorithm(self) -> str:
        return self.config.algorithm

    @property
    def score_seed(self) -> int:
        return stable_seed(self.config.seed, "score")

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected samples with {self.dim} features, got shape {x.shape}")
        return x

    @abstractmethod
    def score(self, x) -> np.ndarray:
        """Anomaly scores for the rows of ``x``."""

    @abstractmethod
    def _arrays(self) -> dict[str, np.ndarray]:
        ...

    @classmethod
    @abstractmethod
    def _restore(cls, config: DetectorConfig, dim: int, arrays: dict, meta: dict) -> "TrainedDetector":
        ...

    def _meta(self) -> dict:
        return {}

    def to_bytes(self) -> bytes:
        header = {
            "format_version": FORMAT_VERSION,
            "algorithm": self.algorithm,
            "config": self.config.to_dict(),
            "dim": self.dim,
            "fit_time": self.fit_time,
            "meta": self._meta(),
        }
        hbytes = json.dumps(header, sort_keys=True).encode()
        buf = io.BytesIO()
        np.savez(buf, **self._arrays())
        return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + buf.getvalue()

    @staticmethod
    def from_bytes(blob: bytes) -> "TrainedDetector":
        if blob[:8] != MAGIC:
            raise ValueError("not a detector blob")
        (hlen,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12:12 + hlen].decode())
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported detector format {header['format_version']}")
        with np.load(io.BytesIO(blob[12 + hlen:])) as npz:
            arrays = {k: npz[k] for k in npz.files}
        config = DetectorConfig.from_dict(header["config"])
        cls = _REGISTRY[header["algorithm"]]
        det = cls._restore(config, header["dim"], arrays, header["meta"])
        det.fit_time = header["fit_time"]
        return det


def mlp_arrays(prefix: str, mlp: Mlp) -> dict[str, np.ndarray]:
    out = {}
    for i, layer in enumerate(mlp.layers):
        out[f"{prefix}.w{i}"] = layer.weight
        out[f"{prefix}.b{i}"] = layer.bias
    return out


def mlp_meta(mlp: Mlp) -> dict:
    return {"activations": [l.activation for l in mlp.layers], "seed": mlp.seed}


def mlp_restore(prefix: str, arrays: dict, meta: dict) -> Mlp:
    layers = tuple(
        Layer(arrays[f"{prefix}.w{i}"], arrays[f"{prefix}.b{i}"], act)
        for i, act in enumerate(meta["activations"]))
    return Mlp(layers, meta["seed"])
