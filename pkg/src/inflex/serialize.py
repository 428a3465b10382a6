"""Binary model container.

Layout (all integers little-endian)::

    8 bytes   magic  b"INFLXMDL"
    uint32    format version
    uint64    header length in bytes
    header    UTF-8 JSON: model dims, vocabulary, config hash, and the
              ordered list of parameter names and shapes
    blocks    each parameter as raw float64 LE, row-major, in header order

JSON keys are sorted, so equal models produce identical files.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .corpus import Vocabulary
from .errors import DataError
from .model import ModelConfig, ModelParams, param_shapes

MAGIC = b"INFLXMDL"
VERSION = 1


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def to_bytes(p: ModelParams, meta: dict | None = None) -> bytes:
    header = {
        "format": "inflex-model",
        "version": VERSION,
        "model": p.config.to_dict(),
        "vocab": p.vocab.to_dict(),
        "params": [{"name": k, "shape": list(t.shape)} for k, t in p.items()],
        "meta": meta or {},
    }
    hb = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(hb)), hb]
    parts.extend(np.ascontiguousarray(t.value, dtype="<f8").tobytes() for t in p)
    return b"".join(parts)


def save(path, p: ModelParams, meta: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(p, meta))


def load(path) -> tuple[ModelParams, dict]:
    """Read a container; returns the parameters and the header's ``meta``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: not an inflex model file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != VERSION:
        raise DataError(f"{path}: unsupported model version {version}")
    offset = 8 + 12
    header = json.loads(data[offset:offset + hlen].decode("utf-8"))
    offset += hlen
    cfg = ModelConfig(**header["model"])
    vocab = Vocabulary.from_dict(header["vocab"])
    expected = param_shapes(cfg, vocab.n_chars, vocab.n_tags, vocab.n_languages)
    tensors = {}
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if expected.get(name) != shape:
            raise DataError(f"{path}: parameter {name} has shape {shape}, expected {expected.get(name)}")
        n = int(np.prod(shape))
        block = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64).reshape(shape)
        offset += 8 * n
        tensors[name] = Tensor(block, requires_grad=True, name=name)
    if offset != len(data):
        raise DataError(f"{path}: {len(data) - offset} trailing bytes")
    return ModelParams(cfg, vocab, tensors), header.get("meta", {})
