from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from app.errors import CoopEdlError
from app.services.network import ActivationKind, LayerSpec, NetworkParams

logger = logging.getLogger(__name__)

MAGIC = b"EDLN"
VERSION = 1
FLAG_BIAS = 0x1
ACTIVATION_CODES = {
    ActivationKind.IDENTITY: 0,
    ActivationKind.RELU: 1,
    ActivationKind.TANH: 2,
}
ACTIVATIONS_BY_CODE = {code: kind for kind, code in ACTIVATION_CODES.items()}

_HEADER = struct.Struct("<4sIII")
_LAYER = struct.Struct("<III")


class CheckpointError(CoopEdlError):
    pass


def dump_network(params: NetworkParams) -> bytes:
    flags = FLAG_BIAS if params.bias else 0
    chunks = [_HEADER.pack(MAGIC, VERSION, flags, params.depth)]
    for spec, weight in zip(params.specs, params.weights):
        chunks.append(_LAYER.pack(spec.in_dim, spec.out_dim, ACTIVATION_CODES[spec.activation]))
        chunks.append(np.ascontiguousarray(weight, dtype="<f8").tobytes())
    return b"".join(chunks)


def parse_network(blob: bytes) -> NetworkParams:
    if len(blob) < _HEADER.size:
        raise CheckpointError("checkpoint truncated before header")
    magic, version, flags, depth = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    bias = bool(flags & FLAG_BIAS)
    offset = _HEADER.size
    specs: list[LayerSpec] = []
    weights: list[np.ndarray] = []
    for index in range(depth):
        if offset + _LAYER.size > len(blob):
            raise CheckpointError(f"checkpoint truncated in layer {index + 1} header")
        in_dim, out_dim, code = _LAYER.unpack_from(blob, offset)
        offset += _LAYER.size
        if code not in ACTIVATIONS_BY_CODE:
            raise CheckpointError(f"unknown activation code {code} in layer {index + 1}")
        rows = in_dim + int(bias)
        size = rows * out_dim * 8
        if offset + size > len(blob):
            raise CheckpointError(f"checkpoint truncated in layer {index + 1} weights")
        weight = np.frombuffer(blob, dtype="<f8", count=rows * out_dim, offset=offset)
        offset += size
        specs.append(LayerSpec(in_dim, out_dim, ACTIVATIONS_BY_CODE[code]))
        weights.append(weight.astype(np.float64).reshape(rows, out_dim))
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes after last layer")
    return NetworkParams(specs=tuple(specs), weights=tuple(weights), bias=bias)


def save_network(path: Path, params: NetworkParams) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_network(params))
    logger.debug("wrote checkpoint %s (%d layers)", path, params.depth)


def load_network(path: Path) -> NetworkParams:
    return parse_network(path.read_bytes())
