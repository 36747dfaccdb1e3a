from __future__ import annotations

import struct

import numpy as np
import pytest

from app.services.checkpoint import CheckpointError, dump_network, load_network, parse_network, save_network
from app.services.network import ActivationKind, LayerSpec, init_network


def sample_params(bias: bool = True):
    specs = [LayerSpec(4, 8, ActivationKind.RELU), LayerSpec(8, 6, ActivationKind.TANH), LayerSpec(6, 2)]
    return init_network(specs, seed=17, bias=bias)


def test_round_trip_is_bit_exact(tmp_path) -> None:
    for bias in (True, False):
        params = sample_params(bias)
        path = tmp_path / f"net_{bias}.edln"
        save_network(path, params)
        restored = load_network(path)
        assert restored.bias == bias
        assert restored.specs == params.specs
        for original, loaded in zip(params.weights, restored.weights):
            assert original.tobytes() == loaded.tobytes()


def test_header_layout() -> None:
    blob = dump_network(sample_params())
    magic, version, flags, depth = struct.unpack_from("<4sIII", blob, 0)
    assert (magic, version, flags, depth) == (b"EDLN", 1, 1, 3)
    assert struct.unpack_from("<III", blob, 16) == (4, 8, 1)
    first_weight = np.frombuffer(blob, dtype="<f8", count=1, offset=28)[0]
    assert first_weight == sample_params().weights[0][0, 0]


def test_corrupt_files_are_rejected() -> None:
    blob = dump_network(sample_params())
    with pytest.raises(CheckpointError):
        parse_network(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError):
        parse_network(blob[:-8])
    with pytest.raises(CheckpointError):
        parse_network(blob + b"\x00")
    with pytest.raises(CheckpointError):
        parse_network(blob[:8])
