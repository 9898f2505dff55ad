import struct

import numpy as np
import pytest

from needletrack.weights_io import (WeightsFormatError, load_weights, save_weights)


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "conv1.weight": rng.standard_normal((2, 3, 3, 3)).astype(np.float32),
        "conv1.bias": rng.standard_normal(2).astype(np.float32),
        "fc2.weight": rng.standard_normal((3, 8)).astype(np.float32),
    }
    path = tmp_path / "w.ntwt"
    save_weights(path, tensors)
    loaded = load_weights(path)
    assert set(loaded) == set(tensors)
    for name in tensors:
        np.testing.assert_array_equal(loaded[name], tensors[name])
        assert loaded[name].dtype == np.float32


def test_byte_layout(tmp_path):
    path = tmp_path / "w.ntwt"
    save_weights(path, {"b": np.array([1.5], dtype=np.float32),
                        "a": np.array([[2.0, 3.0]], dtype=np.float32)})
    data = path.read_bytes()
    assert data[:4] == b"NTWT"
    assert data[4] == 1  # format version
    # tensors in ascending name order: "a" first
    name_len = struct.unpack_from("<H", data, 5)[0]
    assert name_len == 1
    assert data[7:8] == b"a"
    dtype_code, rank = struct.unpack_from("<BB", data, 8)
    assert dtype_code == 1 and rank == 2
    dims = struct.unpack_from("<2I", data, 10)
    assert dims == (1, 2)
    values = struct.unpack_from("<2f", data, 18)
    assert values == (2.0, 3.0)


def test_float64_input_saved_as_f32(tmp_path):
    path = tmp_path / "w.ntwt"
    save_weights(path, {"x": np.array([1.0 + 1e-12], dtype=np.float64)})
    loaded = load_weights(path)
    assert loaded["x"].dtype == np.float32


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ntwt"
    path.write_bytes(b"XXXX\x01")
    with pytest.raises(WeightsFormatError, match="magic"):
        load_weights(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "w.ntwt"
    save_weights(path, {"x": np.arange(10, dtype=np.float32)})
    good = path.read_bytes()
    path.write_bytes(good[:-8])
    with pytest.raises(WeightsFormatError, match="truncated"):
        load_weights(path)


def test_unknown_dtype_rejected(tmp_path):
    path = tmp_path / "w.ntwt"
    body = b"NTWT" + bytes([1]) + struct.pack("<H", 1) + b"x" + struct.pack("<BB", 9, 1) \
        + struct.pack("<I", 1) + struct.pack("<f", 0.0)
    path.write_bytes(body)
    with pytest.raises(WeightsFormatError, match="dtype"):
        load_weights(path)


def test_network_parameters_round_trip(tmp_path):
    from needletrack import network

    cfg = network.NetworkConfig(input_side=16, conv1_out=2, conv2_out=3, hidden=8)
    params = network.build_network(cfg, seed=0)
    path = tmp_path / "net.ntwt"
    save_weights(path, params)
    loaded = load_weights(path)
    for name in params:
        np.testing.assert_array_equal(loaded[name], params[name])
