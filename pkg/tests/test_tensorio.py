"""Tensor file format round-trips and rejection paths."""

import struct

import numpy as np
import pytest

from viewmix.errors import ConfigurationError
from viewmix.rng import Rng
from viewmix.tensorio import read_tensor, write_tensor


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_round_trip_bit_exact(tmp_path, dtype):
    rng = Rng(2, "io")
    arr = rng.uniform(2 * 3 * 5, -10, 10).astype(dtype).reshape(2, 3, 5)
    path = tmp_path / "t.mvst"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == arr.dtype
    assert back.shape == arr.shape
    assert np.array_equal(back.view(np.uint8), arr.view(np.uint8))


def test_header_layout(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "t.mvst"
    write_tensor(path, arr)
    raw = path.read_bytes()
    magic, version, code, rank = struct.unpack_from("<4sBBB", raw, 0)
    assert magic == b"MVST" and version == 1 and code == 1 and rank == 2
    assert struct.unpack_from("<2I", raw, 7) == (2, 3)
    assert len(raw) == 7 + 8 + 6 * 4


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.mvst"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ConfigurationError, match="magic"):
        read_tensor(path)


def test_rejects_wrong_version(tmp_path):
    arr = np.zeros(3, dtype=np.float32)
    path = tmp_path / "t.mvst"
    write_tensor(path, arr)
    raw = bytearray(path.read_bytes())
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(ConfigurationError, match="version"):
        read_tensor(path)


def test_rejects_truncated_payload(tmp_path):
    arr = np.zeros(8, dtype=np.float32)
    path = tmp_path / "t.mvst"
    write_tensor(path, arr)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ConfigurationError, match="size"):
        read_tensor(path)


def test_rejects_non_finite(tmp_path):
    arr = np.array([1.0, np.inf], dtype=np.float32)
    with pytest.raises(ConfigurationError):
        write_tensor(tmp_path / "t.mvst", arr)
