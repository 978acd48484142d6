import io
import struct

import numpy as np
import pytest

from centermesh import rmtf
from centermesh.errors import TensorFormatError


def test_round_trip_preserves_order_and_values(tmp_path):
    path = tmp_path / "t.rmtf"
    tensors = {
        "b_second": np.arange(12, dtype=np.float32).reshape(3, 4),
        "a_first": np.float32([[1.5]]),
        "scalar_rank1": np.float32([7.0]),
    }
    rmtf.write_tensors(path, tensors)
    out = rmtf.read_tensors(path)
    assert list(out) == ["b_second", "a_first", "scalar_rank1"]
    for name in tensors:
        assert out[name].dtype == np.float32
        np.testing.assert_array_equal(out[name], tensors[name])


def test_bytes_round_trip_is_exact():
    tensors = {"x": np.random.default_rng(0).random((5, 2)).astype(np.float32)}
    blob = rmtf.dump_tensors(tensors)
    again = rmtf.dump_tensors(rmtf.load_tensors(blob))
    assert blob == again


def test_header_layout():
    blob = rmtf.dump_tensors({"ab": np.zeros((2, 3), dtype=np.float32)})
    assert blob[:4] == b"RMTF"
    version, count = struct.unpack("<HH", blob[4:8])
    assert (version, count) == (1, 1)
    (name_len,) = struct.unpack("<H", blob[8:10])
    assert name_len == 2
    assert blob[10:12] == b"ab"
    assert blob[12] == 2  # rank
    assert struct.unpack("<II", blob[13:21]) == (2, 3)
    assert len(blob) == 21 + 4 * 6


def test_truncated_file_raises():
    blob = rmtf.dump_tensors({"x": np.ones((4, 4), dtype=np.float32)})
    for cut in (2, 6, 9, 14, len(blob) - 3):
        with pytest.raises(TensorFormatError):
            rmtf.load_tensors(blob[:cut])


def test_bad_magic_raises():
    with pytest.raises(TensorFormatError):
        rmtf.load_tensors(b"NOPE" + b"\x00" * 16)


def test_float64_payload_is_written_as_f32(tmp_path):
    path = tmp_path / "t.rmtf"
    value = np.array([[0.1, 0.2, 0.3]])  # not exactly representable
    rmtf.write_tensors(path, {"v": value})
    out = rmtf.read_tensors(path)["v"]
    np.testing.assert_array_equal(out, value.astype(np.float32))


def test_stream_interface():
    buf = io.BytesIO()
    rmtf.write_tensors(buf, {"x": np.eye(2, dtype=np.float32)})
    buf.seek(0)
    out = rmtf.read_tensors(buf)
    np.testing.assert_array_equal(out["x"], np.eye(2, dtype=np.float32))
