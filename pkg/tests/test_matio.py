"""Binary matrix format: round-trips, error taxonomy, CSV export."""

import struct

import numpy as np
import pytest

from yoso import (
    MalformedHeaderError,
    NonFiniteError,
    PayloadSizeError,
    RngState,
    gaussian_matrix,
    mat_read,
    mat_write,
    write_csv,
)


def _raw_file(path, rows, cols, values, magic=b"YMAT", version=1):
    # Hand-built file so reads are exercised independently of mat_write.
    blob = struct.pack("<4sIII", magic, version, rows, cols)
    blob += b"".join(struct.pack("<d", v) for v in values)
    path.write_bytes(blob)
    return path


def test_reads_handmade_identity(tmp_path):
    path = _raw_file(tmp_path / "eye.ymat", 2, 2, [1.0, 0.0, 0.0, 1.0])
    assert np.array_equal(mat_read(path), np.eye(2))


def test_payload_size_mismatch(tmp_path):
    path = _raw_file(tmp_path / "short.ymat", 3, 2, [0.0] * 5)
    with pytest.raises(PayloadSizeError):
        mat_read(path)


def test_bad_magic_and_version(tmp_path):
    with pytest.raises(MalformedHeaderError):
        mat_read(_raw_file(tmp_path / "magic.ymat", 1, 1, [0.0], magic=b"NOPE"))
    with pytest.raises(MalformedHeaderError):
        mat_read(_raw_file(tmp_path / "ver.ymat", 1, 1, [0.0], version=9))


def test_truncated_header(tmp_path):
    path = tmp_path / "stub.ymat"
    path.write_bytes(b"YMAT\x01")
    with pytest.raises(MalformedHeaderError):
        mat_read(path)


def test_nonfinite_payload_rejected(tmp_path):
    path = _raw_file(tmp_path / "nan.ymat", 1, 2, [1.0, float("nan")])
    with pytest.raises(NonFiniteError):
        mat_read(path)
    path = _raw_file(tmp_path / "inf.ymat", 1, 2, [1.0, float("inf")])
    with pytest.raises(NonFiniteError):
        mat_read(path)


def test_identity_file_size(tmp_path):
    # 16-byte header + 4 float64 = 48 bytes total.
    path = tmp_path / "eye.ymat"
    mat_write(np.eye(2), path)
    assert path.stat().st_size == 16 + 4 * 8


def test_roundtrip_bit_exact(tmp_path):
    m = gaussian_matrix(64, 16, RngState(20240201))
    path = tmp_path / "m.ymat"
    mat_write(m, path)
    back = mat_read(path)
    assert back.shape == (64, 16)
    assert np.array_equal(back, m)


def test_empty_matrix_roundtrip(tmp_path):
    path = tmp_path / "empty.ymat"
    mat_write(np.zeros((0, 0)), path)
    assert path.stat().st_size == 16
    back = mat_read(path)
    assert back.shape == (0, 0)


def test_rewrite_is_deterministic(tmp_path):
    m = gaussian_matrix(5, 3, RngState(7))
    a, b = tmp_path / "a.ymat", tmp_path / "b.ymat"
    mat_write(m, a)
    mat_write(m, b)
    assert a.read_bytes() == b.read_bytes()


def test_csv_export(tmp_path):
    m = np.array([[1.5, -2.0], [0.25, 3.0]])
    path = tmp_path / "m.csv"
    write_csv(m, path)
    lines = path.read_text().splitlines()
    assert lines == ["1.5,-2", "0.25,3"]
    # values parse back exactly at .17g precision
    parsed = np.array([[float(x) for x in line.split(",")] for line in lines])
    assert np.array_equal(parsed, m)
