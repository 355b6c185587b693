import struct

import numpy as np
import pytest

from dsfactor.core.factorization import BlockPlan
from dsfactor.core.planner import compression_report
from dsfactor.store import (
    deserialize_dsf, encode_dsf, read_bsm, read_csv, serialize_dsf, write_bsm, write_csv,
)
from dsfactor.utils.errors import FormatError
from tests.conftest import random_factorization


def test_bsm_round_trip_bitwise(tmp_path, rng):
    m = rng.standard_normal((7, 5)).astype(np.float32)
    m[0, 0], m[0, 1] = -0.0, 0.0
    m[1, 0] = np.finfo(np.float32).tiny / 2  # subnormal
    path = tmp_path / "m.bsm"
    write_bsm(m, path)
    back = read_bsm(path)
    assert back.shape == (7, 5)
    assert np.array_equal(back.view(np.uint32), m.view(np.uint32))
    assert path.stat().st_size == 12 + 4 * 35


def test_bsm_layout(tmp_path):
    path = tmp_path / "m.bsm"
    write_bsm(np.array([[1.0, 2.0]]), path)
    raw = path.read_bytes()
    assert raw[:4] == b"BSM1"
    assert struct.unpack("<II", raw[4:12]) == (1, 2)
    assert struct.unpack("<2f", raw[12:]) == (1.0, 2.0)


def test_bsm_bad_magic(tmp_path):
    path = tmp_path / "bad.bsm"
    path.write_bytes(b"NOPE" + struct.pack("<II", 1, 1) + b"\0" * 4)
    with pytest.raises(FormatError, match="not a BSM file"):
        read_bsm(path)


def test_bsm_zero_dims_rejected(tmp_path):
    path = tmp_path / "zero.bsm"
    path.write_bytes(b"BSM1" + struct.pack("<II", 0, 5))
    with pytest.raises(FormatError, match="zero dimension"):
        read_bsm(path)


def test_bsm_truncated(tmp_path):
    path = tmp_path / "short.bsm"
    path.write_bytes(b"BSM1" + struct.pack("<II", 2, 2) + b"\0" * 8)
    with pytest.raises(FormatError, match="truncated"):
        read_bsm(path)


def test_failed_write_leaves_nothing(tmp_path):
    target = tmp_path / "missing_dir" / "m.bsm"
    with pytest.raises(OSError):
        write_bsm(np.ones((2, 2)), target)
    assert not target.exists()


def test_dsf_round_trip(tmp_path, rng):
    plan = BlockPlan(b=4, k=8, s=2)
    f = random_factorization(rng, 10, 12, plan)
    path = tmp_path / "f.dsf"
    serialize_dsf(f, path)
    g = deserialize_dsf(path)
    assert (g.m, g.n, g.plan) == (10, 12, plan)
    for a, b in zip(f.blocks, g.blocks):
        assert np.array_equal(a.coeffs.indices, b.coeffs.indices)
        assert np.array_equal(a.coeffs.values.astype(np.float32), b.coeffs.values.astype(np.float32))
        assert np.array_equal(a.dictionary.astype(np.float32), b.dictionary.astype(np.float32))
    assert encode_dsf(g) == path.read_bytes()


def test_dsf_payload_matches_planner(tmp_path, rng):
    m, n = 32, 24
    plan = BlockPlan(b=8, k=12, s=3)
    path = tmp_path / "f.dsf"
    serialize_dsf(random_factorization(rng, m, n, plan), path)
    header = 4 + 5 * 4
    assert path.stat().st_size - header == compression_report(m, n, plan).ds_bytes_file


def test_dsf_truncated(tmp_path, rng):
    path = tmp_path / "f.dsf"
    serialize_dsf(random_factorization(rng, 6, 8, BlockPlan(4, 6, 2)), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError, match="does not match header"):
        deserialize_dsf(path)


def test_dsf_bad_magic(tmp_path):
    path = tmp_path / "x.dsf"
    path.write_bytes(b"BSM1" + b"\0" * 20)
    with pytest.raises(FormatError, match="not a DSF file"):
        deserialize_dsf(path)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    write_csv([{"a": 1, "b": 0.5}, {"a": 2, "b": "x,y"}], path, ("a", "b"))
    assert path.read_bytes().startswith(b"a,b\r\n")
    assert read_csv(path) == [{"a": "1", "b": "0.5"}, {"a": "2", "b": "x,y"}]
