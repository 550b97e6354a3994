"""
Tests for the DPAT tensor record format
"""

import hashlib
import json
import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from dpaseg.core.checkpoint import (
    MAGIC,
    decode_records,
    encode_records,
    file_hash,
    load_checkpoint,
    load_records,
    save_checkpoint,
    save_records,
    sidecar_path,
)
from dpaseg.errors import DatasetIOError


@pytest.fixture
def records(rng):
    return {
        "encoder.0.weight": rng.normal(size=(2, 3, 3, 3)),
        "bias": np.array([1.5, -2.0]),
        "scalar": np.array(3.25),
    }


class TestRecords:

    def test_decode_recovers_names_shapes_and_values(self, records):
        decoded = decode_records(encode_records(records))
        assert list(decoded) == list(records)
        for name, array in records.items():
            assert decoded[name].dtype == np.float64
            assert_array_equal(decoded[name], array)

    def test_header(self, records):
        blob = encode_records(records)
        assert blob[:4] == MAGIC
        assert struct.unpack_from("<II", blob, 4) == (1, 3)

    def test_payload_is_little_endian_float64(self):
        blob = encode_records({"x": np.array([1.0])})
        assert blob.endswith(struct.pack("<d", 1.0))
        assert len(blob) == 12 + 4 + 1 + 4 + 4 + 8

    def test_bad_magic(self, records):
        with pytest.raises(DatasetIOError, match="not a DPAT"):
            decode_records(b"NOPE" + encode_records(records)[4:])

    def test_unknown_version(self, records):
        blob = bytearray(encode_records(records))
        blob[4:8] = struct.pack("<I", 9)
        with pytest.raises(DatasetIOError, match="version 9"):
            decode_records(bytes(blob))

    @pytest.mark.parametrize("cut", [6, 20, -1])
    def test_truncated(self, records, cut):
        with pytest.raises(DatasetIOError):
            decode_records(encode_records(records)[:cut])

    def test_trailing_bytes(self, records):
        with pytest.raises(DatasetIOError, match="trailing"):
            decode_records(encode_records(records) + b"\0")

    def test_file_round_trip(self, records, tmp_path):
        path = save_records(tmp_path / "nested" / "t.dpat", records)
        loaded = load_records(path)
        for name in records:
            assert_array_equal(loaded[name], records[name])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetIOError, match="not found"):
            load_records(tmp_path / "absent.dpat")


class TestCheckpointFiles:

    def test_sidecar_is_sorted_json(self, records, tmp_path):
        path = save_checkpoint(tmp_path / "m.dpat", records, {"profile": "IV", "config": {"seed": 0}})
        assert sidecar_path(path) == tmp_path / "m.dpat.json"
        text = sidecar_path(path).read_text()
        assert text.index('"config"') < text.index('"profile"')
        state, meta = load_checkpoint(path)
        assert meta == {"profile": "IV", "config": {"seed": 0}}
        assert set(state) == set(records)

    def test_missing_sidecar(self, records, tmp_path):
        path = save_records(tmp_path / "m.dpat", records)
        with pytest.raises(DatasetIOError, match="sidecar"):
            load_checkpoint(path)

    def test_broken_sidecar(self, records, tmp_path):
        path = save_checkpoint(tmp_path / "m.dpat", records, {})
        sidecar_path(path).write_text("{not json")
        with pytest.raises(DatasetIOError, match="sidecar"):
            load_checkpoint(path)

    def test_file_hash(self, records, tmp_path):
        path = save_records(tmp_path / "m.dpat", records)
        assert file_hash(path) == hashlib.sha256(path.read_bytes()).hexdigest()
        with pytest.raises(DatasetIOError):
            file_hash(tmp_path / "absent")

    def test_json_sidecar_parses(self, records, tmp_path):
        path = save_checkpoint(tmp_path / "m.dpat", records, {"b": 1, "a": 2})
        assert json.loads(sidecar_path(path).read_text()) == {"a": 2, "b": 1}
