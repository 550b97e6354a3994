"""
Named float64 tensor records in the DPAT binary format

Layout (all integers u32 little-endian):

    b"DPAT" | version | record count
    per record: name length | UTF-8 name | rank | extents... | float64 LE payload

A checkpoint is one record file plus a `<file>.json` sidecar holding the
model configuration it was written with.
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from ..errors import DatasetIOError

logger = logging.getLogger(__name__)

MAGIC = b"DPAT"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


def encode_records(records: Dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(records))]
    for name, array in records.items():
        array = np.ascontiguousarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape))
        chunks.append(array.tobytes())
    return b"".join(chunks)


def decode_records(blob: bytes, source: str = "<bytes>") -> Dict[str, np.ndarray]:
    """Parse a DPAT blob; any truncation or bad header is reported against `source`"""
    if blob[:4] != MAGIC:
        raise DatasetIOError(source, "not a DPAT tensor file")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != FORMAT_VERSION:
            raise DatasetIOError(source, f"unsupported DPAT version {version}")
        offset = 12
        records: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            n_values = int(np.prod(shape)) if rank else 1
            end = offset + 8 * n_values
            if end > len(blob):
                raise DatasetIOError(source, f"truncated payload for record {name!r}")
            records[name] = np.frombuffer(blob, dtype="<f8", count=n_values, offset=offset).reshape(shape).astype(np.float64)
            offset = end
    except (struct.error, UnicodeDecodeError) as exc:
        raise DatasetIOError(source, f"corrupt DPAT file ({exc})") from exc
    if offset != len(blob):
        raise DatasetIOError(source, "trailing bytes after last record")
    return records


def save_records(path: PathLike, records: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_records(records))
    return path


def load_records(path: PathLike) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DatasetIOError(path, "tensor file not found")
    return decode_records(path.read_bytes(), str(path))


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(path: PathLike, state: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> Path:
    """Write parameter records and the JSON sidecar next to them"""
    path = save_records(path, state)
    sidecar_path(path).write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Checkpoint written: %s (%d tensors)", path, len(state))
    return path


def load_checkpoint(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    state = load_records(path)
    meta_file = sidecar_path(path)
    if not meta_file.exists():
        raise DatasetIOError(meta_file, "checkpoint sidecar not found")
    try:
        metadata = json.loads(meta_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetIOError(meta_file, f"invalid checkpoint sidecar ({exc.msg})") from exc
    return state, metadata


def file_hash(path: PathLike) -> str:
    """SHA-256 hex digest of a file's bytes"""
    path = Path(path)
    if not path.exists():
        raise DatasetIOError(path, "file not found")
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
