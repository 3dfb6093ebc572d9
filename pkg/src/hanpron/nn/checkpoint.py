"""Binary parameter container.

Layout: 8-byte magic ``HPRNCKPT``, little-endian u32 format version, u64
header length, UTF-8 JSON header, then each tensor's float64 payload
(little-endian, C order) in header order. The header lists every tensor's
name, dims, byte offset (relative to the payload start) and byte length,
alongside caller metadata (architecture, vocab hashes, seed, epoch).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping, Union

import numpy as np

MAGIC = b"HPRNCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: Union[str, Path], tensors: Mapping[str, np.ndarray], metadata: Mapping) -> None:
    entries = []
    offset = 0
    for name, arr in tensors.items():
        nbytes = int(np.asarray(arr).size) * 8
        entries.append({"name": name, "dims": list(np.shape(arr)), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = json.dumps({"metadata": dict(metadata), "tensors": entries}, ensure_ascii=False, sort_keys=True)
    blob = header.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: Union[str, Path]) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(data[start : start + hlen].decode("utf-8"))
    payload = start + hlen
    tensors = {}
    for entry in header["tensors"]:
        lo = payload + entry["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=entry["nbytes"] // 8, offset=lo)
        tensors[entry["name"]] = arr.reshape(entry["dims"]).astype(np.float64)
    return header["metadata"], tensors
