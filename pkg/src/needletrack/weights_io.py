"""Binary container for named tensors (network weights, raw image sidecars).

Layout: magic b"NTWT", format version u8 = 1, then for each tensor in
ascending lexicographic name order: name length (u16 LE), UTF-8 name,
dtype code u8 (1 = float32), rank u8, dims (u32 LE each), raw
little-endian element data.  Tensors are read until EOF.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NTWT"
FORMAT_VERSION = 1
DTYPE_F32 = 1


class WeightsFormatError(ValueError):
    """The file does not follow the tensor container layout."""


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write tensors as float32, sorted by name."""
    chunks = [MAGIC, struct.pack("<B", FORMAT_VERSION)]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise WeightsFormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 5 or data[4] != FORMAT_VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version")
    tensors: dict[str, np.ndarray] = {}
    pos = 5
    while pos < len(data):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        dtype_code, rank = struct.unpack_from("<BB", data, pos)
        pos += 2
        if dtype_code != DTYPE_F32:
            raise WeightsFormatError(f"{path}: unknown dtype code {dtype_code} for '{name}'")
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        nbytes = 4 * count
        if pos + nbytes > len(data):
            raise WeightsFormatError(f"{path}: truncated data for '{name}'")
        arr = np.frombuffer(data[pos:pos + nbytes], dtype="<f4").reshape(dims)
        pos += nbytes
        tensors[name] = arr.astype(np.float32)
    return tensors


save_weights = save_tensors
load_weights = load_tensors
