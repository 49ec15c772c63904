"""Writer for the EMB1 embedding interchange format.

Layout: magic "EMB1", u32 version=1, u64 N, u32 D, u32 K, then N*D float32
little-endian row-major features, N u32 labels, N u64 ids.
"""

import struct

import numpy as np

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sIQII")


def write_emb1(path, features, labels, ids, num_classes):
    features = np.ascontiguousarray(features, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    ids = np.ascontiguousarray(ids, dtype="<u8")
    n, d = features.shape
    if len(labels) != n or len(ids) != n:
        raise ValueError("features, labels, and ids must share a length")
    if n < 1 or d < 1 or num_classes < 2:
        raise ValueError("EMB1 requires N >= 1, D >= 1, K >= 2")
    if labels.max(initial=0) >= num_classes:
        raise ValueError("label exceeds the declared class count")
    if len(np.unique(ids)) != n:
        raise ValueError("sample ids must be unique")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d, num_classes))
        fh.write(features.tobytes())
        fh.write(labels.tobytes())
        fh.write(ids.tobytes())


def read_emb1(path):
    """Minimal reader used for self-checks; returns (features, labels, ids, K)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, n, d, k = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not an EMB1 v{VERSION} file")
    expected = _HEADER.size + n * d * 4 + n * 4 + n * 8
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    offset = _HEADER.size
    features = np.frombuffer(data, "<f4", n * d, offset).reshape(n, d)
    offset += n * d * 4
    labels = np.frombuffer(data, "<u4", n, offset)
    offset += n * 4
    ids = np.frombuffer(data, "<u8", n, offset)
    return features, labels, ids, k
