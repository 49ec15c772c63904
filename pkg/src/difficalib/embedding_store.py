"""Load, save, and validate embedding datasets (EMB1 binary format + CSV)."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, ParseError, ValidationError

MAGIC = b"EMB1"
VERSION = 1
# magic, version, N, D, K
_HEADER = struct.Struct("<4sIQII")
HEADER_SIZE = _HEADER.size  # 24 bytes


@dataclass(eq=False)
class EmbeddingDataset:
    """N feature rows with integer class labels and unique 64-bit sample ids.

    Features are stored as float32 (typical for embedding dumps); all
    downstream math promotes to float64.
    """

    features: np.ndarray  # (N, D) float32
    labels: np.ndarray    # (N,) int64 in [0, num_classes)
    ids: np.ndarray       # (N,) uint64, unique
    num_classes: int

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1] if self.features.ndim == 2 else 0

    def equals(self, other: "EmbeddingDataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )


def make_dataset(features, labels, ids, num_classes: int) -> EmbeddingDataset:
    """Coerce arrays to canonical dtypes, validate, and build a dataset."""
    ds = EmbeddingDataset(
        features=np.ascontiguousarray(features, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        ids=np.asarray(ids, dtype=np.uint64),
        num_classes=int(num_classes),
    )
    validate_dataset(ds)
    return ds


def validate_dataset(ds: EmbeddingDataset) -> None:
    """Raise ValidationError unless every dataset invariant holds."""
    if ds.features.ndim != 2:
        raise ValidationError("features must be a 2-d array")
    n, d = ds.features.shape
    if n < 1:
        raise ValidationError("dataset must contain at least one sample (N >= 1)")
    if d < 1:
        raise ValidationError("features must have at least one dimension (D >= 1)")
    if ds.num_classes < 2:
        raise ValidationError(f"num_classes must be >= 2, got {ds.num_classes}")
    if ds.labels.shape != (n,) or ds.ids.shape != (n,):
        raise ValidationError(
            f"length mismatch: {n} feature rows, {len(ds.labels)} labels, {len(ds.ids)} ids"
        )
    if not np.all(np.isfinite(ds.features)):
        bad = int(np.argwhere(~np.isfinite(ds.features).all(axis=1))[0][0])
        raise ValidationError(f"non-finite feature value in row {bad}")
    if ds.labels.min() < 0 or ds.labels.max() >= ds.num_classes:
        bad = int(np.argwhere((ds.labels < 0) | (ds.labels >= ds.num_classes))[0][0])
        raise ValidationError(
            f"label {int(ds.labels[bad])} at row {bad} outside [0, {ds.num_classes})"
        )
    if len(np.unique(ds.ids)) != n:
        values, counts = np.unique(ds.ids, return_counts=True)
        raise ValidationError(f"duplicate sample id {int(values[counts > 1][0])}")


def save_dataset(ds: EmbeddingDataset, path) -> None:
    """Write a dataset in the EMB1 binary format (deterministic bytes)."""
    validate_dataset(ds)
    n, d = ds.features.shape
    header = _HEADER.pack(MAGIC, VERSION, n, d, ds.num_classes)
    features = np.ascontiguousarray(ds.features, dtype="<f4")
    labels = np.ascontiguousarray(ds.labels, dtype="<u4")
    ids = np.ascontiguousarray(ds.ids, dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(features.tobytes())
        fh.write(labels.tobytes())
        fh.write(ids.tobytes())


def load_dataset(path) -> EmbeddingDataset:
    """Read an EMB1 file; inverse of save_dataset."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: not an EMB1 file (bad magic)")
    if len(data) < HEADER_SIZE:
        raise CorruptionError(
            f"{path}: truncated header, expected {HEADER_SIZE} bytes, found {len(data)}"
        )
    _, version, n, d, k = _HEADER.unpack_from(data)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported EMB1 version {version}")
    expected = HEADER_SIZE + n * d * 4 + n * 4 + n * 8
    if len(data) != expected:
        raise CorruptionError(
            f"{path}: expected {expected} bytes, found {len(data)}"
        )
    offset = HEADER_SIZE
    features = np.frombuffer(data, dtype="<f4", count=n * d, offset=offset)
    features = features.reshape(n, d)
    offset += n * d * 4
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=offset).astype(np.int64)
    offset += n * 4
    ids = np.frombuffer(data, dtype="<u8", count=n, offset=offset).astype(np.uint64)
    ds = EmbeddingDataset(features=features, labels=labels, ids=ids, num_classes=k)
    validate_dataset(ds)
    return ds


def import_csv(path, k: int) -> EmbeddingDataset:
    """Read rows `id,label,f_0,...,f_{D-1}` into a dataset with K = k classes.

    Features are converted to float32. Row numbers in error messages are
    1-based.
    """
    ids, labels, rows = [], [], []
    width = None
    with open(path, newline="") as fh:
        for rownum, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) < 3:
                raise FormatError(
                    f"{path}: row {rownum}: expected `id,label,f_0,...`, got {len(row)} fields"
                )
            nfeat = len(row) - 2
            if width is None:
                width = nfeat
            elif nfeat != width:
                raise FormatError(
                    f"{path}: row {rownum}: expected {width} features, found {nfeat}"
                )
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]))
            except ValueError as exc:
                raise ParseError(f"{path}: row {rownum}: {exc}") from exc
            try:
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise ParseError(
                    f"{path}: row {rownum}: non-numeric feature value ({exc})"
                ) from exc
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64).astype(np.float32)
    return make_dataset(features, labels, ids, k)


def export_csv(ds: EmbeddingDataset, path) -> None:
    """Write a dataset as `id,label,f_0,...` rows (float32-exact text)."""
    validate_dataset(ds)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(ds.n):
            writer.writerow(
                [int(ds.ids[i]), int(ds.labels[i])]
                + [repr(float(v)) for v in ds.features[i]]
            )
