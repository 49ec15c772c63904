"""Class-conditional and class-agnostic Gaussian models over embeddings.

Fits per-class means with one pooled covariance (biased MLE, denominator N)
plus a label-free model, shrinks both covariances by lam * (trace/D) * I,
and evaluates squared Mahalanobis distances through Cholesky solves.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .embedding_store import EmbeddingDataset, validate_dataset
from .errors import (
    CorruptionError,
    FitError,
    FormatError,
    SingularCovarianceError,
    ValidationError,
)
from .parallel import worker_cap

DEFAULT_SHRINKAGE = 1e-4

BANK_MAGIC = b"GBK1"
BANK_VERSION = 1
# magic, version, K, D, shrinkage
_BANK_HEADER = struct.Struct("<4sIIId")


@dataclass(eq=False)
class GaussianBank:
    """Fitted Gaussian parameters; immutable once built."""

    class_means: np.ndarray   # (K, D) float64
    pooled_chol: np.ndarray   # (D, D) lower-triangular factor of shrunk pooled cov
    agn_mean: np.ndarray      # (D,) float64
    agn_chol: np.ndarray      # (D, D) lower-triangular factor of shrunk agnostic cov
    shrinkage: float
    class_counts: np.ndarray  # (K,) int64, all >= 1

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]


def class_statistics(ds: EmbeddingDataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-class counts and exact sample means in float64."""
    k = ds.num_classes
    counts = np.bincount(ds.labels, minlength=k).astype(np.int64)
    features = ds.features.astype(np.float64)
    sums = np.zeros((k, ds.dim))
    np.add.at(sums, ds.labels, features)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise FitError(f"class {int(empty[0])} has no samples")
    means = sums / counts[:, None]
    return counts, means


def pooled_scatter(ds: EmbeddingDataset) -> np.ndarray:
    """Within-class scatter summed over all samples, divided by N (unshrunk)."""
    counts, means = class_statistics(ds)
    features = ds.features.astype(np.float64)
    k = ds.num_classes

    def one_class(c: int) -> np.ndarray:
        centered = features[ds.labels == c] - means[c]
        return centered.T @ centered

    workers = min(worker_cap(), k)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one_class, range(k)))
    else:
        parts = [one_class(c) for c in range(k)]
    # summed in class order so the result is independent of scheduling
    scatter = np.zeros((ds.dim, ds.dim))
    for part in parts:
        scatter += part
    return scatter / ds.n


def _shrink(cov: np.ndarray, lam: float) -> np.ndarray:
    trace = float(np.trace(cov))
    d = cov.shape[0]
    # trace 0 means every sample sits exactly on its mean; fall back to unit
    # scale so lam > 0 still yields a positive-definite matrix
    scale = trace / d if trace > 0 else 1.0
    return cov + lam * scale * np.eye(d)


def _factor(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"{what} covariance is not positive definite; increase shrinkage"
        ) from exc
    if np.any(np.diag(chol) <= 0):
        raise SingularCovarianceError(
            f"{what} covariance is numerically singular; increase shrinkage"
        )
    return chol


def fit_gaussian_bank(ds: EmbeddingDataset, shrinkage: float = DEFAULT_SHRINKAGE) -> GaussianBank:
    """Fit class means, shrunk pooled covariance, and the agnostic model."""
    validate_dataset(ds)
    if shrinkage < 0:
        raise ValidationError(f"shrinkage must be >= 0, got {shrinkage}")
    counts, means = class_statistics(ds)
    pooled = _shrink(pooled_scatter(ds), shrinkage)
    pooled_chol = _factor(pooled, "pooled")

    features = ds.features.astype(np.float64)
    agn_mean = features.mean(axis=0)
    centered = features - agn_mean
    agn_cov = _shrink(centered.T @ centered / ds.n, shrinkage)
    agn_chol = _factor(agn_cov, "class-agnostic")

    return GaussianBank(
        class_means=means,
        pooled_chol=pooled_chol,
        agn_mean=agn_mean,
        agn_chol=agn_chol,
        shrinkage=float(shrinkage),
        class_counts=counts,
    )


def _check_feature(bank: GaussianBank, feature) -> np.ndarray:
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != (bank.dim,):
        raise ValidationError(f"feature has shape {f.shape}, expected ({bank.dim},)")
    if not np.all(np.isfinite(f)):
        raise ValidationError("feature contains non-finite values")
    return f


def mahalanobis_class(bank: GaussianBank, feature, k: int) -> float:
    """Squared Mahalanobis distance to class k under the pooled covariance."""
    if not 0 <= k < bank.num_classes:
        raise IndexError(f"class {k} out of range [0, {bank.num_classes})")
    f = _check_feature(bank, feature)
    z = solve_triangular(bank.pooled_chol, f - bank.class_means[k], lower=True)
    return float(z @ z)


def mahalanobis_agnostic(bank: GaussianBank, feature) -> float:
    """Squared Mahalanobis distance under the class-agnostic model."""
    f = _check_feature(bank, feature)
    z = solve_triangular(bank.agn_chol, f - bank.agn_mean, lower=True)
    return float(z @ z)


def class_distances(bank: GaussianBank, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorized mahalanobis_class for each (row, label) pair."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= bank.num_classes:
        raise ValidationError(
            f"label {int(labels.max())} outside bank classes [0, {bank.num_classes})"
        )
    deviations = features.astype(np.float64) - bank.class_means[labels]
    z = solve_triangular(bank.pooled_chol, deviations.T, lower=True)
    return np.einsum("ij,ij->j", z, z)


def agnostic_distances(bank: GaussianBank, features: np.ndarray) -> np.ndarray:
    """Vectorized mahalanobis_agnostic over feature rows."""
    deviations = features.astype(np.float64) - bank.agn_mean
    z = solve_triangular(bank.agn_chol, deviations.T, lower=True)
    return np.einsum("ij,ij->j", z, z)


def save_bank(bank: GaussianBank, path) -> None:
    """Write a bank in the GBK1 format (all payload arrays float64 LE)."""
    k, d = bank.class_means.shape
    with open(path, "wb") as fh:
        fh.write(_BANK_HEADER.pack(BANK_MAGIC, BANK_VERSION, k, d, bank.shrinkage))
        for arr in (
            bank.class_means,
            bank.pooled_chol,
            bank.agn_mean,
            bank.agn_chol,
            bank.class_counts.astype(np.float64),
        ):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_bank(path) -> GaussianBank:
    """Read a GBK1 file; inverse of save_bank."""
    data = Path(path).read_bytes()
    if data[:4] != BANK_MAGIC:
        raise FormatError(f"{path}: not a GBK1 file (bad magic)")
    if len(data) < _BANK_HEADER.size:
        raise CorruptionError(f"{path}: truncated header")
    _, version, k, d, shrinkage = _BANK_HEADER.unpack_from(data)
    if version != BANK_VERSION:
        raise FormatError(f"{path}: unsupported GBK1 version {version}")
    expected = _BANK_HEADER.size + 8 * (k * d + d * d + d + d * d + k)
    if len(data) != expected:
        raise CorruptionError(f"{path}: expected {expected} bytes, found {len(data)}")
    offset = _BANK_HEADER.size

    def take(count: int, shape) -> np.ndarray:
        nonlocal offset
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        return arr.reshape(shape).copy()

    class_means = take(k * d, (k, d))
    pooled_chol = take(d * d, (d, d))
    agn_mean = take(d, (d,))
    agn_chol = take(d * d, (d, d))
    class_counts = take(k, (k,)).astype(np.int64)
    return GaussianBank(
        class_means=class_means,
        pooled_chol=pooled_chol,
        agn_mean=agn_mean,
        agn_chol=agn_chol,
        shrinkage=shrinkage,
        class_counts=class_counts,
    )
