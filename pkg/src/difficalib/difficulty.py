"""Per-sample difficulty scores and their normalized training weights.

The headline score is the relative Mahalanobis distance: class-conditional
squared distance minus class-agnostic squared distance, so larger values mark
samples that are atypical for their class yet generic overall. Scores map to
weights in (0, 1) through a temperature softmax normalized by the global
maximum plus a small offset.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .embedding_store import EmbeddingDataset, validate_dataset
from .errors import ConfigError, ParseError, ValidationError
from .gaussian import GaussianBank, agnostic_distances, class_distances, mahalanobis_agnostic, mahalanobis_class

DEFAULT_TEMPERATURE = 0.7
DEFAULT_OFFSET = 1e-3

SCORERS = ("rmd", "md", "kmeans", "imported")


@dataclass(eq=False)
class DifficultyScores:
    """Difficulty values and weights keyed by sample id."""

    ids: np.ndarray      # (N,) uint64, matches the source dataset
    rmd: np.ndarray      # (N,) float64 difficulty values (larger = harder)
    weight: np.ndarray   # (N,) float64 in (0, 1), non-decreasing in rmd
    scorer: str
    temperature: float
    offset: float

    @property
    def n(self) -> int:
        return len(self.ids)


def rmd_score(bank: GaussianBank, feature, label: int) -> float:
    """Relative Mahalanobis distance of one sample (larger = harder)."""
    value = mahalanobis_class(bank, feature, label) - mahalanobis_agnostic(bank, feature)
    if not math.isfinite(value):
        raise ValidationError("difficulty score is not finite")
    return value


def normalize_weights(rmd, temperature: float = DEFAULT_TEMPERATURE, offset: float = DEFAULT_OFFSET) -> np.ndarray:
    """Map difficulty values to weights in (0, 1).

    Evaluates exp(v_i/T) / (max_j exp(v_j/T) + c) in the overflow-safe form
    exp((v_i - v_max)/T) / (1 + c * exp(-v_max/T)), with the denominator kept
    in log space. The max is taken globally over the provided array.
    """
    values = np.asarray(rmd, dtype=np.float64)
    if values.ndim != 1 or values.size < 1:
        raise ValidationError("difficulty values must be a non-empty 1-d array")
    if not np.all(np.isfinite(values)):
        raise ValidationError("difficulty values must be finite")
    if not temperature > 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    if not offset > 0:
        raise ValidationError(f"offset must be > 0, got {offset}")
    vmax = values.max()
    log_denom = np.logaddexp(0.0, math.log(offset) - vmax / temperature)
    weights = np.exp((values - vmax) / temperature - log_denom)
    # keep the open interval (0, 1) at the edge of float64 representability
    return np.clip(weights, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def kmeans_difficulty(ds: EmbeddingDataset, clusters: int, iters: int = 50, seed: int = 0) -> np.ndarray:
    """Squared distance to the nearest k-means centroid (larger = harder)."""
    validate_dataset(ds)
    if clusters < 1:
        raise ValidationError(f"clusters must be >= 1, got {clusters}")
    if clusters > ds.n:
        raise ValidationError(f"clusters ({clusters}) exceeds sample count ({ds.n})")
    features = ds.features.astype(np.float64)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    centroids, _, _ = _lloyd(features, clusters, iters, rng)
    return _nearest_sq_dist(features, centroids)


def _nearest_sq_dist(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.min(axis=1)


def _plusplus_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a centroid
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _lloyd(x: np.ndarray, k: int, iters: int, rng: np.random.Generator):
    """k-means++ seeding followed by Lloyd iterations.

    Returns (centroids, assignments, per-iteration costs). Empty clusters
    keep their previous centroid, which never increases the cost.
    """
    centroids = _plusplus_seed(x, k, rng)
    assignments = None
    costs = []
    for _ in range(iters):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        costs.append(float(d2.min(axis=1).sum()))
        if assignments is not None and np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for c in range(k):
            members = x[assignments == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    if assignments is None:
        assignments = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2).argmin(axis=1)
    return centroids, assignments, costs


def score_dataset(
    bank: GaussianBank | None,
    ds: EmbeddingDataset,
    scorer: str = "rmd",
    temperature: float = DEFAULT_TEMPERATURE,
    offset: float = DEFAULT_OFFSET,
    *,
    clusters: int | None = None,
    kmeans_iters: int = 50,
    seed: int = 0,
) -> DifficultyScores:
    """Score every sample of a dataset and attach normalized weights.

    The kmeans scorer ignores the bank and clusters the features directly
    (clusters defaults to the dataset's class count).
    """
    validate_dataset(ds)
    if scorer in ("rmd", "md"):
        if bank is None:
            raise ConfigError(f"scorer {scorer!r} requires a fitted Gaussian bank")
        if ds.labels.max() >= bank.num_classes:
            raise ValidationError(
                f"dataset label {int(ds.labels.max())} exceeds bank classes ({bank.num_classes})"
            )
        values = class_distances(bank, ds.features, ds.labels)
        if scorer == "rmd":
            values = values - agnostic_distances(bank, ds.features)
    elif scorer == "kmeans":
        values = kmeans_difficulty(ds, clusters or ds.num_classes, kmeans_iters, seed)
    else:
        raise ConfigError(f"unknown scorer {scorer!r}; expected one of {SCORERS[:3]}")
    weights = normalize_weights(values, temperature, offset)
    return DifficultyScores(
        ids=ds.ids.copy(),
        rmd=values,
        weight=weights,
        scorer=scorer,
        temperature=float(temperature),
        offset=float(offset),
    )


def average_scores(runs: list[DifficultyScores]) -> DifficultyScores:
    """Average difficulty values per id across runs; recompute the weights."""
    if not runs:
        raise ValidationError("need at least one run to average")
    first = runs[0]
    ref_sorted = np.sort(first.ids)
    stacked = np.empty((len(runs), first.n))
    for r, run in enumerate(runs):
        if (run.temperature, run.offset) != (first.temperature, first.offset):
            raise ValidationError(
                "runs disagree on (temperature, offset): "
                f"{(run.temperature, run.offset)} vs {(first.temperature, first.offset)}"
            )
        if run.n != first.n or not np.array_equal(np.sort(run.ids), ref_sorted):
            raise ValidationError(f"run {r} does not share the id set of run 0")
        sorter = np.argsort(run.ids)
        pos = sorter[np.searchsorted(run.ids[sorter], first.ids)]
        stacked[r] = run.rmd[pos]
    averaged = stacked.mean(axis=0)
    return DifficultyScores(
        ids=first.ids.copy(),
        rmd=averaged,
        weight=normalize_weights(averaged, first.temperature, first.offset),
        scorer=first.scorer,
        temperature=first.temperature,
        offset=first.offset,
    )


def save_scores(scores: DifficultyScores, path) -> None:
    """Write `id,rmd,weight` rows with round-trip-exact floats."""
    with open(path, "w", newline="") as fh:
        fh.write("id,rmd,weight\n")
        for i in range(scores.n):
            fh.write(f"{int(scores.ids[i])},{scores.rmd[i]:.17g},{scores.weight[i]:.17g}\n")


def import_scores(
    path,
    ds: EmbeddingDataset,
    temperature: float = DEFAULT_TEMPERATURE,
    offset: float = DEFAULT_OFFSET,
) -> DifficultyScores:
    """Read externally computed `id,score` rows covering exactly ds ids.

    Also accepts the save_scores layout (`id,rmd,weight`), using the rmd
    column. Weights are recomputed from the imported values.
    """
    validate_dataset(ds)
    by_id: dict[int, float] = {}
    with open(path, newline="") as fh:
        for rownum, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if rownum == 1 and not _is_number(row[1] if len(row) > 1 else ""):
                continue  # header line
            if len(row) < 2:
                raise ParseError(f"{path}: row {rownum}: expected `id,score`")
            try:
                sample_id = int(row[0])
                value = float(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}: row {rownum}: {exc}") from exc
            if sample_id in by_id:
                raise ValidationError(f"{path}: duplicate score for id {sample_id}")
            by_id[sample_id] = value
    wanted = {int(i) for i in ds.ids}
    missing = sorted(wanted - by_id.keys())
    if missing:
        raise ValidationError(f"{path}: missing score for id {missing[0]}")
    extra = sorted(by_id.keys() - wanted)
    if extra:
        raise ValidationError(f"{path}: score for unknown id {extra[0]}")
    values = np.array([by_id[int(i)] for i in ds.ids], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{path}: imported scores must be finite")
    return DifficultyScores(
        ids=ds.ids.copy(),
        rmd=values,
        weight=normalize_weights(values, temperature, offset),
        scorer="imported",
        temperature=float(temperature),
        offset=float(offset),
    )


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def rank_report(scores: DifficultyScores, ds: EmbeddingDataset, top_k: int) -> dict:
    """Per-class hardest/easiest id lists, ties broken by ascending id."""
    if top_k < 1:
        raise ValidationError(f"top_k must be >= 1, got {top_k}")
    if not np.array_equal(scores.ids, ds.ids):
        raise ValidationError("scores ids do not match the dataset ids")
    report: dict[int, dict[str, list[int]]] = {}
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        ids = scores.ids[members]
        values = scores.rmd[members]
        hardest = members[np.lexsort((ids, -values))][:top_k]
        easiest = members[np.lexsort((ids, values))][:top_k]
        report[c] = {
            "hardest": [int(scores.ids[i]) for i in hardest],
            "easiest": [int(scores.ids[i]) for i in easiest],
        }
    return report
