"""Evaluation metrics: accuracy, equal-mass ECE, detection, risk-coverage.

Detection metrics follow the convention that the event to detect
(misclassification or OOD) is the positive class and higher scores mean
"more positive", so lower FPR-95 is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError

DEFAULT_BINS = 15
DEFAULT_REJECTION_RATES = tuple(round(0.05 * i, 2) for i in range(20))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def accuracy(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the label."""
    return float((np.argmax(probabilities, axis=1) == np.asarray(labels)).mean())


def nll_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood, computed stably from logits."""
    z = np.asarray(logits, dtype=np.float64)
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    return float((lse - z[np.arange(len(z)), labels]).mean())


@dataclass
class BinStat:
    confidence: float
    accuracy: float
    count: int


def ece(probabilities: np.ndarray, labels: np.ndarray, bins: int = DEFAULT_BINS, ids=None):
    """Equal-mass expected calibration error of the top-1 prediction.

    Samples are sorted by top-1 confidence ascending (ties by id) and split
    into `bins` contiguous groups whose sizes differ by at most one, larger
    groups first. Returns (ece, per-bin table).
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(probs)
    if bins < 1:
        raise ValidationError(f"bins must be >= 1, got {bins}")
    if n < bins:
        raise ValidationError(f"need at least {bins} samples for {bins} bins, got {n}")
    if ids is None:
        ids = np.arange(n)
    confidence = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    order = np.lexsort((np.asarray(ids), confidence))

    q, r = divmod(n, bins)
    sizes = [q + 1] * r + [q] * (bins - r)
    table: list[BinStat] = []
    total = 0.0
    start = 0
    for size in sizes:
        chunk = order[start:start + size]
        start += size
        conf_b = float(confidence[chunk].mean())
        acc_b = float(correct[chunk].mean())
        table.append(BinStat(confidence=conf_b, accuracy=acc_b, count=size))
        total += (size / n) * abs(acc_b - conf_b)
    return total, table


@dataclass
class DetectionResult:
    auroc: float
    aupr: float
    fpr_at_95_tpr: float


def detection_metrics(scores: np.ndarray, positives: np.ndarray) -> DetectionResult:
    """Threshold-free detection quality of an uncertainty score.

    AUROC comes from rank statistics (exact tie handling), AUPR from step
    integration of the precision-recall curve over descending unique
    thresholds, and FPR-95 is the false-positive rate at the smallest
    flagged set {score >= t} reaching TPR >= 0.95.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape:
        raise ValidationError("scores and positives must have identical shape")
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("need at least one positive and one negative sample")

    ranks = rankdata(scores)
    auroc = (ranks[positives].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(~sorted_pos)
    # last index of each tie group = cumulative counts at that threshold
    boundary = np.flatnonzero(np.diff(sorted_scores, append=-np.inf))
    tp_t = tp[boundary].astype(np.float64)
    fp_t = fp[boundary].astype(np.float64)

    recall = tp_t / n_pos
    precision = tp_t / (tp_t + fp_t)
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    aupr = float(((recall - prev_recall) * precision).sum())

    hit = np.flatnonzero(recall >= 0.95)[0]
    fpr95 = float(fp_t[hit] / n_neg)
    return DetectionResult(auroc=float(auroc), aupr=aupr, fpr_at_95_tpr=fpr95)


def uncertainty_scores(logits: np.ndarray) -> dict[str, np.ndarray]:
    """Per-sample uncertainty scores, all oriented larger = more uncertain."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits must be finite")
    probs = softmax(z)
    plogp = np.where(probs > 0, probs * np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    return {
        "msp_negated": -probs.max(axis=1),
        "entropy": -plogp.sum(axis=1),
        "maxlogit_negated": -z.max(axis=1),
    }


def risk_coverage(
    probabilities: np.ndarray,
    labels: np.ndarray,
    uncertainty: np.ndarray,
    rates=DEFAULT_REJECTION_RATES,
    ids=None,
) -> list[tuple[float, float]]:
    """Accuracy on retained samples after rejecting the most uncertain.

    For each rate r the ceil(r*N) most-uncertain samples (ties by id) are
    dropped. An empty kept set reports accuracy NaN.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    uncertainty = np.asarray(uncertainty, dtype=np.float64)
    n = len(probs)
    if ids is None:
        ids = np.arange(n)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    order = np.lexsort((np.asarray(ids), -uncertainty))
    points = []
    for rate in rates:
        k = _ceil_frac(rate, n)
        kept = order[k:]
        acc = float(correct[kept].mean()) if kept.size else math.nan
        points.append((float(rate), acc))
    return points


def _ceil_frac(rate: float, n: int) -> int:
    return int(math.ceil(rate * n - 1e-9))


@dataclass
class BucketStat:
    start_rank: int  # 1-based, inclusive
    end_rank: int
    count: int
    error_rate: float


def bucket_error(scores, predictions: np.ndarray, labels: np.ndarray, bucket_size: int) -> list[BucketStat]:
    """Misclassification rate per difficulty bucket.

    Samples are sorted by descending difficulty (ties by id) and grouped
    into consecutive buckets of bucket_size; the last bucket may be smaller.
    predictions and labels are aligned with the scores entries.
    """
    if bucket_size < 1:
        raise ValidationError(f"bucket_size must be >= 1, got {bucket_size}")
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    n = scores.n
    if len(predictions) != n or len(labels) != n:
        raise ValidationError("predictions and labels must align with scores")
    order = np.lexsort((scores.ids, -scores.rmd))
    wrong = (predictions != labels).astype(np.float64)
    out = []
    for start in range(0, n, bucket_size):
        chunk = order[start:start + bucket_size]
        out.append(
            BucketStat(
                start_rank=start + 1,
                end_rank=start + len(chunk),
                count=len(chunk),
                error_rate=float(wrong[chunk].mean()),
            )
        )
    return out


@dataclass
class EvalReport:
    """Bundle of evaluation quantities for one model on one split."""

    accuracy: float
    ece: float
    nll: float
    bins: list[BinStat] = field(default_factory=list)
    detection: dict[str, DetectionResult] | None = None
    risk_coverage: list[tuple[float, float]] | None = None
    bucket_errors: list[BucketStat] | None = None

    def to_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "ece": self.ece,
            "nll": self.nll,
            "bins": [
                {"confidence": b.confidence, "accuracy": b.accuracy, "count": b.count}
                for b in self.bins
            ],
        }
        if self.detection is not None:
            out["detection"] = {
                kind: {"auroc": d.auroc, "aupr": d.aupr, "fpr_at_95_tpr": d.fpr_at_95_tpr}
                for kind, d in self.detection.items()
            }
        if self.risk_coverage is not None:
            out["risk_coverage"] = [
                {"rejection_rate": r, "accuracy": None if math.isnan(a) else a}
                for r, a in self.risk_coverage
            ]
        if self.bucket_errors is not None:
            out["bucket_errors"] = [
                {
                    "start_rank": b.start_rank,
                    "end_rank": b.end_rank,
                    "count": b.count,
                    "error_rate": b.error_rate,
                }
                for b in self.bucket_errors
            ]
        return out


def eval_report(
    logits: np.ndarray,
    labels: np.ndarray,
    ids=None,
    bins: int = DEFAULT_BINS,
    with_detection: bool = True,
    with_risk_coverage: bool = False,
) -> EvalReport:
    """Assemble an EvalReport from logits and labels."""
    probs = softmax(logits)
    ece_value, table = ece(probs, labels, bins=bins, ids=ids)
    report = EvalReport(
        accuracy=accuracy(probs, labels),
        ece=ece_value,
        nll=nll_from_logits(logits, labels),
        bins=table,
    )
    wrong = probs.argmax(axis=1) != np.asarray(labels)
    if with_detection and 0 < wrong.sum() < len(wrong):
        scores = uncertainty_scores(logits)
        report.detection = {
            kind: detection_metrics(values, wrong) for kind, values in scores.items()
        }
    if with_risk_coverage:
        report.risk_coverage = risk_coverage(
            probs, labels, uncertainty_scores(logits)["entropy"], ids=ids
        )
    return report
