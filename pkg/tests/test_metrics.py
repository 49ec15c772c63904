import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from difficalib.difficulty import DifficultyScores
from difficalib.errors import ValidationError
from difficalib.metrics import (
    accuracy,
    bucket_error,
    detection_metrics,
    ece,
    eval_report,
    nll_from_logits,
    risk_coverage,
    softmax,
    uncertainty_scores,
)


def probs_from_confidence(confidences, correct):
    """Binary-class rows with the given top-1 confidence; label 0 iff correct."""
    probs = np.array([[c, 1.0 - c] for c in confidences])
    labels = np.array([0 if ok else 1 for ok in correct])
    return probs, labels


# --- ECE ---

def test_ece_hand_binned_fixture():
    probs, labels = probs_from_confidence([0.9, 0.8, 0.7, 0.6], [True, True, False, True])
    value, table = ece(probs, labels, bins=2)
    assert value == pytest.approx(0.15, abs=1e-15)
    assert [b.count for b in table] == [2, 2]
    assert table[0].confidence == pytest.approx(0.65)
    assert table[0].accuracy == pytest.approx(0.5)
    assert table[1].confidence == pytest.approx(0.85)
    assert table[1].accuracy == pytest.approx(1.0)


def test_ece_perfectly_confident_and_correct():
    probs, labels = probs_from_confidence([1.0] * 6, [True] * 6)
    assert ece(probs, labels, bins=3)[0] == 0.0


def test_ece_confident_but_half_right():
    probs, labels = probs_from_confidence([1.0] * 6, [True, False] * 3)
    assert ece(probs, labels, bins=3)[0] == pytest.approx(0.5)


def test_ece_requires_enough_samples():
    probs, labels = probs_from_confidence([0.9, 0.8], [True, True])
    with pytest.raises(ValidationError):
        ece(probs, labels, bins=3)


def test_ece_bin_sizes_differ_by_at_most_one():
    rng = np.random.default_rng(0)
    probs = softmax(rng.normal(size=(17, 4)))
    labels = rng.integers(0, 4, 17)
    _, table = ece(probs, labels, bins=5)
    counts = [b.count for b in table]
    assert sum(counts) == 17
    assert max(counts) - min(counts) <= 1
    assert counts == sorted(counts, reverse=True)  # larger groups first


def brute_force_ece(probs, labels, bins):
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    order = np.lexsort((np.arange(len(conf)), conf))
    q, r = divmod(len(conf), bins)
    sizes = [q + 1] * r + [q] * (bins - r)
    total, start = 0.0, 0
    for size in sizes:
        chunk = order[start:start + size]
        start += size
        total += size / len(conf) * abs(correct[chunk].mean() - conf[chunk].mean())
    return total


def test_ece_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(15, 120))
        k = int(rng.integers(2, 6))
        probs = softmax(rng.normal(size=(n, k)) * 2)
        labels = rng.integers(0, k, n)
        assert ece(probs, labels)[0] == pytest.approx(brute_force_ece(probs, labels, 15), abs=1e-12)


def test_ece_zero_on_calibrated_bins():
    # two equal-mass bins of 3, each with mean confidence equal to bin accuracy
    third = 2.0 / 3.0
    probs, labels = probs_from_confidence(
        [third, third, third, 1.0, 1.0, 1.0], [True, True, False, True, True, True]
    )
    assert ece(probs, labels, bins=2)[0] == pytest.approx(0.0, abs=1e-15)


# --- detection metrics ---

def test_detection_perfect_separation():
    scores = np.array([0.9, 0.8, 0.1, 0.2])
    positives = np.array([True, True, False, False])
    result = detection_metrics(scores, positives)
    assert result.auroc == 1.0
    assert result.fpr_at_95_tpr == 0.0
    assert result.aupr == 1.0


def test_detection_pairwise_counting_example():
    scores = np.array([0.8, 0.3, 0.5, 0.1])
    positives = np.array([True, True, False, False])
    assert detection_metrics(scores, positives).auroc == pytest.approx(3 / 4)


def test_detection_fpr95_manual_sweep():
    scores = np.array([0.9, 0.8, 0.85, 0.1])
    positives = np.array([True, True, False, False])
    assert detection_metrics(scores, positives).fpr_at_95_tpr == pytest.approx(0.5)


def test_detection_rejects_single_class():
    with pytest.raises(ValidationError):
        detection_metrics(np.array([1.0, 2.0]), np.array([True, True]))


def pairwise_auroc(scores, positives):
    pos = scores[positives]
    neg = scores[~positives]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=2, max_size=20))
def test_auroc_equals_pairwise_oracle_including_ties(raw):
    scores = np.array(raw, dtype=float)
    positives = np.arange(len(raw)) % 2 == 0
    if positives.all() or (~positives).all():
        return
    assert detection_metrics(scores, positives).auroc == pairwise_auroc(scores, positives)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5).map(lambda v: round(v, 6)), min_size=4, max_size=16,
                unique=True))
def test_detection_invariant_under_increasing_transform(raw):
    scores = np.array(raw)
    positives = np.arange(len(raw)) % 2 == 0
    a = detection_metrics(scores, positives)
    b = detection_metrics(np.exp(scores / 3) + 7, positives)
    assert a.auroc == pytest.approx(b.auroc, abs=1e-12)
    assert a.aupr == pytest.approx(b.aupr, abs=1e-12)
    assert a.fpr_at_95_tpr == pytest.approx(b.fpr_at_95_tpr, abs=1e-12)


# --- uncertainty scores ---

def test_uncertainty_uniform_logits():
    scores = uncertainty_scores(np.zeros((1, 5)))
    assert scores["entropy"][0] == pytest.approx(math.log(5))
    assert scores["msp_negated"][0] == pytest.approx(-0.2)
    assert scores["maxlogit_negated"][0] == 0.0


def test_uncertainty_saturated_logits():
    scores = uncertainty_scores(np.array([[1000.0, 0.0]]))
    assert scores["entropy"][0] == pytest.approx(0.0, abs=1e-12)
    assert scores["msp_negated"][0] == pytest.approx(-1.0, abs=1e-12)
    assert scores["maxlogit_negated"][0] == -1000.0


def test_uncertainty_orientation():
    peaked = uncertainty_scores(np.array([[4.0, 0.0, 0.0]]))
    flat = uncertainty_scores(np.array([[1.0, 0.0, 0.0]]))
    for key in ("entropy", "msp_negated", "maxlogit_negated"):
        assert peaked[key][0] < flat[key][0]


# --- risk coverage ---

def test_risk_coverage_zero_rejection_is_accuracy():
    rng = np.random.default_rng(3)
    probs = softmax(rng.normal(size=(40, 3)))
    labels = rng.integers(0, 3, 40)
    unc = uncertainty_scores(np.log(probs))["entropy"]
    points = risk_coverage(probs, labels, unc)
    assert points[0] == (0.0, accuracy(probs, labels))


def test_risk_coverage_oracle_rejector():
    n = 20
    correct = np.ones(n, bool)
    correct[:4] = False  # error rate 0.2
    probs = np.zeros((n, 2))
    labels = np.zeros(n, dtype=int)
    probs[:, 0] = 0.9
    probs[:, 1] = 0.1
    labels[~correct] = 1
    unc = np.where(correct, 0.0, 1.0)  # errors most uncertain
    points = dict(risk_coverage(probs, labels, unc))
    for rate, acc in points.items():
        if rate >= 0.2:
            assert acc == 1.0


def test_risk_coverage_matches_brute_force():
    rng = np.random.default_rng(4)
    probs = softmax(rng.normal(size=(33, 4)))
    labels = rng.integers(0, 4, 33)
    unc = rng.normal(size=33)
    ids = np.arange(33)
    points = risk_coverage(probs, labels, unc, ids=ids)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    for rate, acc in points:
        k = math.ceil(rate * 33 - 1e-9)
        kept = np.lexsort((ids, -unc))[k:]
        assert acc == pytest.approx(correct[kept].mean())


# --- bucket error ---

def scores_fixture(ids, rmd):
    rmd = np.asarray(rmd, float)
    return DifficultyScores(ids=np.asarray(ids, np.uint64), rmd=rmd,
                            weight=np.full(len(rmd), 0.5), scorer="rmd",
                            temperature=0.7, offset=1e-3)


def test_bucket_error_perfect_alignment():
    scores = scores_fixture([1, 2, 3, 4], [9.0, 8.0, 1.0, 0.0])
    predictions = np.array([1, 1, 0, 0])
    labels = np.array([0, 0, 0, 0])  # errors exactly on the two hardest
    stats = bucket_error(scores, predictions, labels, bucket_size=2)
    assert [b.error_rate for b in stats] == [1.0, 0.0]
    assert [(b.start_rank, b.end_rank) for b in stats] == [(1, 2), (3, 4)]


def test_bucket_error_uniform_random_predictions():
    rng = np.random.default_rng(5)
    n, k = 4000, 8
    scores = scores_fixture(np.arange(n), rng.normal(size=n))
    predictions = rng.integers(0, k, n)
    labels = rng.integers(0, k, n)
    stats = bucket_error(scores, predictions, labels, bucket_size=500)
    expected = 1 - 1 / k
    sigma = math.sqrt(expected * (1 - expected) / 500)
    for b in stats:
        assert abs(b.error_rate - expected) < 3 * sigma + 1e-9


def test_bucket_error_partition_identity():
    rng = np.random.default_rng(6)
    n = 101
    scores = scores_fixture(np.arange(n), rng.normal(size=n))
    predictions = rng.integers(0, 3, n)
    labels = rng.integers(0, 3, n)
    stats = bucket_error(scores, predictions, labels, bucket_size=25)
    overall = (predictions != labels).mean()
    weighted = sum(b.count * b.error_rate for b in stats) / n
    assert weighted == pytest.approx(overall, abs=1e-12)
    assert stats[-1].count == n % 25


# --- report assembly ---

def test_eval_report_bundle():
    rng = np.random.default_rng(7)
    logits = rng.normal(size=(60, 4)) * 2
    labels = rng.integers(0, 4, 60)
    report = eval_report(logits, labels, bins=5, with_risk_coverage=True)
    assert 0.0 <= report.accuracy <= 1.0
    assert 0.0 <= report.ece <= 1.0
    assert report.nll == pytest.approx(nll_from_logits(logits, labels))
    assert sum(b.count for b in report.bins) == 60
    assert set(report.detection) == {"msp_negated", "entropy", "maxlogit_negated"}
    assert len(report.risk_coverage) == 20
    payload = report.to_dict()
    assert payload["accuracy"] == report.accuracy
    assert len(payload["bins"]) == 5
