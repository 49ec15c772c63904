import numpy as np
import pytest

from difficalib.errors import FitError, SingularCovarianceError, ValidationError
from difficalib.gaussian import (
    GaussianBank,
    agnostic_distances,
    class_distances,
    fit_gaussian_bank,
    load_bank,
    mahalanobis_agnostic,
    mahalanobis_class,
    pooled_scatter,
    save_bank,
)

from conftest import make_ds


def two_class_fixture():
    # class 0 = {(-1,0),(1,0)}, class 1 = {(2,2),(4,2)}
    return make_ds([[-1, 0], [1, 0], [2, 2], [4, 2]], [0, 0, 1, 1], [1, 2, 3, 4], 2)


def bank_from(chol_pooled, means, agn_mean=None, chol_agn=None):
    """Hand-built bank for distance tests."""
    means = np.asarray(means, dtype=np.float64)
    d = means.shape[1]
    return GaussianBank(
        class_means=means,
        pooled_chol=np.asarray(chol_pooled, dtype=np.float64),
        agn_mean=np.zeros(d) if agn_mean is None else np.asarray(agn_mean, np.float64),
        agn_chol=np.eye(d) if chol_agn is None else np.asarray(chol_agn, np.float64),
        shrinkage=0.0,
        class_counts=np.ones(len(means), dtype=np.int64),
    )


def test_fit_means_are_sample_means():
    bank = fit_gaussian_bank(two_class_fixture(), shrinkage=1e-3)
    assert np.allclose(bank.class_means, [[0, 0], [3, 2]])
    assert np.allclose(bank.agn_mean, [1.5, 1])
    assert np.array_equal(bank.class_counts, [2, 2])


def test_singular_pooled_scatter_needs_shrinkage():
    ds = two_class_fixture()
    # all four deviations are (+-1, 0): scatter [[1,0],[0,0]], singular
    assert np.allclose(pooled_scatter(ds), [[1, 0], [0, 0]])
    with pytest.raises(SingularCovarianceError):
        fit_gaussian_bank(ds, shrinkage=0.0)
    bank = fit_gaussian_bank(ds, shrinkage=1e-3)
    assert np.all(np.diag(bank.pooled_chol) > 0)


def test_single_sample_per_class_degenerate_scatter():
    ds = make_ds([[0.0], [4.0]], [0, 1], [1, 2], 2)
    with pytest.raises(SingularCovarianceError):
        fit_gaussian_bank(ds, shrinkage=0.0)
    lam = 0.5
    bank = fit_gaussian_bank(ds, shrinkage=lam)
    # zero-trace fallback: shrunk pooled covariance is lam * I
    f = np.array([1.0])
    assert mahalanobis_class(bank, f, 0) == pytest.approx((1.0 - 0.0) ** 2 / lam)
    assert mahalanobis_class(bank, f, 1) == pytest.approx((1.0 - 4.0) ** 2 / lam)


def test_identity_covariance_distance():
    bank = bank_from(np.eye(2), [[0.0, 0.0]])
    assert mahalanobis_class(bank, [1.0, 0.0], 0) == pytest.approx(1.0)


def test_diagonal_covariance_explicit_inverse_oracle():
    # Sigma = diag(4,1) -> chol = diag(2,1); deviation (2,1) -> 4/4 + 1/1
    bank = bank_from(np.diag([2.0, 1.0]), [[0.0, 0.0]])
    assert mahalanobis_class(bank, [2.0, 1.0], 0) == pytest.approx(2.0)


def test_distance_at_class_mean_is_zero():
    bank = fit_gaussian_bank(two_class_fixture(), shrinkage=1e-3)
    assert mahalanobis_class(bank, bank.class_means[1], 1) == 0.0


def test_agnostic_at_mean_and_identity():
    bank = bank_from(np.eye(2), [[0.0, 0.0]], agn_mean=[1.0, 1.0])
    assert mahalanobis_agnostic(bank, [1.0, 1.0]) == 0.0
    assert mahalanobis_agnostic(bank, [1.0, 4.0]) == pytest.approx(9.0)


def test_agnostic_matches_brute_force_inverse():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(4, 4))
    cov = a @ a.T + 0.5 * np.eye(4)
    mean = rng.normal(size=4)
    bank = bank_from(np.eye(4), [np.zeros(4)], agn_mean=mean, chol_agn=np.linalg.cholesky(cov))
    f = rng.normal(size=4)
    expected = (f - mean) @ np.linalg.inv(cov) @ (f - mean)
    assert mahalanobis_agnostic(bank, f) == pytest.approx(expected, abs=1e-8)


def test_out_of_range_class_is_index_error():
    bank = fit_gaussian_bank(two_class_fixture(), shrinkage=1e-3)
    with pytest.raises(IndexError):
        mahalanobis_class(bank, [0.0, 0.0], 2)


def test_empty_class_names_the_class():
    ds = make_ds([[0.0], [1.0]], [0, 0], [1, 2], 3)
    with pytest.raises(FitError) as err:
        fit_gaussian_bank(ds, 1e-4)
    assert "class 1" in str(err.value)


def test_negative_shrinkage_rejected():
    with pytest.raises(ValidationError):
        fit_gaussian_bank(two_class_fixture(), shrinkage=-1.0)


def random_dataset(rng, n=60, d=4, k=3):
    feats = rng.normal(size=(n, d)) * rng.uniform(0.5, 2.0, size=d)
    labels = rng.integers(0, k, n)
    labels[:k] = np.arange(k)  # every class populated
    return make_ds(feats, labels, np.arange(n), k)


def test_cholesky_solve_equals_explicit_inverse():
    rng = np.random.default_rng(0)
    for _ in range(25):
        d = int(rng.integers(1, 9))
        a = rng.normal(size=(d, d))
        cov = a @ a.T + 0.3 * np.eye(d)
        mean = rng.normal(size=d)
        bank = bank_from(np.linalg.cholesky(cov), [mean])
        f = rng.normal(size=d)
        expected = (f - mean) @ np.linalg.inv(cov) @ (f - mean)
        assert mahalanobis_class(bank, f, 0) == pytest.approx(expected, abs=1e-8)


def test_translation_invariance():
    # dyadic-rational features keep the float32 translation exact
    rng = np.random.default_rng(5)
    feats = rng.integers(-128, 129, size=(60, 4)) / 64.0
    labels = rng.integers(0, 3, 60)
    labels[:3] = np.arange(3)
    ds = make_ds(feats, labels, np.arange(60), 3)
    shift = rng.integers(-640, 641, size=4) / 64.0
    shifted = make_ds(ds.features.astype(np.float64) + shift, ds.labels, ds.ids, ds.num_classes)
    b1 = fit_gaussian_bank(ds, 1e-6)
    b2 = fit_gaussian_bank(shifted, 1e-6)
    q = rng.normal(size=ds.dim)
    d1 = mahalanobis_class(b1, q, 1)
    d2 = mahalanobis_class(b2, q + shift, 1)
    assert d1 == pytest.approx(d2, abs=1e-10)
    assert mahalanobis_agnostic(b1, q) == pytest.approx(mahalanobis_agnostic(b2, q + shift), abs=1e-10)


def test_affine_invariance_at_zero_shrinkage():
    rng = np.random.default_rng(6)
    ds = random_dataset(rng, n=200, d=3)
    a = rng.normal(size=(3, 3)) + 2 * np.eye(3)
    mapped = make_ds(ds.features @ a.T.astype(np.float32), ds.labels, ds.ids, ds.num_classes)
    b1 = fit_gaussian_bank(ds, 0.0)
    b2 = fit_gaussian_bank(mapped, 0.0)
    q = rng.normal(size=3)
    assert mahalanobis_class(b1, q, 0) == pytest.approx(mahalanobis_class(b2, a @ q, 0), rel=1e-6)
    assert mahalanobis_agnostic(b1, q) == pytest.approx(mahalanobis_agnostic(b2, a @ q), rel=1e-6)


def test_pooled_scatter_psd_and_decomposition():
    rng = np.random.default_rng(9)
    ds = random_dataset(rng, n=80, d=5, k=4)
    scatter = pooled_scatter(ds)
    assert np.allclose(scatter, scatter.T)
    assert np.linalg.eigvalsh(scatter).min() >= -1e-9
    # weighted within-class decomposition
    feats = ds.features.astype(np.float64)
    total = np.zeros((5, 5))
    for c in range(ds.num_classes):
        x = feats[ds.labels == c]
        centered = x - x.mean(axis=0)
        total += (len(x) / ds.n) * (centered.T @ centered / len(x))
    assert np.allclose(scatter, total, atol=1e-10)


def test_batch_distances_match_scalar_ops():
    rng = np.random.default_rng(13)
    ds = random_dataset(rng)
    bank = fit_gaussian_bank(ds, 1e-4)
    queries = rng.normal(size=(7, ds.dim))
    labels = rng.integers(0, ds.num_classes, 7)
    batch_c = class_distances(bank, queries, labels)
    batch_a = agnostic_distances(bank, queries)
    for i in range(7):
        assert batch_c[i] == pytest.approx(mahalanobis_class(bank, queries[i], int(labels[i])), abs=1e-10)
        assert batch_a[i] == pytest.approx(mahalanobis_agnostic(bank, queries[i]), abs=1e-10)


def test_threaded_scatter_matches_serial(monkeypatch):
    rng = np.random.default_rng(17)
    ds = random_dataset(rng, n=120, d=6, k=5)
    serial = pooled_scatter(ds)
    monkeypatch.setenv("DIFFICALIB_THREADS", "4")
    threaded = pooled_scatter(ds)
    assert np.allclose(serial, threaded, atol=1e-10)


def test_bank_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    bank = fit_gaussian_bank(random_dataset(rng), 1e-3)
    path = tmp_path / "bank.gbk"
    save_bank(bank, path)
    loaded = load_bank(path)
    assert np.array_equal(loaded.class_means, bank.class_means)
    assert np.array_equal(loaded.pooled_chol, bank.pooled_chol)
    assert np.array_equal(loaded.agn_mean, bank.agn_mean)
    assert np.array_equal(loaded.agn_chol, bank.agn_chol)
    assert np.array_equal(loaded.class_counts, bank.class_counts)
    assert loaded.shrinkage == bank.shrinkage
