import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldlab.dataset import (
    EXAMPLE2_REGIONS,
    Dataset,
    GroundTruth,
    NoiseSpec,
    bisector_margins,
    entropy,
    gaussian_posterior,
    in_stratum,
    inject_feature_noise,
    inject_label_noise,
    make_blobs,
    read_csv,
    regression_target,
    sample_regression_example,
    simplex_means,
    stratum_counts,
    write_csv,
    write_sidecar,
)
from ldlab.errors import InvalidArgumentError, UnsupportedError
from ldlab.seeding import derive_rng, derive_seed, round_half_up


# ---------------------------------------------------------------- containers


def test_dataset_rejects_duplicate_ids():
    with pytest.raises(InvalidArgumentError):
        Dataset(ids=[0, 0], features=[[1.0], [2.0]], labels=[0, 1], class_count=2)


def test_dataset_rejects_non_finite_features():
    with pytest.raises(InvalidArgumentError):
        Dataset(ids=[0, 1], features=[[1.0], [np.nan]], labels=[0, 1], class_count=2)


def test_dataset_rejects_out_of_range_class():
    with pytest.raises(InvalidArgumentError):
        Dataset(ids=[0, 1], features=[[1.0], [2.0]], labels=[0, 2], class_count=2)


def test_dataset_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        Dataset(ids=[], features=np.zeros((0, 2)), labels=[], class_count=2)


def test_truth_must_be_subset_and_cover():
    with pytest.raises(InvalidArgumentError):
        Dataset(ids=[0, 1], features=[[0.0], [1.0]], labels=[0, 1], class_count=2,
                truth=GroundTruth(noisy_ids={5}))
    with pytest.raises(InvalidArgumentError):
        Dataset(ids=[0, 1], features=[[0.0], [1.0]], labels=[0, 1], class_count=2,
                truth=GroundTruth(margins=np.zeros(3)))


def test_arrays_are_read_only():
    d = make_blobs(2, [5, 5], 2, 6.0, seed=0)
    with pytest.raises(ValueError):
        d.labels[0] = 1


def test_samples_and_positions():
    d = make_blobs(2, [3, 3], 2, 6.0, seed=0)
    s = d[2]
    assert s.id == 2 and s.label == d.labels[2]
    assert [x.id for x in d] == list(range(6))
    assert d.positions([4, 1]).tolist() == [4, 1]
    with pytest.raises(InvalidArgumentError):
        d.positions([99])


# ---------------------------------------------------------------- blobs


def test_blobs_counts_forced_by_arguments():
    d = make_blobs(2, [50, 50], 2, 6.0, seed=0)
    assert len(d) == 100
    assert d.truth.class_sizes == (50, 50)
    assert np.bincount(d.labels).tolist() == [50, 50]


def test_blobs_imbalanced_tail_has_three_samples():
    d = make_blobs(2, [60, 3], 2, 6.0, seed=2)
    assert np.sum(d.labels == 1) == 3


def test_blob_means_are_equidistant():
    means = simplex_means(4, 5, 7.5)
    dist = np.linalg.norm(means[:, None] - means[None], axis=2)
    off = dist[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(off, 7.5, rtol=1e-12)


def test_sample_at_class_mean_has_zero_entropy_and_half_separation_margin():
    # closed form: at a mean the nearest bisector lies sep/2 away, and every
    # other class is 32 nats less likely, so the posterior is one-hot to 1e-13
    means = simplex_means(3, 2, 8.0)
    labels = np.arange(3)
    margins = bisector_margins(means, labels, means)
    np.testing.assert_allclose(margins, 4.0, rtol=1e-12)
    post = gaussian_posterior(means, means, np.full(3, 1 / 3))
    assert np.all(entropy(post) < 1e-11)
    d = make_blobs(3, [100, 100, 100], 2, 8.0, seed=1)
    assert d.truth.margins.shape == (300,) and d.truth.uncertainties.shape == (300,)


def test_margin_sign_matches_nearest_mean_classification():
    d = make_blobs(3, [80, 80, 80], 2, 2.0, seed=4)
    means = simplex_means(3, 2, 2.0)
    nearest = np.argmin(((d.features[:, None] - means[None]) ** 2).sum(2), axis=1)
    assert np.array_equal(d.truth.margins > 0, nearest == d.labels)


@pytest.mark.parametrize("counts,dim", [([5, 0], 2), ([5, -1], 2), ([5, 5], 0)])
def test_blobs_reject_bad_arguments(counts, dim):
    with pytest.raises(InvalidArgumentError):
        make_blobs(2, counts, dim, 6.0, seed=0)


def test_blobs_reject_single_class_and_bad_separation():
    with pytest.raises(InvalidArgumentError):
        make_blobs(1, [5], 2, 6.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        make_blobs(2, [5, 5], 2, 0.0, seed=0)


# ---------------------------------------------------------------- label noise


def test_zero_rate_changes_nothing():
    d = make_blobs(3, [10, 10, 10], 2, 6.0, seed=0)
    out = inject_label_noise(d, NoiseSpec("symmetric", 0.0, seed=1))
    assert out.truth.noisy_ids == frozenset()
    assert np.array_equal(out.labels, d.labels)


def test_pair_flip_ten_samples_forty_percent():
    d = Dataset(ids=np.arange(10), features=np.arange(10.0)[:, None], labels=np.arange(10) % 3, class_count=3)
    out = inject_label_noise(d, NoiseSpec("pair_flip", 0.4, seed=7))
    changed = np.flatnonzero(out.labels != d.labels)
    assert len(changed) == 4
    assert np.array_equal(out.labels[changed], (d.labels[changed] + 1) % 3)
    assert out.truth.noisy_ids == frozenset(changed.tolist())


def test_symmetric_new_labels_uniform_over_other_classes():
    # 200 corrupted samples spread over 9 alternatives; each cell count is
    # Binomial(200, 1/9), so every cell must sit within 3 sigma of 200/9
    c, n = 10, 1000
    d = Dataset(ids=np.arange(n), features=np.zeros((n, 1)), labels=np.arange(n) % c, class_count=c)
    out = inject_label_noise(d, NoiseSpec("symmetric", 0.2, seed=3))
    changed = np.flatnonzero(out.labels != d.labels)
    assert len(changed) == 200
    offsets = (out.labels[changed] - d.labels[changed]) % c
    counts = np.bincount(offsets, minlength=c)[1:]
    mean, sd = 200 / 9, np.sqrt(200 * (1 / 9) * (8 / 9))
    assert np.all(np.abs(counts - mean) <= 3 * sd)
    chi2 = float(((counts - mean) ** 2 / mean).sum())
    assert chi2 < 26.12  # 99.9% quantile of chi-square with 8 dof


def test_label_noise_on_regression_is_unsupported():
    d = sample_regression_example(20, seed=0)
    with pytest.raises(UnsupportedError):
        inject_label_noise(d, NoiseSpec("symmetric", 0.1))


def test_noise_spec_validation():
    with pytest.raises(InvalidArgumentError):
        NoiseSpec("gaussian", 0.1)
    with pytest.raises(InvalidArgumentError):
        NoiseSpec("symmetric", 1.5)
    with pytest.raises(InvalidArgumentError):
        NoiseSpec("salt_pepper", 0.1, snr=0.0)
    with pytest.raises(InvalidArgumentError):
        NoiseSpec("salt_pepper", 0.1)


label_noise_cases = st.tuples(
    st.integers(2, 6),            # classes
    st.integers(1, 60),           # samples
    st.floats(0.0, 1.0),          # rate
    st.sampled_from(["symmetric", "pair_flip"]),
    st.integers(0, 2**31 - 1),    # seed
)


@settings(max_examples=60, deadline=None)
@given(label_noise_cases)
def test_label_noise_bookkeeping(case):
    c, n, rate, kind, seed = case
    labels = derive_rng(seed, "labels").integers(0, c, size=n)
    d = Dataset(ids=np.arange(n) * 3 + 1, features=np.zeros((n, 1)), labels=labels, class_count=c)
    before = d.labels.copy()
    out = inject_label_noise(d, NoiseSpec(kind, rate, seed=seed))
    changed = set(d.ids[out.labels != d.labels].tolist())
    assert len(out.truth.noisy_ids) == round_half_up(n * rate)
    assert changed == out.truth.noisy_ids
    assert np.array_equal(d.labels, before)
    assert np.array_equal(out.clean_labels, before)
    if kind == "pair_flip":
        m = out.labels != d.labels
        assert np.array_equal(out.labels[m], (d.labels[m] + 1) % c)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_label_noise_is_reproducible(seed):
    d = make_blobs(3, [10, 10, 10], 2, 6.0, seed=1)
    a = inject_label_noise(d, NoiseSpec("symmetric", 0.3, seed=seed))
    b = inject_label_noise(d, NoiseSpec("symmetric", 0.3, seed=seed))
    assert np.array_equal(a.labels, b.labels) and a.truth.noisy_ids == b.truth.noisy_ids


# ---------------------------------------------------------------- feature noise


def test_snr_one_is_rejected():
    d = make_blobs(2, [10, 10], 4, 6.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        inject_feature_noise(d, NoiseSpec("salt_pepper", 0.2, snr=1.0))


def test_salt_pepper_counts_and_extremes():
    d = make_blobs(2, [50, 50], 10, 6.0, seed=0)
    out = inject_feature_noise(d, NoiseSpec("salt_pepper", 0.2, snr=0.4, seed=5))
    lo, hi = d.features.min(axis=0), d.features.max(axis=0)
    assert len(out.truth.noisy_ids) == 20
    diff = out.features != d.features
    rows = np.flatnonzero(diff.any(axis=1))
    assert set(d.ids[rows].tolist()) == out.truth.noisy_ids
    assert np.all(diff[rows].sum(axis=1) == 6)
    hit = out.features[diff]
    cols = np.nonzero(diff)[1]
    assert np.all((hit == lo[cols]) | (hit == hi[cols]))
    assert np.array_equal(out.clean_features, d.features)
    assert np.array_equal(out.labels, d.labels)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.floats(0.01, 0.99), st.floats(0.0, 1.0), st.integers(0, 10**6))
def test_feature_noise_bookkeeping(dim, snr, rate, seed):
    d = make_blobs(2, [15, 15], dim, 6.0, seed=seed % 7)
    out = inject_feature_noise(d, NoiseSpec("salt_pepper", rate, snr=snr, seed=seed))
    changed = set(d.ids[(out.features != d.features).any(axis=1)].tolist())
    assert len(out.truth.noisy_ids) == round_half_up(30 * rate)
    assert changed == out.truth.noisy_ids


# ---------------------------------------------------------------- regression examples


def test_target_at_zero_is_limit():
    assert regression_target(np.array([0.0]))[0] == 0.0


def test_target_at_five():
    assert regression_target(np.array([5.0]))[0] == pytest.approx(3 - np.sin(15) / 5, abs=1e-15)
    assert regression_target(np.array([5.0]))[0] == pytest.approx(2.8699, abs=5e-5)


def test_stratified_example_region_counts():
    d = sample_regression_example(175, EXAMPLE2_REGIONS, 1.2, seed=0)
    x = d.features[:, 0]
    counts = [int(np.sum(in_stratum(x, lo, hi, hi >= 5))) for lo, hi, _ in EXAMPLE2_REGIONS]
    assert counts == [100, 50, 25]


def test_regression_example_stores_clean_and_noisy():
    d = sample_regression_example(500, None, 1.2, seed=3)
    assert d.class_count == 0
    np.testing.assert_array_equal(d.clean_labels, regression_target(d.features[:, 0]))
    resid = d.labels - d.clean_labels
    assert abs(resid.std() - 1.2) < 0.15
    assert np.all((d.features >= 0) & (d.features <= 5))


def test_zero_noise_targets_are_clean():
    d = sample_regression_example(10, None, 0.0, seed=0)
    np.testing.assert_array_equal(d.labels, d.clean_labels)


def test_stratum_counts_largest_remainder():
    assert stratum_counts(175, [100, 50, 25]) == [100, 50, 25]
    assert stratum_counts(7, [100, 50, 25]) == [4, 2, 1]
    assert sum(stratum_counts(1001, [1, 1, 1])) == 1001


def test_regression_example_argument_checks():
    with pytest.raises(InvalidArgumentError):
        sample_regression_example(0)
    with pytest.raises(InvalidArgumentError):
        sample_regression_example(10, noise_sigma=-1)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**31 - 1))
def test_regression_example_reproducible(n, seed):
    a = sample_regression_example(n, EXAMPLE2_REGIONS, 1.2, seed)
    b = sample_regression_example(n, EXAMPLE2_REGIONS, 1.2, seed)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)


# ---------------------------------------------------------------- serialization


def test_csv_round_trip(tmp_path):
    d = inject_label_noise(make_blobs(3, [7, 8, 9], 3, 5.0, seed=2), NoiseSpec("pair_flip", 0.3, seed=1))
    write_csv(d, tmp_path / "d.csv")
    write_sidecar(d, tmp_path / "d.json")
    back = read_csv(tmp_path / "d.csv")
    assert np.array_equal(back.ids, d.ids)
    assert np.array_equal(back.features, d.features)
    assert np.array_equal(back.labels, d.labels)
    assert np.array_equal(back.clean_labels, d.clean_labels)
    assert back.truth.noisy_ids == d.truth.noisy_ids
    assert np.array_equal(back.truth.margins, d.truth.margins)
    assert back.truth.class_sizes == (7, 8, 9)
    meta = json.loads((tmp_path / "d.json").read_text())
    assert meta["noisy_ids"] == sorted(d.truth.noisy_ids)


def test_regression_csv_round_trip(tmp_path):
    d = sample_regression_example(30, EXAMPLE2_REGIONS, 1.2, seed=1)
    write_csv(d, tmp_path / "r.csv")
    write_sidecar(d, tmp_path / "r.json")
    back = read_csv(tmp_path / "r.csv")
    assert back.class_count == 0
    assert np.array_equal(back.labels, d.labels)
    assert back.strata == d.strata


# ---------------------------------------------------------------- seeding


def test_derived_seeds_depend_on_every_label():
    assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
    assert derive_seed(0, "a", 1) != derive_seed(1, "a", 1)
    assert derive_seed(3, "x") == derive_seed(3, "x")


def test_round_half_up():
    assert round_half_up(2.5) == 3
    assert round_half_up(0.5) == 1
    assert round_half_up(600 * 0.4 * 1.1) == 264
    assert round_half_up(2.4999) == 2
