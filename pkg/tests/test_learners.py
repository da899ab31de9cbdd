import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldlab.dataset import Dataset, make_blobs
from ldlab.errors import InvalidArgumentError, TrainingDivergedError
from ldlab.learners import (
    LearnerSpec,
    fit,
    flatten,
    init_params,
    loss_and_grad,
    numeric_gradient,
    predict_proba,
    untrained,
)

from conftest import validation_blobs


@pytest.fixture(scope="module")
def separable():
    train = make_blobs(2, [100, 100], 2, 10.0, seed=0)
    val = validation_blobs(2, [50, 50], 2, 10.0, seed=1)
    return train, val


def relative_error(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


# ---------------------------------------------------------------- fitting


def test_separable_blobs_reach_high_accuracy(separable):
    train, val = separable
    model = fit(LearnerSpec(), train, val)
    assert model.validation_accuracy >= 0.99
    train_acc = np.mean(np.argmax(predict_proba(model, train), axis=1) == train.labels)
    assert train_acc >= 0.99


def test_mlp_fits_separable_blobs(separable):
    train, val = separable
    model = fit(LearnerSpec(kind="mlp", hidden_sizes=(8,), epochs=10, learning_rate=0.2), train, val)
    assert model.validation_accuracy >= 0.99


def test_single_epoch_selects_epoch_one(separable):
    model = fit(LearnerSpec(epochs=1), *separable)
    assert model.selected_epoch == 1


def test_selected_epoch_is_earliest_best(separable):
    model = fit(LearnerSpec(epochs=12), *separable)
    hist = np.array(model.history)
    assert model.selected_epoch == int(np.argmax(hist)) + 1
    assert model.validation_accuracy == hist.max()
    assert 1 <= model.selected_epoch <= 12


def test_fit_is_deterministic():
    train = make_blobs(3, [30, 30, 30], 3, 3.0, seed=2)
    val = validation_blobs(3, [10, 10, 10], 3, 3.0, seed=3)
    for spec in (LearnerSpec(seed=5, epochs=5), LearnerSpec(kind="mlp", seed=5, epochs=5)):
        a, b = fit(spec, train, val), fit(spec, train, val)
        assert np.array_equal(flatten(a.params), flatten(b.params))
        assert a.history == b.history


def test_seed_changes_mlp_initialization():
    a = init_params(LearnerSpec(kind="mlp", seed=1), 3, 2)
    b = init_params(LearnerSpec(kind="mlp", seed=2), 3, 2)
    assert not np.array_equal(a["W0"], b["W0"])


def test_full_batch_softmax_loss_is_non_increasing():
    train = make_blobs(3, [40, 40, 40], 2, 2.0, seed=4)
    val = validation_blobs(3, [10, 10, 10], 2, 2.0, seed=5)
    spec = LearnerSpec(epochs=40, batch_size=10_000, learning_rate=0.1, lr_decay=1.0, l2=1e-3)
    losses = np.array(fit(spec, train, val).train_loss)
    assert np.all(np.diff(losses) <= 1e-10)


def test_mismatched_datasets_rejected(separable):
    train, _ = separable
    wide = validation_blobs(2, [5, 5], 3, 10.0, seed=1)
    three = validation_blobs(3, [5, 5, 5], 2, 10.0, seed=1)
    with pytest.raises(InvalidArgumentError):
        fit(LearnerSpec(), train, wide)
    with pytest.raises(InvalidArgumentError):
        fit(LearnerSpec(), train, three)
    reg = Dataset(ids=[0, 1], features=[[0.0, 1.0], [1.0, 0.0]], labels=[0.5, 1.5], class_count=0)
    with pytest.raises(InvalidArgumentError):
        fit(LearnerSpec(), reg, train)


def test_divergence_names_the_epoch(separable):
    with pytest.raises(TrainingDivergedError) as info:
        fit(LearnerSpec(learning_rate=1e308, l2=1.0), *separable, where="unit")
    assert info.value.epoch == 1
    assert "epoch 1" in str(info.value) and "unit" in str(info.value)


@pytest.mark.parametrize("kw", [
    dict(epochs=0), dict(learning_rate=0.0), dict(batch_size=0), dict(l2=-1.0),
    dict(kind="svm"), dict(kind="mlp", hidden_sizes=()), dict(kind="mlp", hidden_sizes=(4, 4, 4)),
    dict(lr_decay=0.0), dict(lr_decay_period=0),
])
def test_spec_validation(kw):
    with pytest.raises(InvalidArgumentError):
        LearnerSpec(**kw)


def test_learning_rate_decay_schedule():
    spec = LearnerSpec(learning_rate=1.0, lr_decay=0.5, lr_decay_period=3)
    assert [spec.learning_rate_at(e) for e in (1, 3, 4, 7)] == [1.0, 1.0, 0.5, 0.25]


# ---------------------------------------------------------------- prediction


def test_untrained_softmax_is_uniform():
    m = untrained(LearnerSpec(), 4, 5)
    p = predict_proba(m, np.random.default_rng(0).normal(size=(7, 4)))
    np.testing.assert_array_equal(p, np.full((7, 5), 0.2))


def test_predict_dimension_mismatch(separable):
    model = fit(LearnerSpec(epochs=1), *separable)
    with pytest.raises(InvalidArgumentError):
        predict_proba(model, np.zeros((3, 5)))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["softmax_regression", "mlp"]), st.integers(0, 10**6), st.floats(-50, 50))
def test_rows_are_distributions(kind, seed, shift):
    train = make_blobs(3, [15, 15, 15], 2, 3.0, seed=seed % 11)
    val = validation_blobs(3, [5, 5, 5], 2, 3.0, seed=seed % 13)
    model = fit(LearnerSpec(kind=kind, epochs=3, seed=seed), train, val)
    p = predict_proba(model, train.features + shift)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


# ---------------------------------------------------------------- gradients


@pytest.mark.parametrize("kind,hidden", [("softmax_regression", ()), ("mlp", (5,)), ("mlp", (4, 3))])
@pytest.mark.parametrize("seed", range(5))
def test_analytic_gradient_matches_finite_differences(kind, hidden, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(6, 4))
    y = r.integers(0, 3, size=6)
    spec = LearnerSpec(kind=kind, hidden_sizes=hidden or (1,), seed=seed)
    params = init_params(spec, 4, 3, r)
    if kind == "softmax_regression":
        params = {k: r.normal(size=v.shape) for k, v in params.items()}
    _, grads = loss_and_grad(params, x, y, l2=0.01)
    assert relative_error(flatten(grads), numeric_gradient(params, x, y, 0.01)) < 1e-5
