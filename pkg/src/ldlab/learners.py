"""Small probabilistic classifiers trained from scratch with numpy.

Two kinds share one training loop: multinomial logistic (softmax) regression
and a tanh MLP. Training is mini-batch gradient descent on mean cross-entropy
plus an L2 penalty, with a step learning-rate decay; after every epoch the
validation accuracy is recorded and the best epoch's parameters are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .dataset import Dataset
from .errors import InvalidArgumentError, TrainingDivergedError
from .seeding import derive_rng

LEARNER_KINDS = ("softmax_regression", "mlp")

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "softmax_regression"
    epochs: int = 30
    learning_rate: float = 0.5
    lr_decay: float = 0.5
    lr_decay_period: int = 10
    hidden_sizes: tuple[int, ...] = (32,)
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.kind not in LEARNER_KINDS:
            raise InvalidArgumentError(f"unknown learner kind {self.kind!r}")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.l2 < 0:
            raise InvalidArgumentError("l2 must be >= 0")
        if not 0 < self.lr_decay <= 1 or self.lr_decay_period < 1:
            raise InvalidArgumentError("lr_decay must be in (0, 1] with a period >= 1")
        if self.kind == "mlp" and not 1 <= len(self.hidden_sizes) <= 2:
            raise InvalidArgumentError("mlp takes one or two hidden layers")
        if any(h < 1 for h in self.hidden_sizes):
            raise InvalidArgumentError("hidden sizes must be positive")

    def learning_rate_at(self, epoch: int) -> float:
        """Step size for 1-based ``epoch``."""
        return self.learning_rate * self.lr_decay ** ((epoch - 1) // self.lr_decay_period)


# ---------------------------------------------------------------------------
# Models: parameters, forward pass, loss and gradient
# ---------------------------------------------------------------------------


def init_params(spec: LearnerSpec, dim: int, classes: int, rng: np.random.Generator | None = None) -> Params:
    """Zero weights for softmax regression; scaled Gaussian init for the MLP."""
    if spec.kind == "softmax_regression":
        return {"W0": np.zeros((dim, classes)), "b0": np.zeros(classes)}
    if rng is None:
        rng = derive_rng(spec.seed, "init")
    sizes = [dim, *spec.hidden_sizes, classes]
    params: Params = {}
    for k, (a, b) in enumerate(zip(sizes, sizes[1:])):
        params[f"W{k}"] = rng.normal(0.0, np.sqrt(1.0 / a), size=(a, b))
        params[f"b{k}"] = np.zeros(b)
    return params


def _layers(params: Params) -> int:
    return sum(1 for k in params if k.startswith("W"))


def logits(params: Params, x: np.ndarray) -> np.ndarray:
    h = x
    n = _layers(params)
    for k in range(n):
        h = h @ params[f"W{k}"] + params[f"b{k}"]
        if k < n - 1:
            h = np.tanh(h)
    return h


def per_sample_cross_entropy(params: Params, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return -log_softmax(logits(params, x), axis=1)[np.arange(len(y)), y]


def loss_and_grad(params: Params, x: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, Params]:
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` (biases unpenalized) and its gradient."""
    n = _layers(params)
    acts = [x]
    h = x
    for k in range(n):
        h = h @ params[f"W{k}"] + params[f"b{k}"]
        if k < n - 1:
            h = np.tanh(h)
            acts.append(h)
    logp = log_softmax(h, axis=1)
    m = len(y)
    loss = -logp[np.arange(m), y].mean()
    loss += 0.5 * l2 * sum(float(np.sum(params[f"W{k}"] ** 2)) for k in range(n))
    delta = np.exp(logp)
    delta[np.arange(m), y] -= 1.0
    delta /= m
    grads: Params = {}
    for k in range(n - 1, -1, -1):
        grads[f"W{k}"] = acts[k].T @ delta + l2 * params[f"W{k}"]
        grads[f"b{k}"] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params[f"W{k}"].T) * (1.0 - acts[k] ** 2)
    return float(loss), grads


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FittedModel:
    """Selected-epoch parameters plus the training history.

    ``train_losses`` (epochs x n_train) holds per-sample training
    cross-entropy after each epoch when it was recorded.
    """

    spec: LearnerSpec
    params: Params = field(repr=False)
    mean: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)
    class_count: int
    selected_epoch: int
    validation_accuracy: float
    history: tuple[float, ...] = field(default=(), repr=False)
    train_loss: tuple[float, ...] = field(default=(), repr=False)
    train_losses: np.ndarray | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.mean)


def _check_pair(train: Dataset, validation: Dataset) -> None:
    if not (train.is_classification and validation.is_classification):
        raise InvalidArgumentError("learners need classification datasets")
    if train.dimension != validation.dimension:
        raise InvalidArgumentError("train and validation dimensions differ")
    if train.class_count != validation.class_count:
        raise InvalidArgumentError("train and validation class counts differ")


def fit(
    spec: LearnerSpec,
    train: Dataset,
    validation: Dataset,
    record_train_losses: bool = False,
    where: str = "",
) -> FittedModel:
    """Train and return the snapshot of the epoch with best validation accuracy
    (earliest on ties). Features are standardized with training statistics."""
    _check_pair(train, validation)
    mean = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    x = (train.features - mean) / scale
    y = np.asarray(train.labels)
    xv = (validation.features - mean) / scale
    yv = np.asarray(validation.labels)
    c = train.class_count
    n = len(y)

    params = init_params(spec, x.shape[1], c, derive_rng(spec.seed, "init"))
    order_rng = derive_rng(spec.seed, "batches")
    best = (-1.0, 0, params)
    history, train_loss, recorded = [], [], []
    # overflow is caught by the finiteness checks below, so silence the warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, spec.epochs + 1):
            lr = spec.learning_rate_at(epoch)
            order = order_rng.permutation(n) if spec.batch_size < n else np.arange(n)
            for start in range(0, n, spec.batch_size):
                idx = order[start:start + spec.batch_size]
                loss, grads = loss_and_grad(params, x[idx], y[idx], spec.l2)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch, where)
                params = {k: v - lr * grads[k] for k, v in params.items()}
            per_sample = per_sample_cross_entropy(params, x, y)
            full = float(per_sample.mean() + 0.5 * spec.l2 * sum(
                float(np.sum(v ** 2)) for k, v in params.items() if k.startswith("W")))
            if not np.isfinite(full):
                raise TrainingDivergedError(epoch, where)
            train_loss.append(full)
            if record_train_losses:
                recorded.append(per_sample)
            acc = float(np.mean(np.argmax(logits(params, xv), axis=1) == yv))
            history.append(acc)
            if acc > best[0]:
                best = (acc, epoch, params)
    return FittedModel(
        spec=spec,
        params=best[2],
        mean=mean,
        scale=scale,
        class_count=c,
        selected_epoch=best[1],
        validation_accuracy=best[0],
        history=tuple(history),
        train_loss=tuple(train_loss),
        train_losses=np.array(recorded) if record_train_losses else None,
    )


def predict_proba(model: FittedModel, samples: Dataset | np.ndarray) -> np.ndarray:
    """Class-probability rows (softmax of the selected-epoch logits)."""
    x = samples.features if isinstance(samples, Dataset) else np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.dimension:
        raise InvalidArgumentError("sample dimension does not match the model")
    return softmax(logits(model.params, (x - model.mean) / model.scale), axis=1)


def untrained(spec: LearnerSpec, dim: int, classes: int) -> FittedModel:
    """Model at initialization (uniform predictions for softmax regression)."""
    return FittedModel(spec, init_params(spec, dim, classes), np.zeros(dim), np.ones(dim), classes, 0, 0.0)


# ---------------------------------------------------------------------------
# Gradient checking helpers
# ---------------------------------------------------------------------------


def flatten(params: Params) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in sorted(params)])


def unflatten(vec: np.ndarray, like: Params) -> Params:
    out, pos = {}, 0
    for k in sorted(like):
        size = like[k].size
        out[k] = vec[pos:pos + size].reshape(like[k].shape)
        pos += size
    return out


def numeric_gradient(params: Params, x: np.ndarray, y: np.ndarray, l2: float, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of :func:`loss_and_grad`'s loss."""
    theta = flatten(params)
    g = np.empty_like(theta)
    for i in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[i] += eps
        down[i] -= eps
        g[i] = (loss_and_grad(unflatten(up, params), x, y, l2)[0]
                - loss_and_grad(unflatten(down, params), x, y, l2)[0]) / (2 * eps)
    return g
