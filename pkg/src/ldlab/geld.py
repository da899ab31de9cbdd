"""Generalization-error-based learning difficulty (GELD).

``K`` repeats of ``M``-fold cross-validation give every training sample
``K*M`` predicted distributions. Their normalized geometric mean is the
average prediction; the bias is the cross-entropy of the observed label
under that average and the variance is the mean cross-entropy of each
prediction against the average. The difficulty score is
``bias + mu * variance``.

Two single-run baselines are included: the per-sample loss at the best
validation epoch (``Loss``) and the per-sample loss averaged over the last
``E`` epochs (``AveLoss``).
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import InvalidArgumentError, TrainingDivergedError
from .learners import LearnerSpec, fit, predict_proba
from .seeding import derive_rng, derive_seed

BASELINE_MODES = ("final", "average_last_E")


class WindowClippedWarning(UserWarning):
    """The AveLoss window asked for more epochs than were trained."""


def thread_count() -> int:
    """Worker cap from ``LDLAB_THREADS`` (default 1)."""
    raw = os.environ.get("LDLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidArgumentError(f"LDLAB_THREADS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class GeldConfig:
    K: int = 5
    M: int = 6
    mu: float = 1.0
    prob_floor: float = 1e-12
    seed: int = 0
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    centered: bool = False
    normalize: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise InvalidArgumentError("K must be >= 1")
        if self.M < 2:
            raise InvalidArgumentError("M must be >= 2")
        if not self.mu >= 0:
            raise InvalidArgumentError("mu must be >= 0")
        if not 0 < self.prob_floor < 0.5:
            raise InvalidArgumentError("prob_floor must lie in (0, 0.5)")


@dataclass(frozen=True)
class PredictionTensor:
    """``probs[i, k, m]`` is the distribution predicted for sample ``ids[i]``
    by the model trained without fold ``m`` of repeat ``k``; ``folds[k, i]``
    is the fold that held sample ``i`` out in repeat ``k``."""

    ids: np.ndarray
    probs: np.ndarray
    folds: np.ndarray
    prob_floor: float = 1e-12
    selected_epochs: np.ndarray | None = None

    def __post_init__(self):
        if self.probs.ndim != 4 or self.probs.shape[0] != len(self.ids):
            raise InvalidArgumentError("probs must have shape (N, K, M, C)")
        if self.folds.shape != (self.probs.shape[1], len(self.ids)):
            raise InvalidArgumentError("folds must have shape (K, N)")

    @property
    def K(self) -> int:
        return self.probs.shape[1]

    @property
    def M(self) -> int:
        return self.probs.shape[2]

    @property
    def class_count(self) -> int:
        return self.probs.shape[3]

    def predictions(self, sample_id: int) -> np.ndarray:
        """The ``K*M`` clamped vectors of one sample, shape ``(K*M, C)``."""
        hit = np.flatnonzero(self.ids == sample_id)
        if len(hit) != 1:
            raise InvalidArgumentError(f"unknown sample id {sample_id}")
        return self.probs[hit[0]].reshape(-1, self.class_count)


def clamp(p: np.ndarray, floor: float) -> np.ndarray:
    """Clip into ``[floor, 1]`` so logs stay finite; rows are not renormalized."""
    return np.clip(p, floor, 1.0)


def fold_assignment(n: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random partition of ``n`` positions into ``M`` folds whose sizes
    differ by at most one."""
    if n < M:
        raise InvalidArgumentError(f"need at least M={M} samples, got {n}")
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % M
    return folds


# ---------------------------------------------------------------------------
# Score components
# ---------------------------------------------------------------------------


def _geometric_mean(preds: np.ndarray, normalize: bool) -> np.ndarray:
    """Geometric mean over axis -2 computed in log space."""
    g = np.exp(np.log(preds).mean(axis=-2))
    if normalize:
        g = g / g.sum(axis=-1, keepdims=True)
    return g


def _all_equal(preds: np.ndarray) -> bool:
    return bool(np.all(preds == preds[..., :1, :]))


def average_prediction(tensor: PredictionTensor, sample_id: int, normalize: bool = True) -> np.ndarray:
    """Component-wise geometric mean of a sample's ``K*M`` predictions."""
    preds = tensor.predictions(sample_id)
    if _all_equal(preds) and not normalize:
        return preds[0].copy()
    return _geometric_mean(preds, normalize)


def entropy_of(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def bias_term(avg: np.ndarray, label: int, prob_floor: float = 1e-12) -> float:
    """Cross-entropy of the observed label under the average prediction."""
    return float(-np.log(max(float(avg[label]), prob_floor)))


def _variance(preds: np.ndarray, avg: np.ndarray, centered: bool) -> float:
    if _all_equal(preds):
        # CE(p, p) is the entropy of p; take that path exactly
        v = entropy_of(avg)
    else:
        v = float(np.mean(-(np.log(preds) * avg).sum(axis=1)))
    if centered:
        v = max(0.0, v - entropy_of(avg))
    return v


def variance_term(tensor: PredictionTensor, sample_id: int, avg: np.ndarray, centered: bool = False) -> float:
    """Mean over the ``K*M`` predictions of ``-sum_c avg[c] * log p[c]``.

    When all predictions coincide this equals the entropy of ``avg`` rather
    than zero; ``centered=True`` subtracts that entropy.
    """
    return _variance(tensor.predictions(sample_id), np.asarray(avg, dtype=float), centered)


def geld_score(bias: float, var: float, mu: float) -> float:
    if bias < 0 or var < 0 or mu < 0:
        raise InvalidArgumentError("bias, variance and mu must be non-negative")
    return bias + mu * var


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


def descending_rank(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """1-based ranks by decreasing score, ties to the smaller id."""
    order = np.lexsort((ids, -np.asarray(scores)))
    rank = np.empty(len(ids), dtype=np.int64)
    rank[order] = np.arange(1, len(ids) + 1)
    return rank


@dataclass(frozen=True)
class DifficultyReport:
    """Per-sample scores keyed by ``ids`` (sorted ascending)."""

    ids: np.ndarray
    bias: np.ndarray
    variance: np.ndarray
    err: np.ndarray
    rank: np.ndarray
    mu: float
    noisy_flag: np.ndarray
    loss: np.ndarray | None = None
    ave_loss: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def scores(self, method: str = "geld") -> np.ndarray:
        """Difficulty scores for ``geld``, ``loss`` or ``ave_loss``."""
        col = {"geld": self.err, "loss": self.loss, "ave_loss": self.ave_loss}.get(method.lower())
        if col is None:
            raise InvalidArgumentError(f"no {method!r} scores in this report")
        return col

    def with_mu(self, mu: float) -> "DifficultyReport":
        """Same components recombined under another variance weight."""
        if not mu >= 0:
            raise InvalidArgumentError("mu must be >= 0")
        err = self.bias + mu * self.variance
        return replace(self, mu=float(mu), err=err, rank=descending_rank(err, self.ids))

    def with_baselines(self, loss: np.ndarray | None, ave_loss: np.ndarray | None) -> "DifficultyReport":
        return replace(self, loss=loss, ave_loss=ave_loss)

    def rows(self) -> list[dict]:
        out = []
        for j in range(len(self)):
            out.append({
                "sample_id": int(self.ids[j]),
                "bias": float(self.bias[j]),
                "variance": float(self.variance[j]),
                "err": float(self.err[j]),
                "rank": int(self.rank[j]),
                "loss": None if self.loss is None else float(self.loss[j]),
                "ave_loss": None if self.ave_loss is None else float(self.ave_loss[j]),
                "noisy_flag": bool(self.noisy_flag[j]),
            })
        return out

    def write_csv(self, path: str | Path) -> None:
        cols = ["sample_id", "bias", "variance", "err", "rank", "loss", "ave_loss", "noisy_flag"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.rows():
                w.writerow(["" if row[c] is None else
                            int(row[c]) if c == "noisy_flag" else
                            repr(row[c]) for c in cols])

    def write_json(self, path: str | Path) -> None:
        doc = {"mu": self.mu, "samples": self.rows()}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def report_from_tensor(
    tensor: PredictionTensor,
    labels: np.ndarray,
    mu: float,
    noisy_flag: np.ndarray | None = None,
    centered: bool = False,
    normalize: bool = True,
) -> DifficultyReport:
    n = len(tensor.ids)
    bias, var = np.empty(n), np.empty(n)
    for i in range(n):
        preds = tensor.probs[i].reshape(-1, tensor.class_count)
        if _all_equal(preds) and not normalize:
            avg = preds[0]
        else:
            avg = _geometric_mean(preds, normalize)
        bias[i] = bias_term(avg, int(labels[i]), tensor.prob_floor)
        var[i] = _variance(preds, avg, centered)
    err = bias + mu * var
    return DifficultyReport(
        ids=tensor.ids.copy(),
        bias=bias,
        variance=var,
        err=err,
        rank=descending_rank(err, tensor.ids),
        mu=float(mu),
        noisy_flag=np.zeros(n, bool) if noisy_flag is None else np.asarray(noisy_flag, bool),
    )


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def _check_inputs(train: Dataset, validation: Dataset) -> None:
    if not train.is_classification:
        raise InvalidArgumentError("GELD needs a classification training set")
    if set(train.ids.tolist()) & set(validation.ids.tolist()):
        raise InvalidArgumentError("validation must be disjoint from train")


def run_geld(train: Dataset, validation: Dataset, config: GeldConfig) -> tuple[PredictionTensor, DifficultyReport]:
    """Cross-validated prediction tensor and GELD report for ``train``.

    Rows are ordered by sample id, so the result does not depend on the
    input row order. Fold fits are independent and run on up to
    ``LDLAB_THREADS`` threads; results land in fixed ``(k, m)`` slots.
    """
    _check_inputs(train, validation)
    data = train.sorted_by_id()
    n, c = len(data), data.class_count
    if n < config.M:
        raise InvalidArgumentError(f"need N >= M, got N={n}, M={config.M}")
    folds = np.stack([fold_assignment(n, config.M, derive_rng(config.seed, "folds", k))
                      for k in range(config.K)])
    probs = np.empty((n, config.K, config.M, c))
    epochs = np.zeros((config.K, config.M), dtype=np.int64)

    def job(km: tuple[int, int]) -> None:
        k, m = km
        spec = replace(config.learner, seed=derive_seed(config.seed, "fit", k, m))
        try:
            model = fit(spec, data.subset(np.flatnonzero(folds[k] != m)), validation, where=f"k={k}, m={m}")
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(exc.epoch, f"k={k}, m={m}") from exc
        probs[:, k, m, :] = clamp(predict_proba(model, data), config.prob_floor)
        epochs[k, m] = model.selected_epoch

    slots = [(k, m) for k in range(config.K) for m in range(config.M)]
    workers = min(thread_count(), len(slots))
    if workers == 1:
        for s in slots:
            job(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(job, slots))

    tensor = PredictionTensor(ids=data.ids.copy(), probs=probs, folds=folds,
                              prob_floor=config.prob_floor, selected_epochs=epochs)
    report = report_from_tensor(tensor, data.labels, config.mu, data.noisy_mask,
                                centered=config.centered, normalize=config.normalize)
    return tensor, report


def _window(spec: LearnerSpec, window: int | None) -> int:
    e = min(100, spec.epochs) if window is None else int(window)
    if e < 1:
        raise InvalidArgumentError("window must be >= 1")
    if e > spec.epochs:
        warnings.warn(f"AveLoss window {e} clipped to {spec.epochs} epochs", WindowClippedWarning, stacklevel=3)
        e = spec.epochs
    return e


def baseline_loss(
    train: Dataset,
    validation: Dataset,
    spec: LearnerSpec,
    mode: str = "final",
    window: int | None = None,
) -> np.ndarray:
    """Per-sample training cross-entropy from one full-data run, in ``train`` row order.

    ``final`` takes the losses of the best-validation epoch; ``average_last_E``
    averages the last ``window`` epochs (default ``min(100, epochs)``).
    """
    if mode not in BASELINE_MODES:
        raise InvalidArgumentError(f"unknown baseline mode {mode!r}")
    _check_inputs(train, validation)
    model = fit(spec, train, validation, record_train_losses=True, where="baseline")
    losses = model.train_losses
    if mode == "final":
        return losses[model.selected_epoch - 1].copy()
    return losses[-_window(spec, window):].mean(axis=0)


def baselines_for(train: Dataset, validation: Dataset, spec: LearnerSpec, window: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Both baselines from a single training run, ordered by sample id."""
    _check_inputs(train, validation)
    data = train.sorted_by_id()
    model = fit(spec, data, validation, record_train_losses=True, where="baseline")
    losses = model.train_losses
    return losses[model.selected_epoch - 1].copy(), losses[-_window(spec, window):].mean(axis=0)


def write_tensor_csv(tensor: PredictionTensor, path: str | Path) -> None:
    """Long-format audit dump: one row per (sample, repeat, fold, class)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "k", "m", "class", "prob"])
        n, K, M, C = tensor.probs.shape
        for i in range(n):
            sid = int(tensor.ids[i])
            for k in range(K):
                for m in range(M):
                    for c in range(C):
                        w.writerow([sid, k, m, c, repr(float(tensor.probs[i, k, m, c]))])
