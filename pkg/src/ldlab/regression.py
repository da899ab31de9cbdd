"""Bias-variance laboratory on polynomial ridge ensembles.

A sweep trains ``ensemble_size`` degree-``d`` ridge models for every penalty on
a grid, evaluates them on a held-out set against the noiseless target, and
records per-sample bias, variance and error together with the MDL-style
model complexity of each penalty. From a sweep we read off optimal
complexities for the whole set, a region, or a single sample (the sample's
learning difficulty) and the easy/medium/hard partitions built on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .dataset import (
    EXAMPLE2_REGIONS,
    REGRESSION_DOMAIN,
    Dataset,
    in_stratum,
    sample_regression_example,
    stratum_counts,
)
from .errors import InvalidArgumentError, LdlabError
from .seeding import derive_rng, derive_seed

DEFAULT_LAMBDA_GRID: tuple[float, ...] = tuple(float(np.exp(k)) for k in range(-7, 2))

# relative tolerance under which two grid errors count as tied
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class RidgeConfig:
    degree: int = 10
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    ensemble_size: int = 40
    train_size: int = 200

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        object.__setattr__(self, "lambda_grid", grid)
        if self.degree < 1:
            raise InvalidArgumentError("degree must be >= 1")
        if not grid:
            raise InvalidArgumentError("lambda grid is empty")
        if any(v <= 0 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidArgumentError("lambda grid must be positive and strictly increasing")
        if self.ensemble_size < 2:
            raise InvalidArgumentError("ensemble_size must be >= 2")
        if self.train_size < 1:
            raise InvalidArgumentError("train_size must be >= 1")


@dataclass(frozen=True)
class PolynomialModel:
    """``intercept + sum_i weights[i-1] * x**i`` for ``i = 1..degree``."""

    weights: np.ndarray
    intercept: float

    @property
    def degree(self) -> int:
        return len(self.weights)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        return _monomials(x, self.degree) @ self.weights + self.intercept


def _monomials(x: np.ndarray, degree: int) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return np.vander(x, degree + 1, increasing=True)[:, 1:]


def _inputs(d: Dataset) -> np.ndarray:
    if d.is_classification or d.dimension != 1:
        raise InvalidArgumentError("expected a one-dimensional regression dataset")
    return d.features[:, 0]


def ridge_solve(x: np.ndarray, y: np.ndarray, lam: float, degree: int) -> PolynomialModel:
    """Closed-form ridge on raw monomials with an unpenalized intercept.

    Minimizes ``||y - b - P w||^2 + lam ||w||^2``. Centering removes ``b``; the
    penalized system is solved as an augmented least-squares problem, which
    avoids squaring the (very large) condition number of the monomial basis.
    """
    if lam <= 0:
        raise InvalidArgumentError("lambda must be positive")
    p = _monomials(x, degree)
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError(f"x**{degree} overflows for these inputs")
    mu = p.mean(axis=0)
    ybar = float(y.mean())
    a = np.vstack([p - mu, np.sqrt(lam) * np.eye(degree)])
    rhs = np.concatenate([y - ybar, np.zeros(degree)])
    w, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    if not np.all(np.isfinite(w)):
        raise LdlabError("ridge solve produced non-finite weights")
    return PolynomialModel(weights=w, intercept=ybar - float(w @ mu))


def fit_ridge(train: Dataset, lam: float, degree: int) -> PolynomialModel:
    """Fit a degree-``degree`` polynomial ridge model to the observed targets."""
    return ridge_solve(_inputs(train), np.asarray(train.labels, dtype=float), lam, degree)


def model_complexity(m: PolynomialModel) -> float:
    """``sum_i ((i/d) * w_i)^2`` over the non-intercept coefficients."""
    d = m.degree
    scale = np.arange(1, d + 1) / d
    return float(np.sum((scale * m.weights) ** 2))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaSweep:
    """Ensemble statistics for every penalty of the grid.

    Arrays indexed ``[lambda]`` or ``[lambda, sample]``; ``predictions`` is
    ``[lambda, member, sample]``.
    """

    lambdas: np.ndarray
    complexity: np.ndarray
    eval_ids: np.ndarray
    eval_x: np.ndarray
    clean_targets: np.ndarray
    predictions: np.ndarray
    bias: np.ndarray
    variance: np.ndarray
    error: np.ndarray
    member_complexity: np.ndarray = field(repr=False)

    @property
    def mean_bias(self) -> np.ndarray:
        return self.bias.mean(axis=1)

    @property
    def mean_variance(self) -> np.ndarray:
        return self.variance.mean(axis=1)

    @property
    def mean_error(self) -> np.ndarray:
        return self.error.mean(axis=1)

    @property
    def n_samples(self) -> int:
        return len(self.eval_ids)

    def position(self, sample_id: int) -> int:
        hits = np.flatnonzero(self.eval_ids == sample_id)
        if len(hits) == 0:
            raise InvalidArgumentError(f"unknown sample id {sample_id}")
        return int(hits[0])

    def region_mask(self, low: float, high: float, closed: bool | None = None) -> np.ndarray:
        """Eval samples with ``low <= x < high`` (``<= high`` when ``closed``;
        by default the interval is closed when it reaches the domain end)."""
        if closed is None:
            closed = high >= REGRESSION_DOMAIN[1]
        return in_stratum(self.eval_x, low, high, closed)


def _draw_training_set(pool: Dataset, size: int, rng: np.random.Generator) -> np.ndarray:
    x = pool.features[:, 0]
    if not pool.strata:
        if size > len(pool):
            raise InvalidArgumentError("train_size exceeds pool size")
        return rng.choice(len(pool), size=size, replace=False)
    counts = stratum_counts(size, [s.weight for s in pool.strata])
    parts = []
    last = len(pool.strata) - 1
    for k, (s, c) in enumerate(zip(pool.strata, counts)):
        members = np.flatnonzero(in_stratum(x, s.low, s.high, k == last))
        if c > len(members):
            raise InvalidArgumentError(f"stratum [{s.low}, {s.high}) has only {len(members)} pool samples")
        parts.append(rng.choice(members, size=c, replace=False))
    return np.concatenate(parts)


def run_sweep(config: RidgeConfig, pool: Dataset, eval_set: Dataset, seed: int) -> LambdaSweep:
    """Train the ensembles and decompose their error on ``eval_set``.

    Member ``t`` uses the same resampled training set under every penalty
    (seeded by ``(seed, t)``), so curves compare penalties on paired data.
    Models are trained on the noisy targets and scored against the clean ones.
    """
    if eval_set.clean_labels is None:
        raise InvalidArgumentError("eval_set needs clean targets")
    px = _inputs(pool)
    py = np.asarray(pool.labels, dtype=float)
    ex = _inputs(eval_set)
    clean = np.asarray(eval_set.clean_labels, dtype=float)
    lambdas = np.asarray(config.lambda_grid)
    n_lam, n_mem = len(lambdas), config.ensemble_size
    preds = np.empty((n_lam, n_mem, len(ex)))
    comp = np.empty((n_lam, n_mem))
    design = _monomials(ex, config.degree)
    for t in range(n_mem):
        rows = _draw_training_set(pool, config.train_size, derive_rng(seed, "train-set", t))
        for li, lam in enumerate(lambdas):
            m = ridge_solve(px[rows], py[rows], float(lam), config.degree)
            preds[li, t] = design @ m.weights + m.intercept
            comp[li, t] = model_complexity(m)
    mean_pred = preds.mean(axis=1)
    bias = (clean[None, :] - mean_pred) ** 2
    var = ((preds - mean_pred[:, None, :]) ** 2).mean(axis=1)
    return LambdaSweep(
        lambdas=lambdas,
        complexity=comp.mean(axis=1),
        eval_ids=np.asarray(eval_set.ids),
        eval_x=ex.copy(),
        clean_targets=clean.copy(),
        predictions=preds,
        bias=bias,
        variance=var,
        error=bias + var,
        member_complexity=comp,
    )


# ---------------------------------------------------------------------------
# Optima and verdicts
# ---------------------------------------------------------------------------


class Optimum(NamedTuple):
    lambda_star: float
    c_star: float
    err_star: float
    index: int


def grid_argmin(errors: np.ndarray, complexity: np.ndarray) -> int:
    """Index of the minimal error; near-ties go to the smaller complexity."""
    errors = np.asarray(errors, dtype=float)
    best = errors.min()
    tied = np.flatnonzero(errors <= best + TIE_RTOL * abs(best))
    return int(tied[np.argmin(complexity[tied])])


def optimum_of(sweep: LambdaSweep, curve: np.ndarray) -> Optimum:
    i = grid_argmin(curve, sweep.complexity)
    return Optimum(float(sweep.lambdas[i]), float(sweep.complexity[i]), float(curve[i]), i)


def optimal_complexity(
    sweep: LambdaSweep,
    sample_id: int | None = None,
    region: tuple[float, float] | None = None,
) -> Optimum:
    """Grid optimum of the mean error over the whole eval set, one sample, or a region."""
    if sample_id is not None and region is not None:
        raise InvalidArgumentError("give either sample_id or region, not both")
    if sample_id is not None:
        curve = sweep.error[:, sweep.position(sample_id)]
    elif region is not None:
        mask = sweep.region_mask(*region)
        if not mask.any():
            raise InvalidArgumentError(f"region {region} holds no eval samples")
        curve = sweep.error[:, mask].mean(axis=1)
    else:
        curve = sweep.mean_error
    return optimum_of(sweep, curve)


def learning_difficulty(sweep: LambdaSweep) -> np.ndarray:
    """Per-sample optimal complexity ``c*_x`` for every eval sample."""
    idx = [grid_argmin(sweep.error[:, j], sweep.complexity) for j in range(sweep.n_samples)]
    return sweep.complexity[np.asarray(idx)]


def difficulty_coefficients(sweep: LambdaSweep) -> np.ndarray:
    """``c*_x / c*`` for every eval sample."""
    return learning_difficulty(sweep) / optimal_complexity(sweep).c_star


@dataclass(frozen=True)
class Thresholds:
    """Partition thresholds.

    ``mode="dichotomy"`` uses ``tau`` alone; ``mode="trichotomy"`` uses
    ``tau_e < 1 < tau_h`` and, when set, ``tau_q > tau_h`` for quite-hard samples.
    """

    mode: str = "trichotomy"
    tau: float = 1.0
    tau_e: float = 0.8
    tau_h: float = 1.25
    tau_q: float | None = 2.0

    def __post_init__(self):
        if self.mode == "dichotomy":
            if self.tau <= 0:
                raise InvalidArgumentError("tau must be positive")
        elif self.mode == "trichotomy":
            if not 0 < self.tau_e < 1 < self.tau_h:
                raise InvalidArgumentError("thresholds must satisfy 0 < tau_e < 1 < tau_h")
            if self.tau_q is not None and self.tau_q <= self.tau_h:
                raise InvalidArgumentError("tau_q must exceed tau_h")
        else:
            raise InvalidArgumentError(f"unknown partition mode {self.mode!r}")

    def partition(self, ldc: float) -> str:
        if self.mode == "dichotomy":
            return "easy" if ldc <= self.tau else "hard"
        if ldc <= self.tau_e:
            return "easy"
        if ldc <= self.tau_h:
            return "medium"
        if self.tau_q is not None and ldc > self.tau_q:
            return "quite_hard"
        return "hard"

    def as_dict(self) -> dict:
        if self.mode == "dichotomy":
            return {"mode": self.mode, "tau": self.tau}
        return {"mode": self.mode, "tau_e": self.tau_e, "tau_h": self.tau_h, "tau_q": self.tau_q}


@dataclass(frozen=True)
class DifficultyVerdict:
    sample_id: int | None
    ld: float
    ldc: float
    partition: str
    thresholds: Thresholds

    def as_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "ld": self.ld,
            "ldc": self.ldc,
            "partition": self.partition,
            "thresholds": self.thresholds.as_dict(),
        }


def difficulty_verdict(
    sweep: LambdaSweep,
    sample_id: int | None,
    thresholds: Thresholds = Thresholds(),
) -> DifficultyVerdict:
    """Learning difficulty, its coefficient and partition for one sample.

    ``sample_id=None`` scores the whole eval set as a single "sample", which
    has coefficient 1 by construction.
    """
    whole = optimal_complexity(sweep)
    own = whole if sample_id is None else optimal_complexity(sweep, sample_id=sample_id)
    ldc = own.c_star / whole.c_star
    return DifficultyVerdict(sample_id, own.c_star, ldc, thresholds.partition(ldc), thresholds)


def all_verdicts(sweep: LambdaSweep, thresholds: Thresholds = Thresholds()) -> list[DifficultyVerdict]:
    ld = learning_difficulty(sweep)
    c_star = optimal_complexity(sweep).c_star
    return [
        DifficultyVerdict(int(i), float(v), float(v / c_star), thresholds.partition(v / c_star), thresholds)
        for i, v in zip(sweep.eval_ids, ld)
    ]


def monotone_violations(values: Sequence[float], increasing: bool) -> list[float]:
    """Sizes of steps that go against the expected direction."""
    v = np.asarray(values, dtype=float)
    steps = np.diff(v) if increasing else -np.diff(v)
    return [float(-s) for s in steps if s < 0]


def is_u_shaped(curve: Sequence[float]) -> bool:
    """Interior minimum, with the curve rising on both sides of it."""
    c = np.asarray(curve, dtype=float)
    i = int(np.argmin(c))
    return 0 < i < len(c) - 1 and c[0] > c[i] and c[-1] > c[i]


EXAMPLES = ("uniform", "stratified")
POOL_SIZE = 4000


def example_sweep(
    example: str = "stratified",
    seed: int = 0,
    noise_sigma: float = 1.2,
    config: RidgeConfig | None = None,
    pool_size: int = POOL_SIZE,
) -> LambdaSweep:
    """Run one of the two reference labs.

    ``"uniform"``: inputs uniform on [0, 5], 200-sample training sets.
    ``"stratified"``: 100/50/25 samples from [0,1.5)/[1.5,3.5)/[3.5,5].
    The eval set is a fresh draw built the same way as a training set.
    """
    if example not in EXAMPLES:
        raise InvalidArgumentError(f"unknown example {example!r}")
    regions = EXAMPLE2_REGIONS if example == "stratified" else None
    if config is None:
        config = RidgeConfig(train_size=175 if regions else 200)
    pool = sample_regression_example(pool_size, regions, noise_sigma, derive_seed(seed, example, "pool"))
    eval_set = sample_regression_example(config.train_size, regions, noise_sigma, derive_seed(seed, example, "eval"))
    return run_sweep(config, pool, eval_set, derive_seed(seed, example, "ensemble"))
