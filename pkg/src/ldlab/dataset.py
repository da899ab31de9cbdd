"""Synthetic datasets with recorded ground truth, plus noise injection.

Datasets are immutable: every array is stored read-only and the injection
functions return new instances.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError, UnsupportedError
from .seeding import derive_rng, round_half_up

NOISE_KINDS = ("symmetric", "pair_flip", "salt_pepper")

# Region layout of the imbalanced regression example: (low, high, count).
EXAMPLE2_REGIONS: tuple[tuple[float, float, float], ...] = (
    (0.0, 1.5, 100.0),
    (1.5, 3.5, 50.0),
    (3.5, 5.0, 25.0),
)
REGRESSION_DOMAIN = (0.0, 5.0)


class Sample(NamedTuple):
    id: int
    features: np.ndarray
    label: float | int


class Stratum(NamedTuple):
    """Half-open interval ``[low, high)`` of the regression input; the last
    stratum of a layout is closed on the right."""

    low: float
    high: float
    weight: float


def _frozen(a: np.ndarray | None) -> np.ndarray | None:
    if a is None:
        return None
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GroundTruth:
    noisy_ids: frozenset[int] = frozenset()
    margins: np.ndarray | None = None
    uncertainties: np.ndarray | None = None
    class_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "noisy_ids", frozenset(int(i) for i in self.noisy_ids))
        object.__setattr__(self, "margins", _frozen(self.margins))
        object.__setattr__(self, "uncertainties", _frozen(self.uncertainties))
        object.__setattr__(self, "class_sizes", tuple(int(c) for c in self.class_sizes))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, observed labels and ground-truth annotations.

    ``labels`` are the observed (possibly corrupted) labels or regression
    targets; ``clean_labels`` keeps the uncorrupted values when known. For
    regression ``class_count`` is 0 and ``clean_labels`` holds the noiseless
    target.
    """

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    truth: GroundTruth = field(default_factory=GroundTruth)
    clean_labels: np.ndarray | None = None
    clean_features: np.ndarray | None = None
    strata: tuple[Stratum, ...] = ()

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats[:, None]
        n = len(ids)
        if n == 0:
            raise InvalidArgumentError("dataset must be non-empty")
        if feats.ndim != 2 or feats.shape[0] != n:
            raise InvalidArgumentError("features must be an (n, d) matrix matching ids")
        if len(np.unique(ids)) != n:
            raise InvalidArgumentError("sample ids must be unique")
        if not np.all(np.isfinite(feats)):
            raise InvalidArgumentError("features must be finite")
        if self.class_count < 0:
            raise InvalidArgumentError("class_count must be >= 0")
        if self.class_count > 0:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.min() < 0 or labels.max() >= self.class_count:
                raise InvalidArgumentError("class index out of range")
        else:
            labels = np.asarray(self.labels, dtype=float)
        if labels.shape != (n,):
            raise InvalidArgumentError("labels must have one entry per sample")
        truth = self.truth
        if not truth.noisy_ids <= set(ids.tolist()):
            raise InvalidArgumentError("noisy_ids must be a subset of dataset ids")
        for name in ("margins", "uncertainties"):
            arr = getattr(truth, name)
            if arr is not None and arr.shape != (n,):
                raise InvalidArgumentError(f"{name} must cover every sample")
        clean = self.clean_labels
        if clean is not None:
            clean = np.asarray(clean, dtype=labels.dtype)
            if clean.shape != (n,):
                raise InvalidArgumentError("clean_labels must have one entry per sample")
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "clean_labels", _frozen(clean))
        object.__setattr__(self, "clean_features", _frozen(self.clean_features))
        object.__setattr__(self, "strata", tuple(Stratum(*s) for s in self.strata))

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, pos: int) -> Sample:
        return Sample(int(self.ids[pos]), self.features[pos], self.labels[pos].item())

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.class_count > 0

    @property
    def noisy_mask(self) -> np.ndarray:
        return np.isin(self.ids, np.fromiter(self.truth.noisy_ids, dtype=np.int64))

    def positions(self, ids: Sequence[int] | np.ndarray) -> np.ndarray:
        """Row positions for the given sample ids."""
        order = np.argsort(self.ids)
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.ids, ids, sorter=order)
        pos = order[np.clip(pos, 0, len(order) - 1)]
        if not np.array_equal(self.ids[pos], ids):
            raise InvalidArgumentError("unknown sample id")
        return pos

    def subset(self, positions: np.ndarray) -> "Dataset":
        positions = np.asarray(positions)
        keep = set(self.ids[positions].tolist())
        t = self.truth
        truth = GroundTruth(
            noisy_ids=t.noisy_ids & keep,
            margins=None if t.margins is None else t.margins[positions],
            uncertainties=None if t.uncertainties is None else t.uncertainties[positions],
            class_sizes=t.class_sizes,
        )
        return Dataset(
            ids=self.ids[positions],
            features=self.features[positions],
            labels=self.labels[positions],
            class_count=self.class_count,
            truth=truth,
            clean_labels=None if self.clean_labels is None else self.clean_labels[positions],
            clean_features=None if self.clean_features is None else self.clean_features[positions],
            strata=self.strata,
        )

    def sorted_by_id(self) -> "Dataset":
        order = np.argsort(self.ids, kind="stable")
        if np.array_equal(order, np.arange(len(self))):
            return self
        return self.subset(order)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    rate: float
    snr: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidArgumentError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise InvalidArgumentError("noise rate must lie in [0, 1]")
        if self.kind == "salt_pepper":
            if self.snr is None or not 0.0 < self.snr <= 1.0:
                raise InvalidArgumentError("snr must lie in (0, 1]")


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def simplex_means(class_count: int, dimension: int, separation: float) -> np.ndarray:
    """Class means at pairwise distance ``separation`` (regular simplex)."""
    if dimension < class_count - 1:
        raise InvalidArgumentError(
            f"{class_count} equidistant means need dimension >= {class_count - 1}"
        )
    eye = np.eye(class_count)
    centered = eye - eye.mean(axis=0)
    # orthonormal basis of the (C-1)-dim span of the centered vertices
    u, _, _ = np.linalg.svd(centered.T, full_matrices=False)
    coords = centered @ u[:, : class_count - 1]
    coords *= separation / np.sqrt(2.0)
    means = np.zeros((class_count, dimension))
    means[:, : class_count - 1] = coords
    return means


def gaussian_posterior(x: np.ndarray, means: np.ndarray, priors: np.ndarray) -> np.ndarray:
    """p(y|x) for unit-covariance Gaussian classes."""
    sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    logits = -0.5 * sq + np.log(priors)[None, :]
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def entropy(p: np.ndarray, axis: int = -1) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=axis)


def bisector_margins(x: np.ndarray, labels: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Signed distance from each point to the nearest bisector between its own
    class mean and any other class mean (positive on its own side)."""
    own = means[labels]
    best = np.full(len(x), np.inf)
    for j in range(len(means)):
        other = means[j]
        diff = other[None, :] - own
        norm = np.linalg.norm(diff, axis=1)
        mask = labels != j
        d = (((x - other) ** 2).sum(1) - ((x - own) ** 2).sum(1)) / (2 * np.where(norm > 0, norm, 1))
        best = np.where(mask, np.minimum(best, d), best)
    return best


def make_blobs(
    class_count: int,
    per_class_counts: Sequence[int],
    dimension: int,
    separation: float,
    seed: int,
) -> Dataset:
    """Unit-covariance Gaussian clusters with analytic margins and posterior entropies."""
    counts = [int(c) for c in per_class_counts]
    if class_count < 2:
        raise InvalidArgumentError("class_count must be >= 2")
    if len(counts) != class_count or any(c <= 0 for c in counts):
        raise InvalidArgumentError("need one positive count per class")
    if dimension <= 0:
        raise InvalidArgumentError("dimension must be positive")
    if separation <= 0:
        raise InvalidArgumentError("separation must be positive")
    rng = derive_rng(seed, "blobs")
    means = simplex_means(class_count, dimension, separation)
    labels = np.repeat(np.arange(class_count), counts)
    x = means[labels] + rng.standard_normal((len(labels), dimension))
    order = rng.permutation(len(labels))
    x, labels = x[order], labels[order]
    priors = np.asarray(counts, dtype=float) / sum(counts)
    post = gaussian_posterior(x, means, priors)
    truth = GroundTruth(
        margins=bisector_margins(x, labels, means),
        uncertainties=entropy(post),
        class_sizes=tuple(counts),
    )
    return Dataset(
        ids=np.arange(len(labels)),
        features=x,
        labels=labels,
        class_count=class_count,
        truth=truth,
        clean_labels=labels,
    )


def regression_target(x: np.ndarray) -> np.ndarray:
    """``3 - sin(3x)/x`` with the removable singularity at 0 filled by its limit."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = 3.0 - np.sin(3.0 * x[nz]) / x[nz]
    return out


def stratum_counts(total: int, weights: Sequence[float]) -> list[int]:
    """Split ``total`` proportionally to ``weights`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise InvalidArgumentError("region weights must be non-negative with positive sum")
    raw = total * w / w.sum()
    base = np.floor(raw + 1e-9).astype(int)
    rest = total - base.sum()
    if rest > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:rest]] += 1
    return base.tolist()


def in_stratum(x: np.ndarray, low: float, high: float, closed: bool) -> np.ndarray:
    return (x >= low) & ((x <= high) if closed else (x < high))


def sample_regression_example(
    n: int,
    region_weights: Sequence[tuple[float, float, float]] | None = None,
    noise_sigma: float = 1.2,
    seed: int = 0,
) -> Dataset:
    """Draw ``n`` inputs on [0, 5] with noisy targets around ``3 - sin(3x)/x``.

    With ``region_weights`` (``(low, high, weight)`` triples) the inputs are
    stratified, counts proportional to the weights; the layout is kept on the
    returned dataset so ensemble training sets can be drawn the same way.
    """
    if n <= 0:
        raise InvalidArgumentError("n must be positive")
    if noise_sigma < 0:
        raise InvalidArgumentError("noise_sigma must be >= 0")
    rng = derive_rng(seed, "regression")
    if region_weights is None:
        x = rng.uniform(*REGRESSION_DOMAIN, size=n)
        strata: tuple[Stratum, ...] = ()
    else:
        strata = tuple(Stratum(float(lo), float(hi), float(w)) for lo, hi, w in region_weights)
        counts = stratum_counts(n, [s.weight for s in strata])
        x = np.concatenate([rng.uniform(s.low, s.high, size=c) for s, c in zip(strata, counts)])
    clean = regression_target(x)
    noisy = clean + rng.normal(0.0, noise_sigma, size=n) if noise_sigma > 0 else clean.copy()
    return Dataset(
        ids=np.arange(n),
        features=x[:, None],
        labels=noisy,
        class_count=0,
        clean_labels=clean,
        strata=strata,
    )


# ---------------------------------------------------------------------------
# Noise injection
# ---------------------------------------------------------------------------


def _pick(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    k = round_half_up(n * rate)
    return np.sort(rng.choice(n, size=k, replace=False))


def inject_label_noise(d: Dataset, spec: NoiseSpec) -> Dataset:
    """Relabel exactly ``round(N * rate)`` uniformly chosen samples."""
    if not d.is_classification:
        raise UnsupportedError("label noise needs a classification dataset")
    if spec.kind not in ("symmetric", "pair_flip"):
        raise InvalidArgumentError(f"{spec.kind!r} is not a label-noise kind")
    rng = derive_rng(spec.seed, "label-noise", spec.kind)
    chosen = _pick(len(d), spec.rate, rng)
    labels = np.array(d.labels)
    c = d.class_count
    if spec.kind == "pair_flip":
        labels[chosen] = (labels[chosen] + 1) % c
    else:
        shift = rng.integers(1, c, size=len(chosen))
        labels[chosen] = (labels[chosen] + shift) % c
    clean = d.labels if d.clean_labels is None else d.clean_labels
    truth = replace(d.truth, noisy_ids=d.truth.noisy_ids | set(d.ids[chosen].tolist()))
    return replace(d, labels=labels, clean_labels=clean, truth=truth)


def inject_feature_noise(d: Dataset, spec: NoiseSpec) -> Dataset:
    """Salt-and-pepper corruption of ``round(N * rate)`` samples.

    In each chosen sample a fraction ``1 - snr`` of coordinates (at least one)
    is pushed to the column minimum or maximum with equal probability.
    """
    if spec.kind != "salt_pepper":
        raise InvalidArgumentError("feature noise needs kind 'salt_pepper'")
    if spec.snr is None or not 0.0 < spec.snr < 1.0:
        raise InvalidArgumentError("snr must lie in (0, 1); snr = 1 corrupts nothing")
    rng = derive_rng(spec.seed, "feature-noise")
    chosen = _pick(len(d), spec.rate, rng)
    x = np.array(d.features)
    lo, hi = x.min(axis=0), x.max(axis=0)
    dim = d.dimension
    n_coords = min(dim, max(1, round_half_up((1.0 - spec.snr) * dim)))
    for i in chosen:
        coords = rng.choice(dim, size=n_coords, replace=False)
        salt = rng.random(n_coords) < 0.5
        target = np.where(salt, hi[coords], lo[coords])
        # keep the corruption visible when the value already sits on an extreme
        other = np.where(salt, lo[coords], hi[coords])
        x[i, coords] = np.where(x[i, coords] == target, other, target)
    clean_x = d.features if d.clean_features is None else d.clean_features
    truth = replace(d.truth, noisy_ids=d.truth.noisy_ids | set(d.ids[chosen].tolist()))
    return replace(d, features=x, clean_features=clean_x, truth=truth)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(d: Dataset, path: str | Path) -> None:
    path = Path(path)
    noisy = d.noisy_mask
    header = ["id", *(f"f{j}" for j in range(d.dimension)), "label", "clean_label",
              "noisy_flag", "margin", "uncertainty"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(d)):
            clean = None if d.clean_labels is None else d.clean_labels[i].item()
            m = None if d.truth.margins is None else d.truth.margins[i]
            u = None if d.truth.uncertainties is None else d.truth.uncertainties[i]
            w.writerow([int(d.ids[i]), *(_fmt(v) for v in d.features[i]),
                        _fmt(d.labels[i].item()), _fmt(clean), int(noisy[i]), _fmt(m), _fmt(u)])


def sidecar(d: Dataset) -> dict:
    return {
        "class_count": d.class_count,
        "class_sizes": list(d.truth.class_sizes),
        "dimension": d.dimension,
        "n": len(d),
        "noisy_ids": sorted(d.truth.noisy_ids),
        "strata": [list(s) for s in d.strata],
    }


def write_sidecar(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sidecar(d), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_csv(path: str | Path, class_count: int | None = None) -> Dataset:
    """Read a dataset written by :func:`write_csv`.

    ``class_count`` defaults to the sidecar JSON next to the file (same stem,
    ``.json``) or, failing that, ``max(label) + 1`` for integer labels.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidArgumentError(f"{path}: no rows")
    fcols = sorted((c for c in rows[0] if c.startswith("f") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    if not fcols or "id" not in rows[0] or "label" not in rows[0]:
        raise InvalidArgumentError(f"{path}: expected columns id, f0.., label")
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
    if class_count is None:
        class_count = meta.get("class_count")

    def col(name, conv=float):
        if name not in rows[0] or any(r[name] == "" for r in rows):
            return None
        return np.array([conv(r[name]) for r in rows])

    ids = col("id", int)
    x = np.array([[float(r[c]) for c in fcols] for r in rows])
    raw_labels = col("label")
    if class_count is None:
        integral = np.all(raw_labels == np.round(raw_labels))
        class_count = int(raw_labels.max()) + 1 if integral else 0
    flags = col("noisy_flag", int)
    noisy = set() if flags is None else set(ids[flags == 1].tolist())
    labels = raw_labels.astype(np.int64) if class_count else raw_labels
    clean = col("clean_label")
    if clean is not None and class_count:
        clean = clean.astype(np.int64)
    sizes = meta.get("class_sizes") or (np.bincount(labels, minlength=class_count).tolist() if class_count else [])
    truth = GroundTruth(noisy_ids=noisy, margins=col("margin"), uncertainties=col("uncertainty"),
                        class_sizes=sizes)
    return Dataset(ids=ids, features=x, labels=labels, class_count=int(class_count), truth=truth,
                   clean_labels=clean, strata=tuple(tuple(s) for s in meta.get("strata", [])))
