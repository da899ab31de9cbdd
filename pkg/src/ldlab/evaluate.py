"""Detection decisions and quality metrics for difficulty scores."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

from .dataset import Dataset
from .errors import InvalidArgumentError, UndefinedCorrelationError
from .geld import DifficultyReport
from .seeding import round_half_up

R_MULTIPLIERS = (0.8, 0.9, 1.0, 1.1, 1.2)


@dataclass(frozen=True)
class DetectionSpec:
    v: float = 0.4
    r: float = 1.0
    repeats: int = 1

    def __post_init__(self):
        if not 0 < self.v <= 1:
            raise InvalidArgumentError("v must lie in (0, 1]")
        if not self.r > 0:
            raise InvalidArgumentError("r must be positive")
        if self.repeats < 1:
            raise InvalidArgumentError("repeats must be >= 1")

    def k(self, n: int) -> int:
        k = round_half_up(n * self.v * self.r)
        if k > n:
            raise InvalidArgumentError(f"selection size {k} exceeds dataset size {n}")
        return k


@dataclass(frozen=True)
class DetectionResult:
    selected: frozenset[int]
    precision: float
    recall: float
    f1: float
    per_repeat_f1: tuple[float, ...] = field(default=())

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.per_repeat_f1)) if self.per_repeat_f1 else self.f1

    def as_dict(self) -> dict:
        return {
            "selected": sorted(self.selected),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_repeat_f1": list(self.per_repeat_f1),
            "mean_f1": self.mean_f1,
        }


def top_k_by_score(scores: np.ndarray, ids: np.ndarray, k: int) -> frozenset[int]:
    """The ``k`` ids with the largest scores; boundary ties go to smaller ids."""
    scores, ids = np.asarray(scores, dtype=float), np.asarray(ids)
    if not 0 <= k <= len(ids):
        raise InvalidArgumentError(f"cannot select {k} of {len(ids)} samples")
    order = np.lexsort((ids, -scores))
    return frozenset(int(i) for i in ids[order[:k]])


def top_k_select(report: DifficultyReport, spec: DetectionSpec, n: int | None = None,
                 method: str = "geld") -> frozenset[int]:
    """Select ``round(n * v * r)`` hardest samples of ``report``."""
    n = len(report) if n is None else n
    if n != len(report):
        raise InvalidArgumentError("report does not cover n samples")
    return top_k_by_score(report.scores(method), report.ids, spec.k(n))


def f1_against(selected: Iterable[int], truth: Iterable[int]) -> tuple[float, float, float]:
    sel, tru = set(selected), set(truth)
    if not sel and not tru:
        return 1.0, 1.0, 1.0
    tp = len(sel & tru)
    p = tp / len(sel) if sel else 0.0
    r = tp / len(tru) if tru else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def detect(report: DifficultyReport, truth: Iterable[int], spec: DetectionSpec, method: str = "geld") -> DetectionResult:
    sel = top_k_select(report, spec, method=method)
    p, r, f = f1_against(sel, truth)
    return DetectionResult(sel, p, r, f, (f,))


def average_repeats(results: Sequence[DetectionResult]) -> DetectionResult:
    """Combine per-repeat detections; the headline metrics are repeat means."""
    if not results:
        raise InvalidArgumentError("need at least one result")
    f1s = tuple(r.f1 for r in results)
    return DetectionResult(
        selected=results[-1].selected,
        precision=float(np.mean([r.precision for r in results])),
        recall=float(np.mean([r.recall for r in results])),
        f1=float(np.mean(f1s)),
        per_repeat_f1=f1s,
    )


def rank_correlation(scores: Sequence[float], reference: Sequence[float]) -> float:
    """Spearman correlation with average ranks for ties."""
    a, b = np.asarray(scores, dtype=float), np.asarray(reference, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise InvalidArgumentError("need two equally long score vectors of length >= 2")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelationError("rank correlation is undefined for a constant input")
    return float(spearmanr(a, b)[0])


def class_summary(report: DifficultyReport, d: Dataset, top_fraction: float) -> dict[int, int]:
    """Per class, how many of its samples fall in the hardest ``top_fraction``."""
    if not d.is_classification:
        raise InvalidArgumentError("class summaries need a classification dataset")
    if not 0 <= top_fraction <= 1:
        raise InvalidArgumentError("top_fraction must lie in [0, 1]")
    k = round_half_up(len(report) * top_fraction)
    chosen = top_k_by_score(report.err, report.ids, k)
    labels = d.labels[d.positions(report.ids)]
    picked = np.isin(report.ids, np.fromiter(chosen, dtype=np.int64, count=len(chosen)))
    return {c: int(np.sum(picked & (labels == c))) for c in range(d.class_count)}


def selected_fractions(summary: dict[int, int], d: Dataset) -> dict[int, float]:
    sizes = np.bincount(d.labels, minlength=d.class_count)
    return {c: summary[c] / sizes[c] if sizes[c] else 0.0 for c in summary}


# ---------------------------------------------------------------------------
# Tables and export
# ---------------------------------------------------------------------------

TABLE_COLUMNS = ("method", "v", "r", "k", "precision", "recall", "f1", "per_repeat_f1")


def comparison_table(
    reports: Sequence[DifficultyReport],
    truths: Sequence[Iterable[int]],
    vs: Sequence[float],
    rs: Sequence[float] = R_MULTIPLIERS,
    methods: Sequence[str] = ("geld", "loss", "ave_loss"),
) -> list[dict]:
    """F1 rows over method x v x r, each averaged across the paired
    (report, truth) repeats."""
    if len(reports) != len(truths) or not reports:
        raise InvalidArgumentError("need one truth set per report")
    truths = [frozenset(t) for t in truths]
    rows = []
    for method in methods:
        for v in vs:
            for r in rs:
                spec = DetectionSpec(v=v, r=r, repeats=len(reports))
                res = average_repeats([detect(rep, t, spec, method) for rep, t in zip(reports, truths)])
                rows.append({
                    "method": method, "v": v, "r": r, "k": spec.k(len(reports[0])),
                    "precision": res.precision, "recall": res.recall, "f1": res.f1,
                    "per_repeat_f1": list(res.per_repeat_f1),
                })
    return rows


def write_rows_csv(rows: Sequence[dict], path: str | Path, columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([";".join(repr(x) for x in row[c]) if isinstance(row[c], list) else
                        repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


def write_json(doc, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def markdown_f1_table(rows: Sequence[dict]) -> str:
    lines = ["| method | v | r | k | precision | recall | F1 |", "|---|---|---|---|---|---|---|"]
    for row in rows:
        lines.append(f"| {row['method']} | {row['v']:g} | {row['r']:g} | {row['k']} | "
                     f"{row['precision']:.4f} | {row['recall']:.4f} | {row['f1']:.4f} |")
    return "\n".join(lines) + "\n"
