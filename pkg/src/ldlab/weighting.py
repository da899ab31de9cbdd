"""Difficulty-based sample weighting and the optimal-complexity shifts it causes.

The weighted generalization error is discretized as the weighted mean of the
per-sample error curves of a :class:`~ldlab.regression.LambdaSweep`. Each
proposition check builds a weight scheme satisfying the proposition's
hypotheses, finds the weighted grid optimum and compares its complexity with
the baseline optimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisError, InvalidArgumentError
from .regression import (
    LambdaSweep,
    Optimum,
    Thresholds,
    difficulty_coefficients,
    learning_difficulty,
    optimal_complexity,
    optimum_of,
)

SCHEME_KINDS = (
    "constant",
    "region_constant",
    "spl_threshold",
    "power_difficulty",
    "adaboost_update",
    "soft_margin_update",
)

PROPOSITIONS = ("P2", "P3", "P4", "P5", "P6", "C1", "C2", "C3", "C4")

# direction of c'* relative to c* predicted by each check
EXPECTED = {
    "P2": "equal",
    "P3": "larger",
    "C1": "larger",
    "P5": "larger",
    "C2": "larger",
    "P4": "smaller",
    "P6": "smaller",
    "C3": "smaller",
    "C4": "non-decreasing",
}

GAMMA_LADDER = (0.0, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class WeightScheme:
    """A named weighting rule.

    ``members`` (boolean mask over eval samples) restricts ``region_constant``;
    ``previous`` holds the prior-round weights of the boosting updates
    (ones when omitted).
    """

    kind: str
    omega: float = 1.0
    members: np.ndarray | None = field(default=None, repr=False)
    spl_threshold: float = 0.0
    gamma: float = 1.0
    alpha: float = 1.0
    soft_margin_c: float = 0.0
    previous: np.ndarray | None = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise InvalidArgumentError(f"unknown weight scheme {self.kind!r}")
        if self.kind in ("constant", "region_constant") and self.omega <= 0:
            raise InvalidArgumentError("omega must be positive")
        if self.kind in ("adaboost_update", "soft_margin_update") and self.alpha <= 0:
            raise InvalidArgumentError("alpha must be positive")
        if self.soft_margin_c < 0:
            raise InvalidArgumentError("soft-margin C must be >= 0")

    def describe(self) -> str:
        if self.label:
            return self.label
        k = self.kind
        if k == "constant":
            return f"constant omega={self.omega:g}"
        if k == "region_constant":
            n = 0 if self.members is None else int(np.sum(self.members))
            return f"omega={self.omega:g} on {n} samples, 1 elsewhere"
        if k == "spl_threshold":
            return f"1[LD <= {self.spl_threshold:.4g}]"
        if k == "power_difficulty":
            return f"(LD/max LD)^{self.gamma:g}"
        if k == "adaboost_update":
            return f"adaboost alpha={self.alpha:g}"
        return f"soft-margin alpha={self.alpha:g} C={self.soft_margin_c:g}"


def residual_agreement(sweep: LambdaSweep) -> np.ndarray:
    """``+1`` for samples whose residual at the baseline optimum is at most the
    median residual, ``-1`` otherwise (regression stand-in for ``y f(x)``)."""
    i = optimal_complexity(sweep).index
    resid = np.abs(sweep.clean_targets - sweep.predictions[i].mean(axis=0))
    return 1.0 - 2.0 * (resid > np.median(resid))


def boosting_weights(
    agreement: np.ndarray,
    alpha: float,
    previous: np.ndarray | None = None,
    soft_margin_c: float = 0.0,
) -> np.ndarray:
    """One boosting reweighting round, normalized to mean 1.

    ``soft_margin_c = 0`` gives the plain exponential update; a positive value
    damps samples whose running weight is already high.
    """
    agreement = np.asarray(agreement, dtype=float)
    prev = np.ones_like(agreement) if previous is None else np.asarray(previous, dtype=float)
    exponent = -alpha * agreement
    if soft_margin_c:
        edge = abs(float(np.mean(agreement)))
        exponent = exponent - soft_margin_c * prev * edge
    w = prev * np.exp(exponent)
    return w / w.mean()


def weights_for(scheme: WeightScheme, sweep: LambdaSweep, difficulty: np.ndarray | None = None) -> np.ndarray:
    """Weights for every eval sample of ``sweep``.

    ``difficulty`` defaults to the per-sample learning difficulty of the sweep.
    """
    n = sweep.n_samples
    if difficulty is None:
        difficulty = learning_difficulty(sweep)
    difficulty = np.asarray(difficulty, dtype=float)
    if difficulty.shape != (n,):
        raise InvalidArgumentError("difficulty must cover every eval sample")
    k = scheme.kind
    if k == "constant":
        return np.full(n, float(scheme.omega))
    if k == "region_constant":
        if scheme.members is None or len(scheme.members) != n:
            raise InvalidArgumentError("region_constant needs a member mask over eval samples")
        return np.where(scheme.members, float(scheme.omega), 1.0)
    if k == "spl_threshold":
        return (difficulty <= scheme.spl_threshold).astype(float)
    if k == "power_difficulty":
        top = difficulty.max()
        if top <= 0:
            raise InvalidArgumentError("power weighting needs max difficulty > 0")
        return (difficulty / top) ** scheme.gamma
    agree = residual_agreement(sweep)
    c = scheme.soft_margin_c if k == "soft_margin_update" else 0.0
    return boosting_weights(agree, scheme.alpha, scheme.previous, c)


def weighted_optimal_complexity(sweep: LambdaSweep, weights: np.ndarray) -> Optimum:
    """Grid optimum of ``sum_i w_i err_i(lambda) / sum_i w_i``."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (sweep.n_samples,):
        raise InvalidArgumentError("need one weight per eval sample")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise InvalidArgumentError("weights are all zero")
    curve = sweep.error @ (w / total)
    return optimum_of(sweep, curve)


# ---------------------------------------------------------------------------
# Proposition checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropositionReport:
    proposition: str
    scheme: str
    expected: str
    baseline: Optimum
    weighted: Optimum
    verdict: str
    ladder: tuple[tuple[float, Optimum], ...] = ()
    excluded: int = 0

    def as_dict(self) -> dict:
        def opt(o: Optimum) -> dict:
            return {"lambda_star": o.lambda_star, "c_star": o.c_star, "err_star": o.err_star}

        out = {
            "proposition": self.proposition,
            "scheme": self.scheme,
            "expected": self.expected,
            "baseline": opt(self.baseline),
            "weighted": opt(self.weighted),
            "verdict": self.verdict,
            "excluded_samples": self.excluded,
        }
        if self.ladder:
            out["ladder"] = [{"gamma": g, **opt(o)} for g, o in self.ladder]
        return out


def _verdict(expected: str, base: Optimum, new: Optimum) -> str:
    if expected == "equal":
        return "satisfied" if new.lambda_star == base.lambda_star else "violated"
    if new.c_star == base.c_star:
        return "tie"
    ok = new.c_star > base.c_star if expected == "larger" else new.c_star < base.c_star
    return "satisfied" if ok else "violated"


def _region_mask(sweep: LambdaSweep, region: tuple[float, float] | None) -> np.ndarray:
    if region is None:
        return np.ones(sweep.n_samples, dtype=bool)
    return sweep.region_mask(*region)


def check_proposition(
    pid: str,
    sweep: LambdaSweep,
    *,
    omega: float | None = None,
    region: tuple[float, float] | None = None,
    gamma: float = 1.0,
    gammas: tuple[float, ...] = GAMMA_LADDER,
    tier_weights: tuple[float, float, float] | None = None,
    thresholds: Thresholds = Thresholds(),
) -> PropositionReport:
    """Check the complexity shift one proposition predicts on ``sweep``.

    Schemes used:

    * P2: constant weight ``omega`` (default 7).
    * P3 / P4: weight ``omega`` (default 3) on the samples of ``region`` whose
      coefficient is above / below one; other samples weigh 1. Region samples
      on the wrong side of one are excluded and counted.
    * C1: self-paced admission. Baseline admits samples with ``LD <= c*``;
      the new scheme also admits every harder sample (weights 0 -> 1).
    * P5 / P6: ``LD / max LD`` and ``(max LD - LD) / range``.
    * C2 / C3: tier weights over the trichotomy (default 1, 2, 3 and 3, 2, 1).
    * C4: power weights over the ``gammas`` ladder; complexities must not drop.
    """
    if pid not in PROPOSITIONS:
        raise InvalidArgumentError(f"unknown proposition {pid!r}")
    expected = EXPECTED[pid]
    base = optimal_complexity(sweep)
    ld = learning_difficulty(sweep)
    ldc = difficulty_coefficients(sweep)
    excluded = 0

    if pid == "P2":
        scheme = WeightScheme("constant", omega=7.0 if omega is None else omega)
    elif pid in ("P3", "P4"):
        in_region = _region_mask(sweep, region)
        side = ldc > 1 if pid == "P3" else ldc < 1
        members = in_region & side
        excluded = int(np.sum(in_region & ~side))
        if not members.any():
            cond = "LDC > 1" if pid == "P3" else "LDC < 1"
            raise HypothesisError(f"{pid}: no sample in region {region} has {cond}")
        w_omega = 3.0 if omega is None else omega
        if w_omega <= 1:
            raise HypothesisError(f"{pid}: omega must exceed 1")
        scheme = WeightScheme("region_constant", omega=w_omega, members=members,
                              label=f"omega={w_omega:g} on {int(members.sum())} samples "
                                    f"with {'LDC>1' if pid == 'P3' else 'LDC<1'}")
    elif pid == "C1":
        harder = ld > base.c_star
        if not harder.any():
            raise HypothesisError("C1: no sample has LDC > 1")
        if not (~harder).any():
            raise HypothesisError("C1: every sample has LDC > 1; the baseline admits nothing")
        start = WeightScheme("spl_threshold", spl_threshold=base.c_star)
        base = weighted_optimal_complexity(sweep, weights_for(start, sweep, ld))
        scheme = WeightScheme("spl_threshold", spl_threshold=float(ld.max()),
                              label="SPL admission grows from LD <= c* to all samples")
    elif pid in ("P5", "P6"):
        lo, hi = ld.min(), ld.max()
        if hi <= lo:
            raise HypothesisError(f"{pid}: learning difficulty is constant; weights cannot vary")
        if pid == "P5":
            scheme = WeightScheme("power_difficulty", gamma=gamma)
        else:
            new = weighted_optimal_complexity(sweep, (hi - ld) / (hi - lo))
            return PropositionReport(pid, "(max LD - LD) / range", expected, base, new,
                                     _verdict(expected, base, new))
    elif pid in ("C2", "C3"):
        parts = np.array([thresholds.partition(v) for v in ldc])
        tier = np.select([parts == "easy", parts == "medium"], [0, 1], 2)
        if not ((tier == 0).any() and (tier == 2).any()):
            raise HypothesisError(f"{pid}: trichotomy needs both easy and hard samples")
        tw = tier_weights or ((1.0, 2.0, 3.0) if pid == "C2" else (3.0, 2.0, 1.0))
        if pid == "C2" and not (tw[0] <= tw[1] <= tw[2] and tw[0] < tw[2]):
            raise HypothesisError("C2: tier weights must be non-decreasing and not constant")
        if pid == "C3" and not (tw[0] >= tw[1] >= tw[2] and tw[0] > tw[2]):
            raise HypothesisError("C3: tier weights must be non-increasing and not constant")
        w = np.asarray(tw, dtype=float)[tier]
        new = weighted_optimal_complexity(sweep, w)
        return PropositionReport(pid, f"tier weights easy/medium/hard = {tw}", expected, base, new,
                                 _verdict(expected, base, new))
    else:  # C4
        if ld.max() <= 0:
            raise HypothesisError("C4: max LD must be positive")
        ladder = tuple(
            (float(g), weighted_optimal_complexity(
                sweep, weights_for(WeightScheme("power_difficulty", gamma=g), sweep, ld)))
            for g in sorted(gammas)
        )
        cs = [o.c_star for _, o in ladder]
        if any(b < a for a, b in zip(cs, cs[1:])):
            verdict = "violated"
        elif cs[-1] == cs[0]:
            verdict = "tie"
        else:
            verdict = "satisfied"
        return PropositionReport(pid, f"(LD/max LD)^gamma, gamma in {tuple(g for g, _ in ladder)}",
                                 expected, ladder[0][1], ladder[-1][1], verdict, ladder)

    new = weighted_optimal_complexity(sweep, weights_for(scheme, sweep, ld))
    return PropositionReport(pid, scheme.describe(), expected, base, new,
                             _verdict(expected, base, new), excluded=excluded)


DEFAULT_SUITE: tuple[tuple[str, dict], ...] = (
    ("P2", {}),
    ("P3", {"region": (3.5, 5.0)}),
    ("C1", {}),
    ("P5", {}),
    ("C2", {}),
    ("P4", {"region": (0.0, 1.5)}),
    ("P6", {}),
    ("C3", {}),
    ("C4", {}),
)


def run_suite(sweep: LambdaSweep, checks=DEFAULT_SUITE) -> list[PropositionReport | HypothesisError]:
    """Run every check; unsatisfiable hypotheses are returned in place of a report."""
    out: list[PropositionReport | HypothesisError] = []
    for pid, kwargs in checks:
        try:
            out.append(check_proposition(pid, sweep, **kwargs))
        except HypothesisError as exc:
            out.append(exc)
    return out


def markdown_table(results) -> str:
    lines = ["| proposition | scheme | c* | c'* | verdict |", "|---|---|---|---|---|"]
    for r in results:
        if isinstance(r, HypothesisError):
            pid = r.hypothesis.split(":", 1)[0]
            lines.append(f"| {pid} | {r.hypothesis} | - | - | unsatisfiable |")
        else:
            lines.append(f"| {r.proposition} | {r.scheme} | {r.baseline.c_star:.6g} | "
                         f"{r.weighted.c_star:.6g} | {r.verdict} |")
    return "\n".join(lines) + "\n"
