"""Discrimination metrics, bootstrap uncertainty, and permutation tests.

AUROC is the Mann-Whitney statistic with half credit for ties, computed
from average ranks (exactly equal to pairwise concordance counting).
Average precision is the step-wise, non-interpolated estimator; tied
scores keep their original row order (stable sort).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, PreconditionError
from .util import rng_for

_BOOTSTRAP_TAG = 404
_PERMUTATION_TAG = 505


@dataclass(frozen=True)
class MetricReport:
    auroc: float
    average_precision: float
    balanced_accuracy: float
    sensitivity: float
    specificity: float
    threshold: float
    n: int
    n_pos: int

    def as_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "average_precision": self.average_precision,
            "balanced_accuracy": self.balanced_accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "threshold": self.threshold,
            "n": self.n,
            "n_pos": self.n_pos,
        }


@dataclass(frozen=True)
class UncertaintyBand:
    point: float
    lower: float
    upper: float
    level: float
    iterations: int
    seed: int
    redraws: int = 0

    def as_dict(self) -> dict:
        return {"point": self.point, "lower": self.lower, "upper": self.upper,
                "level": self.level, "iterations": self.iterations,
                "seed": self.seed, "redraws": self.redraws}


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise PreconditionError("scores and labels must be 1-D arrays of equal length")
    if not np.all(np.isfinite(scores)):
        raise PreconditionError("scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise PreconditionError("labels must be 0/1")
    return scores, labels.astype(np.int8)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    starts = np.r_[True, s[1:] != s[:-1]]
    group = np.cumsum(starts) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts)
    avg = (2.0 * ends - counts + 1.0) / 2.0  # mean of ranks end-count+1 .. end
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = avg[group]
    return ranks


def auroc(scores, labels) -> float:
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise PreconditionError("auroc needs both classes present")
    ranks = _average_ranks(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise PreconditionError("average_precision needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")  # stable: ties keep original order
    y = labels[order]
    cum_pos = np.cumsum(y)
    precision_at = cum_pos / np.arange(1, y.size + 1)
    return float(precision_at[y == 1].sum() / n_pos)


def thresholded_report(scores, labels, threshold: float = 0.5) -> MetricReport:
    """Full report at a decision threshold: predicted positive iff score >= threshold."""
    if not (0.0 <= threshold <= 1.0):
        raise PreconditionError(f"threshold must lie in [0, 1], got {threshold}")
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise PreconditionError("thresholded_report needs both classes present")
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    tn = int(np.sum(~pred & (labels == 0)))
    sensitivity = tp / n_pos
    specificity = tn / n_neg
    return MetricReport(
        auroc=auroc(scores, labels),
        average_precision=average_precision(scores, labels),
        balanced_accuracy=(sensitivity + specificity) / 2.0,
        sensitivity=sensitivity,
        specificity=specificity,
        threshold=float(threshold),
        n=int(labels.size),
        n_pos=n_pos,
    )


def resample_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


def bootstrap_ci(metric, scores, labels, iterations: int = 50, level: float = 0.90,
                 seed: int = 0) -> UncertaintyBand:
    """Percentile interval of `metric` over paired resamples with replacement.

    Resamples on which the metric is undefined (single class drawn) are
    redrawn from the same per-iteration stream; the redraw count is
    reported. If failed draws outnumber successful ones the input is
    rejected as too degenerate to bootstrap.
    """
    if iterations < 2:
        raise PreconditionError(f"iterations must be >= 2, got {iterations}")
    if not (0.0 < level < 1.0):
        raise PreconditionError(f"level must lie in (0, 1), got {level}")
    scores, labels = _check_binary(scores, labels)
    point = float(metric(scores, labels))
    n = labels.size
    values = []
    redraws = 0
    for it in range(iterations):
        rng = rng_for(seed, _BOOTSTRAP_TAG, it)
        for _ in range(1000):
            idx = resample_indices(rng, n)
            picked = labels[idx]
            if picked.min() == picked.max():
                redraws += 1
                continue
            values.append(float(metric(scores[idx], picked)))
            break
        else:
            raise NumericError("bootstrap resampling failed: metric undefined on every draw")
    if redraws > iterations:
        raise NumericError(
            f"metric undefined on most resamples ({redraws} redraws for {iterations} iterations)"
        )
    alpha = (1.0 - level) / 2.0
    return UncertaintyBand(
        point=point,
        lower=float(np.quantile(values, alpha)),
        upper=float(np.quantile(values, 1.0 - alpha)),
        level=level,
        iterations=iterations,
        seed=seed,
        redraws=redraws,
    )


def permutation_significance(scores, labels, n_permutations: int = 1000, seed: int = 0) -> float:
    """Add-one permutation p-value for AUROC against label shuffling."""
    if n_permutations < 1:
        raise PreconditionError(f"n_permutations must be >= 1, got {n_permutations}")
    scores, labels = _check_binary(scores, labels)
    observed = auroc(scores, labels)
    hits = 0
    for it in range(n_permutations):
        permuted = rng_for(seed, _PERMUTATION_TAG, it).permutation(labels)
        if auroc(scores, permuted) >= observed:
            hits += 1
    return (1 + hits) / (n_permutations + 1)


@dataclass(frozen=True)
class SubgroupEntry:
    group: str
    n: int
    n_pos: int
    report: MetricReport | None  # None when single-class, AUROC undefined
    small: bool

    def as_dict(self) -> dict:
        return {
            "group": self.group,
            "n": self.n,
            "n_pos": self.n_pos,
            "small": self.small,
            "metrics": self.report.as_dict() if self.report is not None else "undefined",
        }


def subpopulation_report(scores, labels, groups, threshold: float = 0.5,
                         min_group_size: int = 30) -> list:
    """Per-group metric reports plus an overall row.

    Groups with a single outcome class are marked undefined rather than
    failing the whole report; groups below `min_group_size` are flagged
    but kept.
    """
    scores, labels = _check_binary(scores, labels)
    groups = list(groups)
    if len(groups) != labels.size:
        raise PreconditionError("groups must align with scores/labels")
    entries = []
    for name in sorted(set(groups)):
        mask = np.array([g == name for g in groups])
        sub_labels = labels[mask]
        report = None
        if sub_labels.size and sub_labels.min() != sub_labels.max():
            report = thresholded_report(scores[mask], sub_labels, threshold)
        entries.append(SubgroupEntry(
            group=name,
            n=int(mask.sum()),
            n_pos=int(sub_labels.sum()),
            report=report,
            small=bool(mask.sum() < min_group_size),
        ))
    entries.append(SubgroupEntry(
        group="overall",
        n=int(labels.size),
        n_pos=int(labels.sum()),
        report=thresholded_report(scores, labels, threshold),
        small=bool(labels.size < min_group_size),
    ))
    return entries
