"""Decision-analytic evaluation: net benefit, decision curves, impact curves.

Net benefit at risk threshold R classifies positive when score >= R and
trades true positives against false positives:

    NB(R) = TPR * P - R/(1-R) * FPR * (1-P)

with P the outcome prevalence. Decision curves plot NB against R for
the model, a treat-all policy (TPR = FPR = 1), a treat-none policy
(identically 0), and an optional comparator. Clinical impact curves
count, per standardized population, how many patients the model
declares high-risk at each threshold and how many of those are true
positives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, PreconditionError
from .metrics import resample_indices
from .util import rng_for

_CURVE_BOOTSTRAP_TAG = 808


def default_threshold_grid() -> np.ndarray:
    """99 thresholds, 0.01 through 0.99."""
    return np.arange(1, 100) / 100.0


def _check_inputs(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise PreconditionError("scores and labels must be 1-D arrays of equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise PreconditionError("labels must be 0/1")
    if labels.min() == labels.max():
        raise PreconditionError("net benefit needs both classes present")
    return scores, labels.astype(np.int8)


def net_benefit(scores, labels, threshold: float) -> float:
    if not (0.0 < threshold < 1.0):
        raise PreconditionError(f"risk threshold must lie strictly in (0, 1), got {threshold}")
    scores, labels = _check_inputs(scores, labels)
    return float(_nb_curve(scores, labels, np.array([threshold]))[0])


def _nb_curve(scores, labels, thresholds) -> np.ndarray:
    n = labels.size
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    p = n_pos / n
    pred = scores[None, :] >= thresholds[:, None]
    tpr = (pred & (labels == 1)).sum(axis=1) / n_pos
    fpr = (pred & (labels == 0)).sum(axis=1) / n_neg
    return tpr * p - thresholds / (1.0 - thresholds) * fpr * (1.0 - p)


def treat_all_curve(prevalence: float, thresholds) -> np.ndarray:
    thresholds = np.asarray(thresholds, dtype=np.float64)
    return prevalence - thresholds / (1.0 - thresholds) * (1.0 - prevalence)


@dataclass
class CurveSet:
    thresholds: np.ndarray
    model_nb: np.ndarray
    all_nb: np.ndarray
    none_nb: np.ndarray
    comparator_nb: np.ndarray | None = None
    bands: dict | None = None  # series name -> (lower, upper) arrays
    bootstrap_iterations: int = 0
    bootstrap_level: float = 0.0
    seed: int = 0


def _validate_grid(thresholds) -> np.ndarray:
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.size == 0:
        raise PreconditionError("threshold grid is empty")
    if thresholds.min() <= 0.0 or thresholds.max() >= 1.0:
        raise PreconditionError("threshold grid must lie strictly inside (0, 1)")
    if np.any(np.diff(thresholds) <= 0):
        raise PreconditionError("threshold grid must be strictly increasing")
    return thresholds


def decision_curve(scores, labels, thresholds=None, comparator_scores=None,
                   bootstrap_iterations: int = 50, level: float = 0.90, seed: int = 0,
                   with_bands: bool = True) -> CurveSet:
    """Model/All/None (and optional comparator) net-benefit series.

    Bootstrap bands cover the model and comparator series only; the All
    and None references are deterministic given prevalence. Each
    iteration resamples (score, label) pairs once and evaluates the
    whole curve on that resample, so bands are coherent across
    thresholds.
    """
    thresholds = _validate_grid(default_threshold_grid() if thresholds is None else thresholds)
    scores, labels = _check_inputs(scores, labels)
    comparator = None
    if comparator_scores is not None:
        comparator = np.asarray(comparator_scores, dtype=np.float64)
        if comparator.shape != scores.shape:
            raise PreconditionError("comparator scores must align with model scores")

    prevalence = float(labels.mean())
    curve = CurveSet(
        thresholds=thresholds,
        model_nb=_nb_curve(scores, labels, thresholds),
        all_nb=treat_all_curve(prevalence, thresholds),
        none_nb=np.zeros(thresholds.size),
        comparator_nb=None if comparator is None else _nb_curve(comparator, labels, thresholds),
        bootstrap_iterations=bootstrap_iterations,
        bootstrap_level=level,
        seed=seed,
    )
    if not with_bands:
        return curve
    if bootstrap_iterations < 2:
        raise PreconditionError("bootstrap_iterations must be >= 2 when bands are requested")

    n = labels.size
    model_draws = np.empty((bootstrap_iterations, thresholds.size))
    comp_draws = np.empty_like(model_draws) if comparator is not None else None
    for it in range(bootstrap_iterations):
        rng = rng_for(seed, _CURVE_BOOTSTRAP_TAG, it)
        for _ in range(1000):
            idx = resample_indices(rng, n)
            picked = labels[idx]
            if picked.min() != picked.max():
                break
        else:
            raise NumericError("decision-curve bootstrap failed: single-class resamples only")
        model_draws[it] = _nb_curve(scores[idx], picked, thresholds)
        if comp_draws is not None:
            comp_draws[it] = _nb_curve(comparator[idx], picked, thresholds)
    alpha = (1.0 - level) / 2.0
    bands = {"model": (np.quantile(model_draws, alpha, axis=0),
                       np.quantile(model_draws, 1.0 - alpha, axis=0))}
    if comp_draws is not None:
        bands["comparator"] = (np.quantile(comp_draws, alpha, axis=0),
                               np.quantile(comp_draws, 1.0 - alpha, axis=0))
    curve.bands = bands
    return curve


@dataclass
class ImpactCurve:
    thresholds: np.ndarray
    declared: np.ndarray  # high-risk count per standardized population (exact, unrounded)
    true_positives: np.ndarray
    population: int

    def rounded(self) -> tuple:
        # half-up rounding for display only
        return (np.floor(self.declared + 0.5).astype(np.int64),
                np.floor(self.true_positives + 0.5).astype(np.int64))


def clinical_impact_curve(scores, labels, thresholds=None, population: int = 1000) -> ImpactCurve:
    thresholds = _validate_grid(default_threshold_grid() if thresholds is None else thresholds)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size == 0:
        raise PreconditionError("scores and labels must be non-empty 1-D arrays of equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise PreconditionError("labels must be 0/1")
    if population < 1:
        raise PreconditionError("population must be >= 1")
    pred = scores[None, :] >= thresholds[:, None]
    declared = population * pred.mean(axis=1)
    true_pos = population * (pred & (labels == 1)).mean(axis=1)
    return ImpactCurve(thresholds=thresholds, declared=declared,
                       true_positives=true_pos, population=population)
