"""Cross-horizon prediction consistency.

Given thresholded predictions for the same stays at several lead times
(ordered far to near), the flip cohorts collect stays predicted
correctly at every farther horizon but wrongly at one: with the default
{24 h, 18 h, 12 h, 6 h} grid, P3 flips at 18 h, P2 at 12 h, P1 at 6 h.
Each cohort's rate divides by the stays that have predictions at every
horizon its definition references; a pooled-denominator rate (stays
present at all horizons) is reported alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError


@dataclass
class HorizonPredictions:
    horizons: list  # minutes, ordered far -> near (descending)
    rows: dict = field(default_factory=dict)  # stay_id -> {horizon: (predicted, true)}

    def add(self, stay_id: str, horizon: int, predicted: int, true: int) -> None:
        if horizon not in self.horizons:
            raise PreconditionError(f"horizon {horizon} not in {self.horizons}")
        self.rows.setdefault(stay_id, {})[horizon] = (int(predicted), int(true))

    def validate_nesting(self) -> None:
        """A stay present at a horizon must be present at all nearer ones."""
        for stay_id, preds in self.rows.items():
            seen = False
            for h in self.horizons:  # far -> near
                if h in preds:
                    seen = True
                elif seen:
                    raise PreconditionError(
                        f"stay {stay_id}: present at a farther horizon but missing at {h}"
                    )


@dataclass
class FlipCohort:
    name: str
    required_horizons: list  # correct at all but the last, wrong at the last
    members: list
    eligible: int

    @property
    def rate(self) -> float:
        return len(self.members) / self.eligible if self.eligible else math.nan


@dataclass
class ConsistencyReport:
    horizons: list
    cohorts: list  # FlipCohort, ordered P_{m-1} (earliest flip) .. P1 (latest flip)
    pooled_denominator: int

    def pooled_rate(self, name: str) -> float:
        for c in self.cohorts:
            if c.name == name:
                return len(c.members) / self.pooled_denominator if self.pooled_denominator else math.nan
        raise PreconditionError(f"no cohort named {name}")

    def rates(self) -> dict:
        return {c.name: c.rate for c in self.cohorts}


def consistency_cohorts(preds: HorizonPredictions) -> ConsistencyReport:
    horizons = list(preds.horizons)
    if len(horizons) < 2:
        raise PreconditionError("consistency analysis needs at least 2 horizons")
    if sorted(horizons, reverse=True) != horizons:
        raise PreconditionError("horizons must be ordered far to near (descending minutes)")
    m = len(horizons)
    stay_ids = sorted(preds.rows)
    pooled = sum(1 for sid in stay_ids if all(h in preds.rows[sid] for h in horizons))

    cohorts = []
    for j in range(1, m):
        required = horizons[: j + 1]
        members = []
        eligible = 0
        for sid in stay_ids:
            row = preds.rows[sid]
            if not all(h in row for h in required):
                continue
            eligible += 1
            correct = [row[h][0] == row[h][1] for h in required]
            if all(correct[:-1]) and not correct[-1]:
                members.append(sid)
        cohorts.append(FlipCohort(
            name=f"P{m - j}",
            required_horizons=required,
            members=members,
            eligible=eligible,
        ))
    return ConsistencyReport(horizons=horizons, cohorts=cohorts, pooled_denominator=pooled)


def predictions_from_scores(horizons, stay_ids_by_horizon, scores_by_horizon,
                            labels_by_horizon, threshold: float = 0.5) -> HorizonPredictions:
    """Assemble HorizonPredictions from per-horizon score vectors."""
    preds = HorizonPredictions(horizons=sorted(horizons, reverse=True))
    for h in preds.horizons:
        scores = np.asarray(scores_by_horizon[h], dtype=np.float64)
        labels = np.asarray(labels_by_horizon[h])
        for sid, s, y in zip(stay_ids_by_horizon[h], scores, labels):
            preds.add(sid, h, int(s >= threshold), int(y))
    return preds


def horizon_stability_table(cohort, horizons, params, manifest, **pipeline_kwargs):
    """Metric-vs-horizon table on one shared stay universe and test partition.

    Returns ({horizon: MetricReport}, HorizonPredictions); the
    predictions feed consistency_cohorts directly.
    """
    from .pipeline import run_horizons  # deferred: pipeline composes this module
    if not horizons:
        raise PreconditionError("horizons must be non-empty")
    run = run_horizons(cohort, horizons, params, manifest, with_logistic=False,
                       **pipeline_kwargs)
    reports = {h: run.results[h].report for h in sorted(run.results, reverse=True)}
    return reports, run.predictions
