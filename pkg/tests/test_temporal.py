import numpy as np
import pytest

from icurisk.boosting import GbdtParams
from icurisk.errors import PreconditionError
from icurisk.preprocess import SplitPlan
from icurisk.temporal import (HorizonPredictions, consistency_cohorts,
                              horizon_stability_table, predictions_from_scores)

HORIZONS = [1440, 1080, 720, 360]


def _preds(rows):
    """rows: stay_id -> list of (pred, true) aligned with HORIZONS (None = absent)."""
    preds = HorizonPredictions(horizons=list(HORIZONS))
    for sid, entries in rows.items():
        for h, entry in zip(HORIZONS, entries):
            if entry is not None:
                preds.add(sid, h, *entry)
    return preds


def test_all_correct_gives_zero_rates():
    preds = _preds({f"s{i}": [(1, 1)] * 4 for i in range(10)})
    report = consistency_cohorts(preds)
    assert report.rates() == {"P3": 0.0, "P2": 0.0, "P1": 0.0}


def test_one_late_flip_in_ten():
    rows = {f"s{i}": [(0, 0)] * 4 for i in range(9)}
    rows["s9"] = [(1, 1), (1, 1), (1, 1), (0, 1)]  # correct far, wrong at 6 h
    report = consistency_cohorts(_preds(rows))
    rates = report.rates()
    assert rates["P1"] == pytest.approx(0.10, abs=1e-12)
    assert rates["P2"] == 0.0 and rates["P3"] == 0.0
    assert report.pooled_rate("P1") == pytest.approx(0.10, abs=1e-12)


def test_wrong_at_farthest_belongs_nowhere():
    rows = {"s0": [(0, 1), (0, 1), (0, 1), (0, 1)]}  # wrong everywhere
    report = consistency_cohorts(_preds(rows))
    for cohort in report.cohorts:
        assert cohort.members == []


def test_cohorts_disjoint():
    rng = np.random.default_rng(0)
    rows = {}
    for i in range(300):
        true = int(rng.random() < 0.3)
        rows[f"s{i}"] = [(int(rng.random() < 0.5), true) for _ in range(4)]
    report = consistency_cohorts(_preds(rows))
    sets = [set(c.members) for c in report.cohorts]
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            assert not (sets[i] & sets[j])


def test_denominators_respect_missing_horizons():
    rows = {
        "a": [(1, 1), (1, 1), (1, 1), (1, 1)],
        "b": [(1, 1), (0, 1), None, None],  # present at 24/18 h only
    }
    report = consistency_cohorts(_preds(rows))
    by_name = {c.name: c for c in report.cohorts}
    assert by_name["P3"].eligible == 2  # both stays have 24 h and 18 h
    assert by_name["P3"].members == ["b"]
    assert by_name["P2"].eligible == 1  # only "a" reaches 12 h
    assert by_name["P1"].eligible == 1
    assert report.pooled_denominator == 1


def test_single_horizon_rejected():
    preds = HorizonPredictions(horizons=[360])
    preds.add("s0", 360, 1, 1)
    with pytest.raises(PreconditionError):
        consistency_cohorts(preds)


def test_horizons_must_be_descending():
    preds = HorizonPredictions(horizons=[360, 1440])
    with pytest.raises(PreconditionError):
        consistency_cohorts(preds)


def test_nesting_validation():
    preds = HorizonPredictions(horizons=[1440, 360])
    preds.add("s0", 1440, 1, 1)  # present far, missing near
    with pytest.raises(PreconditionError):
        preds.validate_nesting()
    preds.add("s0", 360, 1, 1)
    preds.validate_nesting()


def test_predictions_from_scores_thresholding():
    preds = predictions_from_scores(
        [360, 1440],
        {360: ["a", "b"], 1440: ["a", "b"]},
        {360: np.array([0.7, 0.2]), 1440: np.array([0.4, 0.8])},
        {360: np.array([1, 0]), 1440: np.array([1, 0])},
        threshold=0.5,
    )
    assert preds.rows["a"][360] == (1, 1)
    assert preds.rows["a"][1440] == (0, 1)
    assert preds.rows["b"][1440] == (1, 0)


# ---------------------------------------------------------------------------
# stability table
# ---------------------------------------------------------------------------

def test_stability_table_single_horizon(medium_cohort, medium_spec, fast_params):
    reports, preds = horizon_stability_table(
        medium_cohort, [720], fast_params, medium_spec.manifest(),
        plan=SplitPlan(rng_seed=21), train_seed=22)
    assert list(reports) == [720]
    assert 0.5 < reports[720].auroc <= 1.0
    assert preds.horizons == [720]


def test_stability_table_deterministic(medium_cohort, medium_spec):
    params = GbdtParams(max_depth=3, rounds=30)
    kw = dict(plan=SplitPlan(rng_seed=23), train_seed=24)
    a_reports, a_preds = horizon_stability_table(
        medium_cohort, [360, 1440], params, medium_spec.manifest(), **kw)
    b_reports, b_preds = horizon_stability_table(
        medium_cohort, [360, 1440], params, medium_spec.manifest(), **kw)
    assert a_reports == b_reports
    assert a_preds.rows == b_preds.rows


def test_stability_table_shared_universe(medium_cohort, medium_spec, fast_params):
    reports, preds = horizon_stability_table(
        medium_cohort, [360, 1440], fast_params, medium_spec.manifest(),
        plan=SplitPlan(rng_seed=25), train_seed=26)
    assert reports[360].n == reports[1440].n
    assert reports[360].n_pos == reports[1440].n_pos
    # every evaluated stay carries predictions at both horizons
    assert all(len(v) == 2 for v in preds.rows.values())
    consistency = consistency_cohorts(preds)
    assert consistency.pooled_denominator == reports[360].n
