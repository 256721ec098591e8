"""End-to-end composition: cohort -> windows -> preprocessing -> models.

All horizons share one stay universe (stays eligible at the farthest
horizon) and one stratified train/test partition, so metrics are
comparable across horizons and cross-horizon consistency is well
defined. Per-horizon work is independent and may run in parallel
without changing any result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boosting import BoostedEnsemble, GbdtParams, class_weights, expand_class_weights, predict, train_gbdt
from .cohort import VariableManifest, apply_inclusion, filter_sparse_variables
from .errors import PreconditionError
from .linear import LinearModel, predict_logistic, train_logistic
from .metrics import MetricReport, thresholded_report
from .preprocess import (SplitPlan, fit_imputer, fit_standardizer, impute,
                         standardize, stratified_split)
from .shapley import rank_features
from .temporal import HorizonPredictions
from .windows import FeatureMatrix, WindowConfig, build_matrix


@dataclass
class HorizonResult:
    horizon: int
    matrix: FeatureMatrix
    imputer: object
    standardizer: object
    model: BoostedEnsemble
    logistic_model: LinearModel | None
    test_scores: np.ndarray
    test_logistic_scores: np.ndarray | None
    report: MetricReport


@dataclass
class PipelineRun:
    universe_ids: list
    tally: object
    variables: list
    train_idx: np.ndarray
    test_idx: np.ndarray
    results: dict = field(default_factory=dict)  # horizon -> HorizonResult
    predictions: HorizonPredictions | None = None


def prepare_universe(cohort, horizons, manifest: VariableManifest,
                     vital_threshold: float = 0.125, lab_threshold: float = 0.25):
    """Shared stay universe (eligible at the farthest horizon) plus kept variables."""
    if not horizons:
        raise PreconditionError("horizons must be non-empty")
    universe, tally = apply_inclusion(cohort, max(horizons))
    if not universe:
        raise PreconditionError("no stays survive inclusion at the farthest horizon")
    variables = filter_sparse_variables(universe, manifest, vital_threshold, lab_threshold)
    if not variables:
        raise PreconditionError("no variables survive the sparsity filter")
    return universe, tally, variables


def _params_for(params, horizon: int) -> GbdtParams:
    if isinstance(params, dict):
        try:
            return params[horizon]
        except KeyError:
            raise PreconditionError(f"no parameters supplied for horizon {horizon}") from None
    return params


def fit_horizon(matrix: FeatureMatrix, train_idx, test_idx, params: GbdtParams,
                horizon: int, threshold: float = 0.5, train_seed: int = 0,
                with_logistic: bool = True) -> HorizonResult:
    labels = matrix.labels.astype(np.int8)
    y_train = labels[train_idx]
    y_test = labels[test_idx]
    imputer = fit_imputer(matrix.values[train_idx], matrix.column_names)
    x_train = impute(imputer, matrix.values[train_idx])
    x_test = impute(imputer, matrix.values[test_idx])
    weights = expand_class_weights(y_train, class_weights(y_train))
    model = train_gbdt(x_train, y_train, weights, params, seed=train_seed)
    scores = predict(model, x_test)

    standardizer = fit_standardizer(x_train, matrix.column_names)
    logistic_model = None
    logit_scores = None
    if with_logistic:
        logistic_model = train_logistic(standardize(standardizer, x_train), y_train, weights)
        logit_scores = predict_logistic(logistic_model, standardize(standardizer, x_test))

    return HorizonResult(
        horizon=horizon,
        matrix=matrix,
        imputer=imputer,
        standardizer=standardizer,
        model=model,
        logistic_model=logistic_model,
        test_scores=scores,
        test_logistic_scores=logit_scores,
        report=thresholded_report(scores, y_test, threshold),
    )


def run_horizons(cohort, horizons, params, manifest: VariableManifest,
                 plan: SplitPlan | None = None, threshold: float = 0.5,
                 statistics=("mean", "std"), min_points_for_std: int = 2,
                 vital_threshold: float = 0.125, lab_threshold: float = 0.25,
                 ethnicity_categories=None, train_seed: int = 0,
                 with_logistic: bool = True) -> PipelineRun:
    """Train and evaluate one model per horizon on a shared universe and split."""
    plan = plan or SplitPlan()
    horizons = sorted(set(int(h) for h in horizons), reverse=True)  # far -> near
    universe, tally, variables = prepare_universe(cohort, horizons, manifest,
                                                  vital_threshold, lab_threshold)
    universe = sorted(universe, key=lambda s: s.stay_id)
    labels = np.array([int(s.died) for s in universe], dtype=np.int8)
    train_idx, test_idx = stratified_split(labels, plan)

    run = PipelineRun(
        universe_ids=[s.stay_id for s in universe],
        tally=tally,
        variables=variables,
        train_idx=train_idx,
        test_idx=test_idx,
    )
    preds = HorizonPredictions(horizons=horizons)
    for h in horizons:
        cfg = WindowConfig(horizon=h, statistics=tuple(statistics),
                           min_points_for_std=min_points_for_std)
        matrix = build_matrix(universe, cfg, variables, manifest=manifest,
                              ethnicity_categories=ethnicity_categories)
        result = fit_horizon(matrix, train_idx, test_idx, _params_for(params, h),
                             horizon=h, threshold=threshold, train_seed=train_seed,
                             with_logistic=with_logistic)
        run.results[h] = result
        for i, row in enumerate(test_idx):
            preds.add(matrix.row_ids[row], h, int(result.test_scores[i] >= threshold),
                      int(matrix.labels[row]))
    run.predictions = preds
    return run


def sweep_rankings(cohort, horizons, params, manifest: VariableManifest,
                   max_eval_rows: int = 0, **kwargs) -> list:
    """Per-horizon feature rankings from models trained by the full pipeline."""
    run = run_horizons(cohort, horizons, params, manifest, with_logistic=False, **kwargs)
    rankings = []
    for h in sorted(run.results, reverse=True):
        result = run.results[h]
        x_test = impute(result.imputer, result.matrix.values[run.test_idx])
        if max_eval_rows and x_test.shape[0] > max_eval_rows:
            x_test = x_test[:max_eval_rows]
        rankings.append(rank_features(result.model, x_test, result.matrix.column_names, h))
    return rankings
