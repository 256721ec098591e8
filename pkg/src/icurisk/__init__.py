"""Horizon-windowed ICU mortality risk modelling toolkit.

Recasts ICU time-series mortality prediction as a family of static
classification problems, one per prediction lead time: summarize each
variable over [admission, event - horizon], train a class-weighted
gradient-boosted tree model per horizon, attribute predictions with
exact Shapley values, and evaluate clinical utility with decision and
impact curves. A statistics-matched synthetic cohort generator stands
in for access-restricted ICU databases.
"""

__version__ = "0.1.0"

from .cohort import (CohortSpec, PatientStay, VariableManifest, VariableSpec,
                     apply_inclusion, eicu_like_spec, filter_sparse_variables,
                     generate_cohort, mimic_like_spec, read_cohort, write_cohort)
from .windows import (ColumnInfo, FeatureMatrix, WindowConfig, build_matrix,
                      extract_window, select_columns)
from .preprocess import (ImputerState, SplitPlan, StandardizerState, fit_imputer,
                         fit_standardizer, impute, standardize, stratified_kfold,
                         stratified_split)
from .boosting import (BoostedEnsemble, GbdtParams, class_weights, load_model,
                       predict, predict_margin, save_model, train_gbdt)
from .linear import LinearModel, predict_logistic, train_logistic
from .tuning import GridSearchResult, HyperGrid, grid_search
from .shapley import (Attribution, HorizonRanking, brute_force_shap,
                      horizon_sweep_rankings, perturbation_test, rank_features,
                      tree_shap)
from .metrics import (MetricReport, UncertaintyBand, auroc, average_precision,
                      bootstrap_ci, permutation_significance, subpopulation_report,
                      thresholded_report)
from .decision import (CurveSet, ImpactCurve, clinical_impact_curve, decision_curve,
                       default_threshold_grid, net_benefit)
from .temporal import (ConsistencyReport, HorizonPredictions, consistency_cohorts,
                       horizon_stability_table)
from .errors import ConfigError, DataFormatError, NumericError, PreconditionError
