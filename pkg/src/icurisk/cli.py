"""Command-line pipeline: generate, prepare, tune, train, evaluate,
explain, curves, external, report.

Each stage reads its inputs from files written by earlier stages and
writes its outputs plus a manifest entry (config echo, content hashes,
timing), so deleting a stage directory and re-running it reproduces
identical bytes. The train/test partition is hashed at prepare time and
re-checked by every later stage.

Exit codes: 0 success, 2 config error, 3 data/schema error, 4 numeric
failure, 5 precondition violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .boosting import (GbdtParams, class_weights, expand_class_weights, load_model,
                       predict, save_model, train_gbdt)
from .cohort import (PROFILES, apply_inclusion, filter_sparse_variables, generate_cohort,
                     read_cohort, read_cohort_spec, read_manifest, write_cohort,
                     write_cohort_spec, write_manifest)
from .config import EXAMPLE_CONFIG, RunConfig, load_config
from .decision import clinical_impact_curve, decision_curve
from .errors import ConfigError, DataFormatError, NumericError, PreconditionError
from .linear import load_logistic, predict_logistic, save_logistic, train_logistic
from .manifest import RunManifest
from .metrics import bootstrap_ci, auroc, average_precision, permutation_significance, subpopulation_report, thresholded_report
from .preprocess import (SplitPlan, fit_imputer, fit_standardizer, impute, load_imputer,
                         load_standardizer, save_imputer, save_standardizer, standardize,
                         stratified_split)
from .shapley import attribute_rows, perturbation_test, rank_features
from .temporal import consistency_cohorts, predictions_from_scores
from .tuning import HyperGrid, grid_search
from .util import fmt_float
from .windows import WindowConfig, build_matrix, load_matrix, save_matrix, select_columns
from . import plots


# ---------------------------------------------------------------------------
# layout helpers
# ---------------------------------------------------------------------------

def _out(cfg) -> Path:
    return Path(cfg.out_root)


def _htag(horizon: int) -> str:
    return f"h{horizon:04d}"


def _paths(cfg) -> dict:
    out = _out(cfg)
    return {
        "cohort_dir": out / "cohort",
        "stays": Path(cfg.stays) if cfg.stays else out / "cohort" / "stays.csv",
        "measurements": Path(cfg.measurements) if cfg.measurements else out / "cohort" / "measurements.csv",
        "variables": Path(cfg.variable_manifest) if cfg.variable_manifest else out / "cohort" / "variables.csv",
        "external_stays": Path(cfg.external_stays) if cfg.external_stays else out / "cohort" / "external_stays.csv",
        "external_measurements": (Path(cfg.external_measurements) if cfg.external_measurements
                                  else out / "cohort" / "external_measurements.csv"),
        "features_dir": out / "features",
        "split": out / "features" / "split.json",
        "exclusions": out / "features" / "exclusions.csv",
        "tuning_dir": out / "tuning",
        "models_dir": out / "models",
        "reports_dir": out / "reports",
        "explain_dir": out / "explain",
        "rankings": out / "explain" / "rankings.csv",
        "curves_dir": out / "curves",
        "external_dir": out / "external",
        "report_dir": out / "report",
    }


def _require(path: Path, hint: str) -> Path:
    if not Path(path).exists():
        raise ConfigError(f"missing input {path} ({hint})")
    return Path(path)


def _manifest(cfg) -> RunManifest:
    return RunManifest(cfg.out_root, __version__)


def _pmap(fn, items, jobs: int):
    """Order-preserving map; results are identical for any worker count."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _model_params(cfg) -> GbdtParams:
    return GbdtParams(max_depth=cfg.max_depth, rounds=cfg.rounds, eta=cfg.eta,
                      reg_lambda=cfg.reg_lambda, gamma=cfg.gamma,
                      min_child_weight=cfg.min_child_weight, subsample=cfg.subsample)


def _params_for_horizon(cfg, paths, horizon: int) -> GbdtParams:
    tuned = paths["tuning_dir"] / f"{_htag(horizon)}.json"
    if tuned.exists():
        with open(tuned, encoding="utf-8") as fh:
            doc = json.load(fh)
        return GbdtParams(**doc["best"])
    return _model_params(cfg)


def _write_csv(path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_split(paths) -> dict:
    split = _read_json(_require(paths["split"], "run `prepare` first"))
    split["train"] = np.array(split["train"], dtype=np.int64)
    split["test"] = np.array(split["test"], dtype=np.int64)
    return split


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    paths["cohort_dir"].mkdir(parents=True, exist_ok=True)
    if cfg.cohort_spec_file:
        spec = read_cohort_spec(_require(Path(cfg.cohort_spec_file), "generate.cohort_spec_file"))
    else:
        spec = PROFILES[cfg.profile](n_stays=cfg.n_stays, prevalence=cfg.prevalence,
                                     rng_seed=cfg.generate_seed)
    cohort = generate_cohort(spec)
    write_cohort(cohort, paths["stays"], paths["measurements"])
    write_manifest(spec.manifest(), paths["variables"])
    write_cohort_spec(spec, paths["cohort_dir"] / "spec.txt")
    outputs = [paths["stays"], paths["measurements"], paths["variables"],
               paths["cohort_dir"] / "spec.txt"]
    if cfg.external_profile:
        ext_spec = PROFILES[cfg.external_profile](n_stays=cfg.external_n_stays,
                                                  rng_seed=cfg.external_seed)
        ext = generate_cohort(ext_spec)
        write_cohort(ext, paths["external_stays"], paths["external_measurements"])
        outputs += [paths["external_stays"], paths["external_measurements"]]
    print(f"generate: {len(cohort)} stays, prevalence {np.mean([s.died for s in cohort]):.4f}")
    return outputs


def cmd_prepare(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    cohort = read_cohort(_require(paths["stays"], "run `generate` or point paths.stays at data"),
                         _require(paths["measurements"], "run `generate` or point paths.measurements at data"))
    manifest = read_manifest(_require(paths["variables"], "variable manifest file"))
    horizons = sorted(set(cfg.horizons), reverse=True)

    universe, tally = apply_inclusion(cohort, max(horizons))
    if not universe:
        raise PreconditionError("no stays survive inclusion at the farthest horizon")
    variables = filter_sparse_variables(universe, manifest, cfg.vital_threshold, cfg.lab_threshold)
    if not variables:
        raise PreconditionError("no variables survive the sparsity filter")
    universe = sorted(universe, key=lambda s: s.stay_id)
    labels = np.array([int(s.died) for s in universe], dtype=np.int8)
    plan = SplitPlan(test_fraction=cfg.test_fraction, k=cfg.folds, rng_seed=cfg.split_seed)
    train_idx, test_idx = stratified_split(labels, plan)
    ethnicity_categories = sorted({s.ethnicity for s in universe if s.ethnicity})

    paths["features_dir"].mkdir(parents=True, exist_ok=True)
    _write_csv(paths["exclusions"], ["reason", "count"],
               [["input", tally.n_input]]
               + [[reason, count] for reason, count in tally.excluded.items()]
               + [["retained", tally.n_retained]])

    def build_one(h):
        cfg_h = WindowConfig(horizon=h, statistics=tuple(cfg.statistics),
                             min_points_for_std=cfg.min_points_for_std)
        matrix = build_matrix(universe, cfg_h, variables, manifest=manifest,
                              ethnicity_categories=ethnicity_categories)
        return h, matrix

    outputs = [paths["exclusions"]]
    for h, matrix in _pmap(build_one, horizons, cfg.jobs):
        feature_path = paths["features_dir"] / f"{_htag(h)}.csv"
        save_matrix(matrix, feature_path)
        outputs += [feature_path, Path(str(feature_path) + ".columns.json")]
        print(f"prepare: horizon {h} -> {matrix.values.shape[0]} rows x {matrix.values.shape[1]} columns")

    _write_json(paths["split"], {
        "universe": [s.stay_id for s in universe],
        "train": [int(i) for i in train_idx],
        "test": [int(i) for i in test_idx],
        "variables": variables,
        "ethnicity_categories": ethnicity_categories,
        "horizons": horizons,
        "plan": {"test_fraction": cfg.test_fraction, "k": cfg.folds, "seed": cfg.split_seed},
    })
    outputs.append(paths["split"])
    manifest_run = _manifest(cfg)
    manifest_run.set_partition_hash(paths["split"])
    return outputs


def cmd_tune(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    split = _load_split(paths)
    _manifest(cfg).assert_partition(paths["split"])
    grid = HyperGrid(max_depth=cfg.grid_max_depth, rounds=cfg.grid_rounds, eta=cfg.grid_eta,
                     reg_lambda=cfg.grid_reg_lambda, gamma=cfg.grid_gamma,
                     min_child_weight=cfg.grid_min_child_weight)
    paths["tuning_dir"].mkdir(parents=True, exist_ok=True)

    def tune_one(h):
        matrix = load_matrix(_require(paths["features_dir"] / f"{_htag(h)}.csv", "run `prepare` first"))
        train_rows = split["train"]
        result = grid_search(matrix.values[train_rows], matrix.labels[train_rows],
                             grid, k=cfg.folds, seed=cfg.tune_seed, subsample=cfg.subsample)
        return h, result

    outputs = []
    for h, result in _pmap(tune_one, split["horizons"], cfg.jobs):
        doc = {"horizon": h, "best": asdict(result.best),
               "table": [entry.as_dict() for entry in result.table]}
        path = paths["tuning_dir"] / f"{_htag(h)}.json"
        _write_json(path, doc)
        outputs.append(path)
        print(f"tune: horizon {h} best={result.best} "
              f"mean AUROC {max(e.mean for e in result.table):.4f}")
    return outputs


def cmd_train(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    split = _load_split(paths)
    _manifest(cfg).assert_partition(paths["split"])
    paths["models_dir"].mkdir(parents=True, exist_ok=True)

    def train_one(h):
        matrix = load_matrix(_require(paths["features_dir"] / f"{_htag(h)}.csv", "run `prepare` first"))
        params = _params_for_horizon(cfg, paths, h)
        train_rows = split["train"]
        y_train = matrix.labels[train_rows]
        imputer = fit_imputer(matrix.values[train_rows], matrix.column_names)
        x_train = impute(imputer, matrix.values[train_rows])
        weights = expand_class_weights(y_train, class_weights(y_train))
        model = train_gbdt(x_train, y_train, weights, params, seed=cfg.train_seed)
        standardizer = fit_standardizer(x_train, matrix.column_names)
        logistic = train_logistic(standardize(standardizer, x_train), y_train, weights)
        return h, imputer, standardizer, model, logistic

    outputs = []
    for h, imputer, standardizer, model, logistic in _pmap(train_one, split["horizons"], cfg.jobs):
        tag = _htag(h)
        files = {
            "imputer": paths["models_dir"] / f"{tag}.imputer.txt",
            "standardizer": paths["models_dir"] / f"{tag}.standardizer.txt",
            "gbdt": paths["models_dir"] / f"{tag}.gbdt.json",
            "logistic": paths["models_dir"] / f"{tag}.logistic.json",
        }
        save_imputer(imputer, files["imputer"])
        save_standardizer(standardizer, files["standardizer"])
        save_model(model, files["gbdt"])
        save_logistic(logistic, files["logistic"])
        outputs += list(files.values())
        print(f"train: horizon {h} final train loss {model.train_loss[-1]:.4f}")
    return outputs


def _horizon_scores(cfg, paths, split, h):
    matrix = load_matrix(_require(paths["features_dir"] / f"{_htag(h)}.csv", "run `prepare` first"))
    tag = _htag(h)
    imputer = load_imputer(_require(paths["models_dir"] / f"{tag}.imputer.txt", "run `train` first"))
    model = load_model(paths["models_dir"] / f"{tag}.gbdt.json")
    standardizer = load_standardizer(paths["models_dir"] / f"{tag}.standardizer.txt")
    logistic = load_logistic(paths["models_dir"] / f"{tag}.logistic.json")
    test_rows = split["test"]
    x_test = impute(imputer, matrix.values[test_rows])
    scores = predict(model, x_test)
    logit_scores = predict_logistic(logistic, standardize(standardizer, x_test))
    stay_ids = [matrix.row_ids[i] for i in test_rows]
    labels = matrix.labels[test_rows]
    return matrix, stay_ids, labels, scores, logit_scores


def cmd_evaluate(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    split = _load_split(paths)
    _manifest(cfg).assert_partition(paths["split"])
    paths["reports_dir"].mkdir(parents=True, exist_ok=True)
    horizons = split["horizons"]

    per_h = _pmap(lambda h: (h, *_horizon_scores(cfg, paths, split, h)), horizons, cfg.jobs)
    outputs = []
    table_rows = []
    metric_series = {"auroc": [], "average_precision": [], "balanced_accuracy": []}
    scores_by_h, labels_by_h, ids_by_h = {}, {}, {}
    for h, matrix, stay_ids, labels, scores, logit_scores in per_h:
        tag = _htag(h)
        scores_path = paths["reports_dir"] / f"{tag}.scores.csv"
        _write_csv(scores_path, ["stay_id", "label", "gbdt_prob", "logistic_prob"],
                   [[sid, int(y), fmt_float(s), fmt_float(ls)]
                    for sid, y, s, ls in zip(stay_ids, labels, scores, logit_scores)])
        report = thresholded_report(scores, labels, cfg.threshold)
        bands = {
            name: bootstrap_ci(fn, scores, labels, iterations=cfg.bootstrap_iterations,
                               level=cfg.bootstrap_level, seed=cfg.bootstrap_seed).as_dict()
            for name, fn in (
                ("auroc", auroc),
                ("average_precision", average_precision),
                ("balanced_accuracy",
                 lambda s, y: thresholded_report(s, y, cfg.threshold).balanced_accuracy),
            )
        }
        doc = {"horizon": h, "dataset": "internal_test", "metrics": report.as_dict(),
               "bootstrap": bands,
               "logistic_metrics": thresholded_report(logit_scores, labels, cfg.threshold).as_dict()}
        if cfg.permutation_n > 0:
            doc["permutation_p"] = permutation_significance(
                scores, labels, cfg.permutation_n, cfg.permutation_seed)
        group_tags = matrix.group_tags
        subgroups = {}
        for tag_name in sorted(group_tags):
            tags = [group_tags[tag_name][i] for i in split["test"]]
            subgroups[tag_name] = [e.as_dict() for e in subpopulation_report(
                scores, labels, tags, cfg.threshold, cfg.min_group_size)]
        doc["subpopulations"] = subgroups
        metrics_path = paths["reports_dir"] / f"{tag}.metrics.json"
        _write_json(metrics_path, doc)
        outputs += [scores_path, metrics_path]
        table_rows.append([h, report.n, report.n_pos, fmt_float(report.auroc),
                           fmt_float(report.average_precision), fmt_float(report.balanced_accuracy),
                           fmt_float(report.sensitivity), fmt_float(report.specificity)])
        for name in metric_series:
            metric_series[name].append(getattr(report, name))
        scores_by_h[h] = scores
        labels_by_h[h] = labels
        ids_by_h[h] = stay_ids
        print(f"evaluate: horizon {h} AUROC {report.auroc:.4f} AP {report.average_precision:.4f}")

    table_path = paths["reports_dir"] / "horizon_table.csv"
    _write_csv(table_path, ["horizon_minutes", "n", "n_pos", "auroc", "average_precision",
                            "balanced_accuracy", "sensitivity", "specificity"], table_rows)
    outputs.append(table_path)
    svg_path = paths["reports_dir"] / "horizon_metrics.svg"
    plots.horizon_metrics_svg(svg_path, horizons, metric_series)
    outputs.append(svg_path)

    if len(horizons) >= 2:
        preds = predictions_from_scores(horizons, ids_by_h, scores_by_h, labels_by_h, cfg.threshold)
        report = consistency_cohorts(preds)
        rows = []
        for cohort_def in report.cohorts:
            pattern = ",".join([f"correct@{h}" for h in cohort_def.required_horizons[:-1]]
                               + [f"wrong@{cohort_def.required_horizons[-1]}"])
            rows.append([cohort_def.name, pattern, len(cohort_def.members), cohort_def.eligible,
                         fmt_float(100.0 * cohort_def.rate),
                         fmt_float(100.0 * report.pooled_rate(cohort_def.name))])
        consistency_path = paths["reports_dir"] / "consistency.csv"
        _write_csv(consistency_path,
                   ["cohort", "definition", "members", "eligible", "rate_percent",
                    "pooled_rate_percent"], rows)
        outputs.append(consistency_path)
    return outputs


def cmd_explain(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    split = _load_split(paths)
    _manifest(cfg).assert_partition(paths["split"])
    paths["explain_dir"].mkdir(parents=True, exist_ok=True)
    horizons = split["horizons"]

    def explain_one(h):
        matrix = load_matrix(_require(paths["features_dir"] / f"{_htag(h)}.csv", "run `prepare` first"))
        tag = _htag(h)
        imputer = load_imputer(paths["models_dir"] / f"{tag}.imputer.txt")
        model = load_model(paths["models_dir"] / f"{tag}.gbdt.json")
        test_rows = split["test"]
        if cfg.max_eval_rows and test_rows.size > cfg.max_eval_rows:
            test_rows = test_rows[: cfg.max_eval_rows]
        x_eval = impute(imputer, matrix.values[test_rows])
        phi, base = attribute_rows(model, x_eval)
        ranking = rank_features(model, x_eval, matrix.column_names, h)
        stay_ids = [matrix.row_ids[i] for i in test_rows]
        return h, matrix.column_names, stay_ids, phi, base, ranking

    results = _pmap(explain_one, horizons, cfg.jobs)
    outputs = []
    ranking_rows = []
    attribution_rows = []
    for h, column_names, stay_ids, phi, base, ranking in results:
        for rank, (name, value) in enumerate(ranking.entries, start=1):
            ranking_rows.append([h, rank, name, fmt_float(value)])
        for i, sid in enumerate(stay_ids):
            for j, name in enumerate(column_names):
                attribution_rows.append([h, sid, name, fmt_float(phi[i, j]), fmt_float(base)])
        svg_path = paths["explain_dir"] / f"{_htag(h)}.ranking.svg"
        plots.ranking_bar_svg(svg_path, ranking, top_k=13)
        outputs.append(svg_path)
        print(f"explain: horizon {h} top columns {ranking.top(3)}")

    _write_csv(paths["rankings"], ["horizon", "rank", "column", "mean_abs_phi"], ranking_rows)
    attr_path = paths["explain_dir"] / "attributions.csv"
    _write_csv(attr_path, ["horizon", "stay_id", "column", "phi", "base_value"], attribution_rows)
    outputs += [paths["rankings"], attr_path]

    perturb_h = cfg.perturb_horizon or min(horizons)
    matrix = load_matrix(_require(paths["features_dir"] / f"{_htag(perturb_h)}.csv", "run `prepare` first"))
    train_rows = split["train"]
    imputer = load_imputer(paths["models_dir"] / f"{_htag(perturb_h)}.imputer.txt")
    x_train = impute(imputer, matrix.values[train_rows])
    report = perturbation_test(x_train, matrix.labels[train_rows], matrix.column_names,
                               _params_for_horizon(cfg, paths, perturb_h),
                               seed=cfg.perturb_seed, repeats=cfg.perturb_repeats,
                               top_k=5, horizon=perturb_h)
    perturb_path = paths["explain_dir"] / "perturbation.json"
    doc = report.as_dict()
    doc["horizon"] = perturb_h
    _write_json(perturb_path, doc)
    outputs.append(perturb_path)
    print(f"explain: perturbation noise ranks {[r.noise_rank for r in report.repeats]}, "
          f"min jaccard {report.min_jaccard():.2f}")
    return outputs


def _read_scores(path):
    stay_ids, labels, gbdt, logistic = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            stay_ids.append(row["stay_id"])
            labels.append(int(row["label"]))
            gbdt.append(float(row["gbdt_prob"]))
            logistic.append(float(row["logistic_prob"]))
    return stay_ids, np.array(labels), np.array(gbdt), np.array(logistic)


def cmd_curves(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    split = _load_split(paths)
    _manifest(cfg).assert_partition(paths["split"])
    paths["curves_dir"].mkdir(parents=True, exist_ok=True)
    grid = np.arange(cfg.curve_start, cfg.curve_stop + cfg.curve_step / 2, cfg.curve_step)

    def curves_one(h):
        tag = _htag(h)
        _, labels, gbdt, logistic = _read_scores(
            _require(paths["reports_dir"] / f"{tag}.scores.csv", "run `evaluate` first"))
        curve = decision_curve(gbdt, labels, grid, comparator_scores=logistic,
                               bootstrap_iterations=cfg.bootstrap_iterations,
                               level=cfg.bootstrap_level, seed=cfg.bootstrap_seed,
                               with_bands=cfg.curve_bands)
        impact = clinical_impact_curve(gbdt, labels, grid, population=cfg.impact_population)
        return h, curve, impact

    outputs = []
    for h, curve, impact in _pmap(curves_one, split["horizons"], cfg.jobs):
        tag = _htag(h)
        rows = []
        for name, series in (("model", curve.model_nb), ("all", curve.all_nb),
                             ("none", curve.none_nb), ("comparator", curve.comparator_nb)):
            if series is None:
                continue
            for t, v in zip(curve.thresholds, series):
                lo = hi = ""
                if curve.bands and name in curve.bands:
                    i = int(np.searchsorted(curve.thresholds, t))
                    lo = fmt_float(curve.bands[name][0][i])
                    hi = fmt_float(curve.bands[name][1][i])
                rows.append([name, fmt_float(t), fmt_float(v), lo, hi])
        decision_path = paths["curves_dir"] / f"{tag}.decision.csv"
        _write_csv(decision_path, ["series", "threshold", "net_benefit", "lower", "upper"], rows)
        decision_svg = paths["curves_dir"] / f"{tag}.decision.svg"
        plots.decision_curve_svg(decision_svg, curve, title=f"Decision curve, {h // 60} h lead time")

        impact_rows = [[fmt_float(t), fmt_float(d), fmt_float(tp)]
                       for t, d, tp in zip(impact.thresholds, impact.declared, impact.true_positives)]
        impact_path = paths["curves_dir"] / f"{tag}.impact.csv"
        _write_csv(impact_path, ["threshold", "declared_per_population", "true_positives_per_population"],
                   impact_rows)
        impact_svg = paths["curves_dir"] / f"{tag}.impact.svg"
        plots.impact_curve_svg(impact_svg, impact, title=f"Clinical impact, {h // 60} h lead time")
        outputs += [decision_path, decision_svg, impact_path, impact_svg]
        print(f"curves: horizon {h} model NB at 0.1/0.5: "
              f"{curve.model_nb[np.searchsorted(curve.thresholds, 0.1)]:.4f}/"
              f"{curve.model_nb[np.searchsorted(curve.thresholds, 0.5)]:.4f}")
    return outputs


def _top_k_columns(rankings_path, horizon: int, k: int) -> list:
    columns = []
    with open(rankings_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if int(row["horizon"]) == horizon and int(row["rank"]) <= k:
                columns.append((int(row["rank"]), row["column"]))
    if not columns:
        raise DataFormatError(f"{rankings_path}: no ranking rows for horizon {horizon}")
    return [name for _, name in sorted(columns)]


def cmd_external(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    split = _load_split(paths)
    _manifest(cfg).assert_partition(paths["split"])
    rankings_path = _require(paths["rankings"], "run `explain` first")
    ext_cohort = read_cohort(
        _require(paths["external_stays"], "external cohort stays file"),
        _require(paths["external_measurements"], "external cohort measurements file"))
    manifest = read_manifest(_require(paths["variables"], "variable manifest file"))
    paths["external_dir"].mkdir(parents=True, exist_ok=True)
    horizons = split["horizons"]
    ext_universe, ext_tally = apply_inclusion(ext_cohort, max(horizons))
    if not ext_universe:
        raise PreconditionError("no external stays survive inclusion at the farthest horizon")

    def external_one(h):
        matrix = load_matrix(_require(paths["features_dir"] / f"{_htag(h)}.csv", "run `prepare` first"))
        topk = _top_k_columns(rankings_path, h, cfg.external_top_k)
        internal = select_columns(matrix, topk)
        # retrain on the entire internal cohort with the selected columns only
        params = _params_for_horizon(cfg, paths, h)
        imputer = fit_imputer(internal.values, internal.column_names)
        x_all = impute(imputer, internal.values)
        weights = expand_class_weights(internal.labels, class_weights(internal.labels))
        model = train_gbdt(x_all, internal.labels, weights, params, seed=cfg.train_seed)

        test_rows = split["test"]
        internal_scores = predict(model, impute(imputer, internal.values[test_rows]))
        internal_report = thresholded_report(internal_scores, internal.labels[test_rows], cfg.threshold)

        cfg_h = WindowConfig(horizon=h, statistics=tuple(cfg.statistics),
                             min_points_for_std=cfg.min_points_for_std)
        ext_matrix = build_matrix(ext_universe, cfg_h, split["variables"], manifest=manifest,
                                  ethnicity_categories=split["ethnicity_categories"])
        missing = [name for name in topk if name not in ext_matrix.column_names]
        if missing:
            raise DataFormatError(
                f"external cohort is missing selected columns: {', '.join(missing)}")
        ext_selected = select_columns(ext_matrix, topk)
        ext_scores = predict(model, impute(imputer, ext_selected.values))
        ext_report = thresholded_report(ext_scores, ext_selected.labels, cfg.threshold)
        return h, topk, internal_report, ext_report

    results = _pmap(external_one, horizons, cfg.jobs)
    rows = []
    doc = {"top_k": cfg.external_top_k, "external_inclusion": ext_tally.excluded,
           "external_retained": ext_tally.n_retained, "horizons": {}}
    for h, topk, internal_report, ext_report in results:
        for name, report in (("internal_topk", internal_report), ("external", ext_report)):
            rows.append([h, name, report.n, report.n_pos, fmt_float(report.auroc),
                         fmt_float(report.average_precision), fmt_float(report.balanced_accuracy)])
        doc["horizons"][str(h)] = {
            "columns": topk,
            "internal_topk": internal_report.as_dict(),
            "external": ext_report.as_dict(),
        }
        print(f"external: horizon {h} internal AUROC {internal_report.auroc:.4f} "
              f"-> external {ext_report.auroc:.4f}")
    comparison_path = paths["external_dir"] / "comparison.csv"
    _write_csv(comparison_path, ["horizon_minutes", "dataset", "n", "n_pos", "auroc",
                                 "average_precision", "balanced_accuracy"], rows)
    report_path = paths["external_dir"] / "report.json"
    _write_json(report_path, doc)
    return [comparison_path, report_path]


def cmd_report(cfg: RunConfig) -> list:
    paths = _paths(cfg)
    out = _out(cfg)
    paths["report_dir"].mkdir(parents=True, exist_ok=True)
    lines = ["# Run summary", "", f"- package version: {__version__}"]
    manifest = _manifest(cfg)
    lines.append(f"- manifest fingerprint: {manifest.content_fingerprint()}")
    lines.append("")

    def append_csv(title, path, limit=40):
        if not Path(path).exists():
            return
        lines.append(f"## {title}")
        lines.append("")
        lines.append("```")
        body = Path(path).read_text(encoding="utf-8").strip().splitlines()
        lines.extend(body[:limit])
        if len(body) > limit:
            lines.append(f"... ({len(body) - limit} more rows)")
        lines.append("```")
        lines.append("")

    append_csv("Exclusions", paths["exclusions"])
    append_csv("Metrics by lead time", paths["reports_dir"] / "horizon_table.csv")
    append_csv("Cross-horizon consistency", paths["reports_dir"] / "consistency.csv")
    append_csv("Feature rankings (head)", paths["rankings"], limit=20)
    append_csv("External validation", paths["external_dir"] / "comparison.csv")
    perturb = paths["explain_dir"] / "perturbation.json"
    if perturb.exists():
        doc = _read_json(perturb)
        ranks = [r["noise_rank"] for r in doc["repeats"]]
        lines.append("## Perturbation robustness")
        lines.append("")
        lines.append(f"- noise column ranks over {len(ranks)} repeats: {ranks}")
        lines.append(f"- minimum top-{doc['top_k']} jaccard: "
                     f"{min(r['top_jaccard'] for r in doc['repeats']):.3f}")
        lines.append("")
    summary_path = paths["report_dir"] / "summary.md"
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"report: {summary_path}")
    return [summary_path]


STAGES = {
    "generate": cmd_generate,
    "prepare": cmd_prepare,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "curves": cmd_curves,
    "external": cmd_external,
    "report": cmd_report,
}

_STAGE_INPUT_KEYS = {
    "prepare": ["stays", "measurements", "variables"],
    "tune": ["split"],
    "train": ["split"],
    "evaluate": ["split"],
    "explain": ["split"],
    "curves": ["split"],
    "external": ["split", "rankings", "external_stays", "external_measurements"],
    "report": [],
    "generate": [],
}


def run_stage(name: str, cfg: RunConfig) -> None:
    paths = _paths(cfg)
    inputs = [paths[k] for k in _STAGE_INPUT_KEYS[name] if Path(paths[k]).exists()]
    started = time.time()
    outputs = STAGES[name](cfg)
    _manifest(cfg).record_stage(name, cfg.echo(), inputs, outputs, time.time() - started)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="icurisk",
        description="Horizon-windowed ICU mortality risk pipeline",
    )
    parser.add_argument("--config", "-c", default=None, help="INI config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config value (wins over file)")
    parser.add_argument("--out", default=None, help="output root (overrides paths.out_root)")
    parser.add_argument("--jobs", type=int, default=None, help="worker threads for per-horizon stages")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, help=f"run the {name} stage")
    sub.add_parser("all", help="run every stage in order")
    init = sub.add_parser("init", help="write an example config file")
    init.add_argument("path", nargs="?", default="icurisk.ini")

    args = parser.parse_args(argv)
    try:
        if args.command == "init":
            Path(args.path).write_text(EXAMPLE_CONFIG, encoding="utf-8")
            print(f"wrote {args.path}")
            return 0
        overrides = list(args.overrides)
        if args.out:
            overrides.append(f"paths.out_root={args.out}")
        if args.jobs is not None:
            overrides.append(f"runtime.jobs={args.jobs}")
        cfg = load_config(args.config, overrides)
        stage_names = list(STAGES) if args.command == "all" else [args.command]
        if args.command == "all" and not cfg.tune_enabled:
            stage_names.remove("tune")
        if args.command == "all" and not cfg.external_profile and not cfg.external_stays:
            stage_names.remove("external")
        for name in stage_names:
            run_stage(name, cfg)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except PreconditionError as exc:
        print(f"precondition violation: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
