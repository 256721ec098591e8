"""Grid-search hyperparameter tuning over stratified folds.

For every grid point, each fold refits the imputer on its training
rows, trains with inverse class weights, and scores validation AUROC.
The winner is the highest mean; ties break toward fewer rounds, then
shallower depth, then the remaining parameters lexicographically.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from .boosting import GbdtParams, class_weights, expand_class_weights, predict, train_gbdt
from .errors import PreconditionError
from .metrics import auroc
from .preprocess import fit_imputer, impute, stratified_kfold

_TRAIN_TAG = 707


@dataclass(frozen=True)
class HyperGrid:
    max_depth: tuple = (4,)
    rounds: tuple = (200,)
    eta: tuple = (0.1,)
    reg_lambda: tuple = (1.0,)
    gamma: tuple = (0.0,)
    min_child_weight: tuple = (1.0,)

    def validate(self) -> None:
        for name in ("max_depth", "rounds", "eta", "reg_lambda", "gamma", "min_child_weight"):
            if not getattr(self, name):
                raise PreconditionError(f"grid axis {name} is empty")

    def points(self, subsample: float = 1.0) -> list:
        self.validate()
        out = []
        for depth, rounds, eta, lam, gam, mcw in itertools.product(
            self.max_depth, self.rounds, self.eta, self.reg_lambda, self.gamma, self.min_child_weight
        ):
            params = GbdtParams(max_depth=depth, rounds=rounds, eta=eta, reg_lambda=lam,
                                gamma=gam, min_child_weight=mcw, subsample=subsample)
            params.validate()
            out.append(params)
        return out


@dataclass
class GridPointResult:
    params: GbdtParams
    fold_aurocs: list
    mean: float
    std: float

    def as_dict(self) -> dict:
        return {"params": asdict(self.params), "fold_aurocs": self.fold_aurocs,
                "mean": self.mean, "std": self.std}


@dataclass
class GridSearchResult:
    best: GbdtParams
    table: list = field(default_factory=list)


def _tie_key(entry: GridPointResult):
    p = entry.params
    return (-entry.mean, p.rounds, p.max_depth, p.eta, p.reg_lambda, p.gamma, p.min_child_weight)


def grid_search(values, labels, grid: HyperGrid, k: int = 5, seed: int = 0,
                subsample: float = 1.0) -> GridSearchResult:
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    folds = stratified_kfold(labels, k, seed)
    has_missing = bool(np.isnan(values).any())
    table = []
    for point_index, params in enumerate(grid.points(subsample)):
        scores = []
        for f in range(k):
            train_rows = folds != f
            val_rows = ~train_rows
            if has_missing:
                imputer = fit_imputer(values[train_rows])
                x_train = impute(imputer, values[train_rows])
                x_val = impute(imputer, values[val_rows])
            else:
                x_train = values[train_rows]
                x_val = values[val_rows]
            y_train = labels[train_rows]
            w = expand_class_weights(y_train, class_weights(y_train))
            model = train_gbdt(x_train, y_train, w, params,
                               seed=_TRAIN_TAG + 1000 * point_index + f + seed)
            scores.append(auroc(predict(model, x_val), labels[val_rows]))
        mean = float(np.mean(scores))
        std = float(np.std(scores, ddof=1)) if k > 1 else 0.0
        table.append(GridPointResult(params=params, fold_aurocs=scores, mean=mean, std=std))
    best = min(table, key=_tie_key).params
    return GridSearchResult(best=best, table=table)
