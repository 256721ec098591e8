"""Leak-free dataset preparation.

Splitting and fold assignment are pure functions of (labels, plan,
seed). The imputer and standardizer are fitted on training rows only
and then applied as frozen transforms, so corrupting held-out rows
before fitting cannot change any fitted state.

Imputation is deterministic chained-equation regression: missing cells
start at training column means, then each column is regressed on all
other columns with a small ridge penalty, sweeping columns in
descending observed-count order until cell changes fall below
tolerance. The stored per-column regressions are applied to new rows in
a single pass, row-independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, PreconditionError
from .util import fmt_float_list, parse_float_list, read_keyed, rng_for, write_keyed

_SPLIT_TAG = 101
_FOLD_TAG = 202

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class SplitPlan:
    test_fraction: float = 0.20
    k: int = 5
    rng_seed: int = 0

    def validate(self) -> None:
        if not (0.0 < self.test_fraction < 1.0):
            raise PreconditionError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.k < 2:
            raise PreconditionError(f"k must be >= 2, got {self.k}")


def stratified_split(labels, plan: SplitPlan):
    """(train_idx, test_idx): disjoint, exhaustive, class-stratified, seeded."""
    plan.validate()
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise PreconditionError("labels must be 0/1")
    if labels.min() == labels.max():
        raise PreconditionError("stratified_split needs both classes present")
    n = labels.size
    # floor per class, then hand out remainders by largest fractional part
    takes = {}
    remainders = []
    for c in (0, 1):
        exact = plan.test_fraction * int(np.sum(labels == c))
        takes[c] = int(np.floor(exact))
        remainders.append((exact - takes[c], c))
    target = int(round(plan.test_fraction * n))
    remainders.sort(reverse=True)
    for frac, c in remainders:
        if takes[0] + takes[1] >= target:
            break
        takes[c] += 1
    test_parts = []
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        rng_for(plan.rng_seed, _SPLIT_TAG, c).shuffle(idx)
        test_parts.append(idx[: takes[c]])
    test_idx = np.sort(np.concatenate(test_parts))
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def stratified_kfold(labels, k: int, seed: int) -> np.ndarray:
    """Fold id per row; fold sizes and per-fold positives each differ by <= 1."""
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise PreconditionError("labels must be 0/1")
    if k < 2:
        raise PreconditionError(f"k must be >= 2, got {k}")
    minority = int(min(np.sum(labels == 0), np.sum(labels == 1)))
    if k > minority:
        raise PreconditionError(f"k={k} exceeds minority class count {minority}")
    fold = np.empty(labels.size, dtype=np.int64)
    offset = 0
    # one continuing round-robin across both classes keeps totals balanced too
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        rng_for(seed, _FOLD_TAG, c).shuffle(idx)
        for j, row in enumerate(idx):
            fold[row] = (offset + j) % k
        offset += idx.size
    return fold


# ---------------------------------------------------------------------------
# chained-equation imputation
# ---------------------------------------------------------------------------

@dataclass
class ImputerState:
    column_names: list
    means: np.ndarray  # training column means (initial fill)
    coef: np.ndarray  # (m, m+1): [intercept, weight per column]; self weight 0
    order: np.ndarray  # column sweep order (descending observed count)
    ridge: float
    sweeps_run: int
    tol: float


def _ridge_fit(predictors: np.ndarray, target: np.ndarray, ridge: float) -> np.ndarray:
    """[intercept, weights]; the intercept is not penalized."""
    n = predictors.shape[0]
    a = np.column_stack([np.ones(n), predictors])
    gram = a.T @ a
    penalty = np.full(a.shape[1], ridge)
    penalty[0] = 0.0
    gram[np.diag_indices_from(gram)] += penalty
    rhs = a.T @ target
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(gram, rhs, rcond=None)[0]


def fit_imputer(values, column_names=None, ridge: float = 1e-3,
                sweeps: int = 10, tol: float = 1e-4) -> ImputerState:
    values = np.asarray(values, dtype=np.float64)
    n, m = values.shape
    if m < 2:
        raise PreconditionError("imputer needs at least 2 columns")
    if column_names is None:
        column_names = [f"col{j}" for j in range(m)]
    observed = ~np.isnan(values)
    counts = observed.sum(axis=0)
    for j in range(m):
        if counts[j] < 2:
            raise PreconditionError(
                f"column {column_names[j]!r} has {counts[j]} observed training values, need >= 2"
            )
    means = np.array([values[observed[:, j], j].mean() for j in range(m)])
    order = np.lexsort((np.arange(m), -counts))  # descending count, ties by index

    filled = values.copy()
    for j in range(m):
        filled[~observed[:, j], j] = means[j]

    coef = np.zeros((m, m + 1))
    sweeps_run = 0
    for _ in range(sweeps):
        sweeps_run += 1
        max_change = 0.0
        for j in order:
            others = [c for c in range(m) if c != j]
            rows = observed[:, j]
            beta = _ridge_fit(filled[rows][:, others], values[rows, j], ridge)
            coef[j, 0] = beta[0]
            coef[j, 1 + np.array(others)] = beta[1:]
            missing_rows = ~rows
            if missing_rows.any():
                pred = coef[j, 0] + filled[missing_rows][:, others] @ beta[1:]
                max_change = max(max_change, float(np.max(np.abs(pred - filled[missing_rows, j]))))
                filled[missing_rows, j] = pred
        if max_change < tol:
            break
    return ImputerState(
        column_names=list(column_names),
        means=means,
        coef=coef,
        order=np.asarray(order),
        ridge=ridge,
        sweeps_run=sweeps_run,
        tol=tol,
    )


def impute(state: ImputerState, values) -> np.ndarray:
    """Fill missing cells with the stored chained regressions (single pass).

    Row-independent: each row's fill depends only on that row and the
    fitted state, so batch composition cannot change results. Fully
    observed rows pass through bit-identically.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(1, -1)
    m = state.means.size
    if values.shape[1] != m:
        raise PreconditionError(f"expected {m} columns, got {values.shape[1]}")
    out = values.copy()
    missing = np.isnan(out)
    if not missing.any():
        return out
    for j in range(m):
        out[missing[:, j], j] = state.means[j]
    for j in state.order:
        # per-row dot products: identical bits whatever the batch shape
        for r in np.flatnonzero(missing[:, j]):
            out[r, j] = state.coef[j, 0] + float(np.dot(out[r], state.coef[j, 1:]))
    return out


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass
class StandardizerState:
    column_names: list
    means: np.ndarray
    stds: np.ndarray  # sample std (ddof=1), floored at STD_FLOOR


def fit_standardizer(values, column_names=None) -> StandardizerState:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise PreconditionError("standardizer expects finite values (impute first)")
    n, m = values.shape
    if column_names is None:
        column_names = [f"col{j}" for j in range(m)]
    means = values.mean(axis=0)
    stds = values.std(axis=0, ddof=1) if n > 1 else np.zeros(m)
    return StandardizerState(list(column_names), means, np.maximum(stds, STD_FLOOR))


def standardize(state: StandardizerState, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != state.means.size:
        raise PreconditionError(f"expected {state.means.size} columns, got {values.shape[-1]}")
    return (values - state.means) / state.stds


# ---------------------------------------------------------------------------
# state files (versioned keyed text, re-appliable to external data)
# ---------------------------------------------------------------------------

def save_imputer(state: ImputerState, path) -> None:
    pairs = {
        "format_version": "1",
        "kind": "imputer",
        "columns": ",".join(state.column_names),
        "means": fmt_float_list(state.means),
        "order": ",".join(str(int(i)) for i in state.order),
        "ridge": repr(state.ridge),
        "sweeps_run": str(state.sweeps_run),
        "tol": repr(state.tol),
    }
    for j in range(state.coef.shape[0]):
        pairs[f"coef_{j}"] = fmt_float_list(state.coef[j])
    write_keyed(path, pairs)


def load_imputer(path) -> ImputerState:
    pairs = read_keyed(path)
    if pairs.get("kind") != "imputer":
        raise DataFormatError(f"{path}: not an imputer state file")
    columns = pairs["columns"].split(",")
    m = len(columns)
    coef = np.vstack([parse_float_list(pairs[f"coef_{j}"]) for j in range(m)])
    return ImputerState(
        column_names=columns,
        means=parse_float_list(pairs["means"]),
        coef=coef,
        order=np.array([int(t) for t in pairs["order"].split(",")]),
        ridge=float(pairs["ridge"]),
        sweeps_run=int(pairs["sweeps_run"]),
        tol=float(pairs["tol"]),
    )


def save_standardizer(state: StandardizerState, path) -> None:
    write_keyed(path, {
        "format_version": "1",
        "kind": "standardizer",
        "columns": ",".join(state.column_names),
        "means": fmt_float_list(state.means),
        "stds": fmt_float_list(state.stds),
    })


def load_standardizer(path) -> StandardizerState:
    pairs = read_keyed(path)
    if pairs.get("kind") != "standardizer":
        raise DataFormatError(f"{path}: not a standardizer state file")
    return StandardizerState(
        column_names=pairs["columns"].split(","),
        means=parse_float_list(pairs["means"]),
        stds=parse_float_list(pairs["stds"]),
    )
