"""Weighted logistic-regression baseline fitted by damped Newton steps."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, PreconditionError
from .util import sigmoid


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    iterations: int
    converged: bool
    separation_warning: bool


def _loss(a, y, w, beta, ridge):
    eta = a @ beta
    # log(1 + e^eta) - y*eta, computed stably
    ll = np.logaddexp(0.0, eta) - y * eta
    return float(np.sum(w * ll) + 0.5 * ridge * np.sum(beta[1:] ** 2))


def train_logistic(values, labels, sample_weights=None, ridge: float = 1e-8,
                   tol: float = 1e-8, max_iter: int = 100) -> LinearModel:
    """Minimize weighted log-loss; tiny ridge on slopes breaks collinear ties.

    Stops when the gradient norm drops below `tol`. Perfectly separable
    data never reaches that, so the iteration cap is hit and the model
    is returned with `separation_warning` set.
    """
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise PreconditionError("values must be (n, m) aligned with labels")
    if not np.all(np.isfinite(x)):
        raise PreconditionError("logistic baseline needs finite inputs (impute first)")
    if not np.all((y == 0) | (y == 1)):
        raise PreconditionError("labels must be 0/1")
    w = np.ones(y.size) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    if w.shape != y.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise PreconditionError("sample weights must be positive and finite")

    n, m = x.shape
    a = np.column_stack([np.ones(n), x])
    beta = np.zeros(m + 1)
    penalty = np.full(m + 1, ridge)
    penalty[0] = 0.0  # intercept is not penalized

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p = sigmoid(a @ beta)
        grad = a.T @ (w * (p - y)) + penalty * beta
        if float(np.linalg.norm(grad)) < tol:
            converged = True
            iterations -= 1
            break
        hw = w * p * (1.0 - p)
        hess = (a * hw[:, None]).T @ a
        hess[np.diag_indices_from(hess)] += penalty
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        # halve the step until the penalized loss stops increasing
        current = _loss(a, y, w, beta, ridge)
        scale = 1.0
        for _ in range(30):
            trial = beta - scale * step
            if _loss(a, y, w, trial, ridge) <= current:
                break
            scale *= 0.5
        beta = beta - scale * step

    # separated data either exhausts the iteration budget or, under the tiny
    # ridge, converges to a saturated fit with every probability pinned at its
    # label; flag both (a non-separated optimum always leaves some residual
    # of at least 0.5, so the threshold is not delicate)
    fitted = sigmoid(a @ beta)
    saturated = bool(np.max(np.abs(fitted - y)) < 1e-3)
    return LinearModel(
        weights=beta[1:].copy(),
        intercept=float(beta[0]),
        iterations=iterations,
        converged=converged,
        separation_warning=(not converged) or saturated,
    )


def predict_logistic(model: LinearModel, values) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    if x.shape[1] != model.weights.size:
        raise PreconditionError(f"expected {model.weights.size} features, got {x.shape[1]}")
    p = sigmoid(x @ model.weights + model.intercept)
    return p[0] if single else p


def save_logistic(model: LinearModel, path) -> None:
    doc = {
        "format_version": 1,
        "kind": "logistic",
        "weights": [float(v) for v in model.weights],
        "intercept": model.intercept,
        "iterations": model.iterations,
        "converged": model.converged,
        "separation_warning": model.separation_warning,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_logistic(path) -> LinearModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "logistic":
        raise DataFormatError(f"{path}: not a logistic model file")
    return LinearModel(
        weights=np.array(doc["weights"], dtype=np.float64),
        intercept=float(doc["intercept"]),
        iterations=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        separation_warning=bool(doc["separation_warning"]),
    )
