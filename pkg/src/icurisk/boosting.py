"""Second-order gradient-boosted regression trees for binary log-loss.

Trees are grown by exact greedy search over sorted unique feature
values (no histogram binning). Each boosting round fits one tree to the
weighted first/second-order gradients of the log-loss at the current
margins:

    g = w * (p - y),   h = w * p * (1 - p),   p = sigmoid(margin)

Split gain is the regularized second-order reduction

    0.5 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma

and leaf weights are -G/(H+lambda). Rows with a missing value for the
split feature follow a learned default direction: both routings are
scored and the better one is kept (ties go left, which is also the
default when a node saw no missing values). The final margin is

    base_score + eta * sum of tree leaf values.

Ties in split gain resolve to the lowest feature index, then the lowest
threshold, so training is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DataFormatError, NumericError, PreconditionError
from .util import rng_for, sigmoid

_SUBSAMPLE_TAG = 606
_PROB_EPS = 1e-6
_LOG_EPS = 1e-15


@dataclass(frozen=True)
class GbdtParams:
    max_depth: int = 4
    rounds: int = 200
    eta: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    subsample: float = 1.0

    def validate(self) -> None:
        if self.max_depth < 0:
            raise PreconditionError("max_depth must be >= 0")
        if self.rounds < 0:
            raise PreconditionError("rounds must be >= 0")
        if not (0.0 < self.eta <= 1.0):
            raise PreconditionError("eta must lie in (0, 1]")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise PreconditionError("reg_lambda and gamma must be >= 0")
        if self.min_child_weight < 0:
            raise PreconditionError("min_child_weight must be >= 0")
        if not (0.0 < self.subsample <= 1.0):
            raise PreconditionError("subsample must lie in (0, 1]")


@dataclass
class Tree:
    """Flat node arrays; feature < 0 marks a leaf."""

    feature: np.ndarray  # i4
    threshold: np.ndarray  # f8
    missing_left: np.ndarray  # bool
    left: np.ndarray  # i4
    right: np.ndarray  # i4
    value: np.ndarray  # f8 (leaf weight; 0 on internal nodes)
    cover: np.ndarray  # f8 summed hessian at node

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass
class BoostedEnsemble:
    trees: list
    base_score: float
    eta: float
    n_features: int
    params: GbdtParams
    seed: int
    train_loss: list = field(default_factory=list)  # weighted log-loss after each round


def class_weights(labels) -> dict:
    """Inverse-frequency weights n / (2 * n_c); weighted class masses are equal."""
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise PreconditionError("labels must be 0/1")
    n = labels.size
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == n:
        raise PreconditionError("class_weights needs both classes present")
    return {0: n / (2.0 * (n - n_pos)), 1: n / (2.0 * n_pos)}


def expand_class_weights(labels, weight_map: dict) -> np.ndarray:
    labels = np.asarray(labels)
    return np.where(labels == 1, weight_map[1], weight_map[0]).astype(np.float64)


class _TreeBuilder:
    def __init__(self):
        self.feature = []
        self.threshold = []
        self.missing_left = []
        self.left = []
        self.right = []
        self.value = []
        self.cover = []

    def new_node(self) -> int:
        for lst, fill in ((self.feature, -1), (self.threshold, 0.0), (self.missing_left, True),
                          (self.left, -1), (self.right, -1), (self.value, 0.0), (self.cover, 0.0)):
            lst.append(fill)
        return len(self.feature) - 1

    def done(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            missing_left=np.array(self.missing_left, dtype=bool),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            value=np.array(self.value, dtype=np.float64),
            cover=np.array(self.cover, dtype=np.float64),
        )


def _best_split(x, g, h, g_sum, h_sum, prm: GbdtParams):
    """Best (gain, threshold, missing_left) for one feature at one node."""
    present = ~np.isnan(x)
    xp = x[present]
    if xp.size < 2:
        return None
    order = np.argsort(xp, kind="mergesort")
    xs = xp[order]
    if xs[0] == xs[-1]:
        return None
    gm = float(g[~present].sum())
    hm = float(h[~present].sum())
    cg = np.cumsum(g[present][order])
    ch = np.cumsum(h[present][order])
    cut = np.flatnonzero(xs[:-1] < xs[1:])
    thresholds = 0.5 * (xs[cut] + xs[cut + 1])
    lam, mcw = prm.reg_lambda, prm.min_child_weight
    parent_term = g_sum * g_sum / (h_sum + lam)

    best = None
    for missing_left in (True, False):
        gl = cg[cut] + (gm if missing_left else 0.0)
        hl = ch[cut] + (hm if missing_left else 0.0)
        gr = g_sum - gl
        hr = h_sum - hl
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_term) - prm.gamma
        gain[(hl < mcw) | (hr < mcw)] = -np.inf
        if gain.size == 0:
            continue
        k = int(np.argmax(gain))  # first maximum: lowest threshold wins ties
        if best is None or gain[k] > best[0]:
            best = (float(gain[k]), float(thresholds[k]), missing_left)
    return best


def _grow_tree(x_mat, g, h, rows, prm: GbdtParams, leaf_out):
    builder = _TreeBuilder()
    root = builder.new_node()
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        sub = x_mat[idx]
        gi = g[idx]
        hi = h[idx]
        g_sum = float(gi.sum())
        h_sum = float(hi.sum())
        builder.cover[node] = h_sum
        best = None
        if depth < prm.max_depth:
            for f in range(x_mat.shape[1]):
                cand = _best_split(sub[:, f], gi, hi, g_sum, h_sum, prm)
                if cand is not None and cand[0] > 0.0 and (best is None or cand[0] > best[1][0]):
                    best = (f, cand)
        if best is None:
            weight = -g_sum / (h_sum + prm.reg_lambda)
            builder.value[node] = weight
            leaf_out[idx] = weight
            continue
        f, (gain, threshold, missing_left) = best
        xv = sub[:, f]
        with np.errstate(invalid="ignore"):
            go_left = np.where(np.isnan(xv), missing_left, xv < threshold)
        builder.feature[node] = f
        builder.threshold[node] = threshold
        builder.missing_left[node] = missing_left
        left = builder.new_node()
        right = builder.new_node()
        builder.left[node] = left
        builder.right[node] = right
        stack.append((right, idx[~go_left], depth + 1))
        stack.append((left, idx[go_left], depth + 1))
    return builder.done()


def _weighted_logloss(p, y, w):
    p = np.clip(p, _LOG_EPS, 1.0 - _LOG_EPS)
    ll = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(w * ll) / np.sum(w))


def train_gbdt(values, labels, sample_weights=None, params: GbdtParams | None = None,
               seed: int = 0, valid_set=None, early_stopping_rounds: int = 0) -> BoostedEnsemble:
    """Boost for `params.rounds` rounds (the default path has no stopping rule).

    Pass `valid_set=(x, y)` with `early_stopping_rounds > 0` to stop
    once validation log-loss has not improved for that many rounds; the
    ensemble is truncated at the best round.
    """
    params = params or GbdtParams()
    params.validate()
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise PreconditionError("values must be (n, m) aligned with labels")
    if x.shape[0] < 2:
        raise PreconditionError("need at least 2 rows")
    if not np.all((y == 0) | (y == 1)):
        raise PreconditionError("labels must be 0/1")
    with np.errstate(invalid="ignore"):
        if np.any(np.isinf(x)):
            raise PreconditionError("feature values must be finite or missing (NaN)")
    w = np.ones(y.size) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    if w.shape != y.shape or not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise PreconditionError("sample weights must be positive and finite")

    x_val = y_val = None
    if valid_set is not None:
        x_val = np.asarray(valid_set[0], dtype=np.float64)
        y_val = np.asarray(valid_set[1], dtype=np.float64)
        if x_val.ndim != 2 or x_val.shape[1] != x.shape[1] or x_val.shape[0] != y_val.size:
            raise PreconditionError("validation set must match the training arity")

    with np.errstate(over="ignore", invalid="ignore"):
        p0 = float(np.clip(np.sum(w * y) / np.sum(w), _PROB_EPS, 1.0 - _PROB_EPS))
    if not math.isfinite(p0):
        raise NumericError("sample weights overflow the weighted prevalence")
    base_score = float(np.log(p0 / (1.0 - p0)))
    margin = np.full(y.size, base_score)
    trees = []
    train_loss = [_weighted_logloss(sigmoid(margin), y, w)]
    best_round = 0
    val_margin = best_val = None
    if x_val is not None:
        w_val = np.ones(y_val.size)
        val_margin = np.full(y_val.size, base_score)
        best_val = _weighted_logloss(sigmoid(val_margin), y_val, w_val)

    n = y.size
    all_rows = np.arange(n)
    for r in range(params.rounds):
        p = sigmoid(margin)
        with np.errstate(over="ignore"):  # overflow surfaces as the check below
            g = w * (p - y)
            h = w * p * (1.0 - p)
            finite = bool(np.all(np.isfinite(g)) and np.all(np.isfinite(h)))
        if not finite:
            raise NumericError(f"non-finite gradient at round {r}")
        if params.subsample < 1.0:
            take = max(2, int(round(params.subsample * n)))
            rows = np.sort(rng_for(seed, _SUBSAMPLE_TAG, r).permutation(n)[:take])
        else:
            rows = all_rows
        leaf = np.zeros(n)
        tree = _grow_tree(x, g, h, rows, params, leaf)
        if params.subsample < 1.0:
            # rows left out of the subsample still need their leaf value
            leaf = _tree_leaf_values(tree, x)
        trees.append(tree)
        margin = margin + params.eta * leaf
        train_loss.append(_weighted_logloss(sigmoid(margin), y, w))
        if x_val is not None:
            val_margin = val_margin + params.eta * _tree_leaf_values(tree, x_val)
            val_loss = _weighted_logloss(sigmoid(val_margin), y_val, w_val)
            if val_loss < best_val:
                best_val = val_loss
                best_round = r + 1
            elif early_stopping_rounds and (r + 1) - best_round >= early_stopping_rounds:
                trees = trees[:best_round]
                train_loss = train_loss[: best_round + 1]
                break

    return BoostedEnsemble(
        trees=trees,
        base_score=base_score,
        eta=params.eta,
        n_features=x.shape[1],
        params=params,
        seed=seed,
        train_loss=train_loss,
    )


def _tree_leaf_values(tree: Tree, x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    idx = np.zeros(n, dtype=np.int64)
    while True:
        feat = tree.feature[idx]
        active = feat >= 0
        if not active.any():
            break
        rows = np.flatnonzero(active)
        xv = x[rows, feat[active]]
        node = idx[rows]
        with np.errstate(invalid="ignore"):
            go_left = np.where(np.isnan(xv), tree.missing_left[node], xv < tree.threshold[node])
        idx[rows] = np.where(go_left, tree.left[node], tree.right[node])
    return tree.value[idx]


def predict_margin(model: BoostedEnsemble, values) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    if x.shape[1] != model.n_features:
        raise PreconditionError(f"expected {model.n_features} features, got {x.shape[1]}")
    margin = np.full(x.shape[0], model.base_score)
    for tree in model.trees:
        margin = margin + model.eta * _tree_leaf_values(tree, x)
    return margin[0] if single else margin


def predict(model: BoostedEnsemble, values) -> np.ndarray:
    return sigmoid(predict_margin(model, values))


# ---------------------------------------------------------------------------
# model files: versioned JSON tree dump
# ---------------------------------------------------------------------------

def _node_to_dict(tree: Tree, i: int) -> dict:
    if tree.feature[i] < 0:
        return {"leaf": float(tree.value[i]), "cover": float(tree.cover[i])}
    return {
        "feature": int(tree.feature[i]),
        "threshold": float(tree.threshold[i]),
        "missing_left": bool(tree.missing_left[i]),
        "cover": float(tree.cover[i]),
        "left": _node_to_dict(tree, int(tree.left[i])),
        "right": _node_to_dict(tree, int(tree.right[i])),
    }


def _node_from_dict(node: dict, builder: _TreeBuilder) -> int:
    i = builder.new_node()
    builder.cover[i] = float(node["cover"])
    if "leaf" in node:
        builder.value[i] = float(node["leaf"])
        return i
    builder.feature[i] = int(node["feature"])
    builder.threshold[i] = float(node["threshold"])
    builder.missing_left[i] = bool(node["missing_left"])
    builder.left[i] = _node_from_dict(node["left"], builder)
    builder.right[i] = _node_from_dict(node["right"], builder)
    return i


def save_model(model: BoostedEnsemble, path) -> None:
    doc = {
        "format_version": 1,
        "kind": "gbdt",
        "base_score": model.base_score,
        "eta": model.eta,
        "n_features": model.n_features,
        "seed": model.seed,
        "params": asdict(model.params),
        "train_loss": list(model.train_loss),
        "trees": [_node_to_dict(t, 0) for t in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> BoostedEnsemble:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "gbdt":
        raise DataFormatError(f"{path}: not a boosted-ensemble model file")
    trees = []
    for node in doc["trees"]:
        builder = _TreeBuilder()
        _node_from_dict(node, builder)
        trees.append(builder.done())
    return BoostedEnsemble(
        trees=trees,
        base_score=float(doc["base_score"]),
        eta=float(doc["eta"]),
        n_features=int(doc["n_features"]),
        params=GbdtParams(**doc["params"]),
        seed=int(doc.get("seed", 0)),
        train_loss=[float(v) for v in doc["train_loss"]],
    )
