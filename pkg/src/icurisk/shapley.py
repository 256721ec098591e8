"""Exact Shapley attribution for boosted tree ensembles.

The value function is the tree-path conditional expectation: descending
a tree, a feature inside the conditioning set follows the sample's
branch, while a feature outside it averages both children weighted by
their training covers (summed hessians). Attributions are in margin
(log-odds) units, where additivity is exact: for every sample,
base_value + sum(phi) equals the predicted margin.

Two independent implementations are provided. `tree_shap` runs the
polynomial-time path algorithm (per unique feature path, extending and
unwinding weight polynomials). `brute_force_shap` evaluates the value
function on every feature subset and applies the Shapley formula
directly; it is exponential in the feature count and exists to verify
the fast path, so it is capped at 20 features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .boosting import BoostedEnsemble, GbdtParams, class_weights, expand_class_weights, train_gbdt
from .errors import DataFormatError, PreconditionError
from .util import rng_for

_NOISE_TAG = 303
_NOISE_COLUMN = "noise_gaussian"
_BRUTE_FORCE_MAX_FEATURES = 20


@dataclass
class Attribution:
    base_value: float
    phi: np.ndarray  # margin units, one entry per feature column
    row_id: str | None = None

    @property
    def total(self) -> float:
        return self.base_value + float(self.phi.sum())


@dataclass
class HorizonRanking:
    horizon: int
    entries: list  # [(column name, mean |phi|)], non-increasing

    def top(self, k: int) -> list:
        return [name for name, _ in self.entries[:k]]

    def rank_of(self, name: str) -> int:
        for i, (n, _) in enumerate(self.entries, start=1):
            if n == name:
                return i
        raise PreconditionError(f"column {name!r} not in ranking")


# ---------------------------------------------------------------------------
# polynomial-time path algorithm (numba kernels)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _extend(d, z, o, w, ud, pz, po, pi):
    d[ud] = pi
    z[ud] = pz
    o[ud] = po
    w[ud] = 1.0 if ud == 0 else 0.0
    for i in range(ud - 1, -1, -1):
        w[i + 1] += po * w[i] * (i + 1.0) / (ud + 1.0)
        w[i] = pz * w[i] * (ud - i) / (ud + 1.0)


@njit(cache=True)
def _unwind(d, z, o, w, ud, k):
    one = o[k]
    zero = z[k]
    nxt = w[ud]
    for i in range(ud - 1, -1, -1):
        if one != 0.0:
            tmp = w[i]
            w[i] = nxt * (ud + 1.0) / ((i + 1.0) * one)
            nxt = tmp - w[i] * zero * (ud - i) / (ud + 1.0)
        else:
            w[i] = w[i] * (ud + 1.0) / (zero * (ud - i))
    for i in range(k, ud):
        d[i] = d[i + 1]
        z[i] = z[i + 1]
        o[i] = o[i + 1]


@njit(cache=True)
def _unwound_sum(z, o, w, ud, k):
    one = o[k]
    zero = z[k]
    nxt = w[ud]
    total = 0.0
    for i in range(ud - 1, -1, -1):
        if one != 0.0:
            tmp = nxt * (ud + 1.0) / ((i + 1.0) * one)
            total += tmp
            nxt = w[i] - tmp * zero * (ud - i) / (ud + 1.0)
        else:
            total += w[i] * (ud + 1.0) / (zero * (ud - i))
    return total


@njit(cache=True)
def _shap_one(feature, threshold, missing_left, left, right, cover, value,
              x, phi, scale, max_depth):
    maxlen = max_depth + 2
    cap = max_depth + 4
    st_node = np.empty(cap, np.int64)
    st_plen = np.empty(cap, np.int64)
    st_pz = np.empty(cap, np.float64)
    st_po = np.empty(cap, np.float64)
    st_pi = np.empty(cap, np.int64)
    st_d = np.empty((cap, maxlen), np.int64)
    st_z = np.empty((cap, maxlen), np.float64)
    st_o = np.empty((cap, maxlen), np.float64)
    st_w = np.empty((cap, maxlen), np.float64)
    d = np.empty(maxlen, np.int64)
    z = np.empty(maxlen, np.float64)
    o = np.empty(maxlen, np.float64)
    w = np.empty(maxlen, np.float64)

    st_node[0] = 0
    st_plen[0] = 0
    st_pz[0] = 1.0
    st_po[0] = 1.0
    st_pi[0] = -1
    top = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        plen = st_plen[top]
        pz = st_pz[top]
        po = st_po[top]
        pi = st_pi[top]
        for i in range(plen):
            d[i] = st_d[top, i]
            z[i] = st_z[top, i]
            o[i] = st_o[top, i]
            w[i] = st_w[top, i]
        ud = plen
        _extend(d, z, o, w, ud, pz, po, pi)
        f = feature[node]
        if f < 0:
            leaf = value[node] * scale
            for i in range(1, ud + 1):
                s = _unwound_sum(z, o, w, ud, i)
                phi[d[i]] += s * (o[i] - z[i]) * leaf
        else:
            xv = x[f]
            if np.isnan(xv):
                goleft = missing_left[node]
            else:
                goleft = xv < threshold[node]
            if goleft:
                hot, cold = left[node], right[node]
            else:
                hot, cold = right[node], left[node]
            iz = 1.0
            io = 1.0
            ud2 = ud
            k = -1
            for i in range(1, ud2 + 1):
                if d[i] == f:
                    k = i
                    break
            if k >= 0:
                iz = z[k]
                io = o[k]
                _unwind(d, z, o, w, ud2, k)
                ud2 -= 1
            rj = cover[node]
            # cold child: the sample never goes this way, one_fraction = 0
            st_node[top] = cold
            st_plen[top] = ud2 + 1
            st_pz[top] = iz * cover[cold] / rj
            st_po[top] = 0.0
            st_pi[top] = f
            for i in range(ud2 + 1):
                st_d[top, i] = d[i]
                st_z[top, i] = z[i]
                st_o[top, i] = o[i]
                st_w[top, i] = w[i]
            top += 1
            st_node[top] = hot
            st_plen[top] = ud2 + 1
            st_pz[top] = iz * cover[hot] / rj
            st_po[top] = io
            st_pi[top] = f
            for i in range(ud2 + 1):
                st_d[top, i] = d[i]
                st_z[top, i] = z[i]
                st_o[top, i] = o[i]
                st_w[top, i] = w[i]
            top += 1


@njit(cache=True)
def _shap_batch(feature, threshold, missing_left, left, right, cover, value,
                x_mat, phi_mat, scale, max_depth):
    for r in range(x_mat.shape[0]):
        _shap_one(feature, threshold, missing_left, left, right, cover, value,
                  x_mat[r], phi_mat[r], scale, max_depth)


def _tree_depth(tree) -> int:
    depth = np.zeros(tree.n_nodes, dtype=np.int64)
    out = 0
    for i in range(tree.n_nodes):  # children always appear after their parent
        if tree.feature[i] >= 0:
            depth[tree.left[i]] = depth[i] + 1
            depth[tree.right[i]] = depth[i] + 1
        else:
            out = max(out, int(depth[i]))
    return out


def _empty_set_value(tree) -> float:
    """Cover-weighted expectation of the tree output (no features conditioned)."""
    def rec(i):
        if tree.feature[i] < 0:
            return float(tree.value[i])
        li, ri = int(tree.left[i]), int(tree.right[i])
        return (tree.cover[li] * rec(li) + tree.cover[ri] * rec(ri)) / tree.cover[i]
    return rec(0)


def _check_model(model: BoostedEnsemble) -> None:
    for t, tree in enumerate(model.trees):
        if not tree.cover[0] > 0:
            raise DataFormatError(f"corrupt model: tree {t} has non-positive root cover")


def ensemble_base_value(model: BoostedEnsemble) -> float:
    _check_model(model)
    return model.base_score + model.eta * sum(_empty_set_value(t) for t in model.trees)


def attribute_rows(model: BoostedEnsemble, values) -> tuple:
    """(phi matrix, base value) for a batch of rows, margin units."""
    x = np.ascontiguousarray(values, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise PreconditionError(f"expected (n, {model.n_features}) values")
    _check_model(model)
    phi = np.zeros((x.shape[0], model.n_features))
    for tree in model.trees:
        _shap_batch(tree.feature, tree.threshold, tree.missing_left, tree.left,
                    tree.right, tree.cover, tree.value, x, phi,
                    model.eta, _tree_depth(tree))
    return phi, ensemble_base_value(model)


def tree_shap(model: BoostedEnsemble, sample, row_id: str | None = None) -> Attribution:
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim != 1 or sample.size != model.n_features:
        raise PreconditionError(f"expected a sample of {model.n_features} features")
    phi, base = attribute_rows(model, sample.reshape(1, -1))
    return Attribution(base_value=base, phi=phi[0], row_id=row_id)


# ---------------------------------------------------------------------------
# brute-force subset enumeration (verification oracle)
# ---------------------------------------------------------------------------

def _tree_mask_values(tree, x, masks) -> np.ndarray:
    """Value function over every conditioning set encoded as a bitmask."""
    def rec(i):
        if tree.feature[i] < 0:
            return np.full(masks.size, float(tree.value[i]))
        f = int(tree.feature[i])
        li, ri = int(tree.left[i]), int(tree.right[i])
        vl, vr = rec(li), rec(ri)
        xv = x[f]
        goleft = bool(tree.missing_left[i]) if math.isnan(xv) else bool(xv < tree.threshold[i])
        hot = vl if goleft else vr
        blend = (tree.cover[li] * vl + tree.cover[ri] * vr) / tree.cover[i]
        return np.where((masks >> f) & 1 == 1, hot, blend)
    return rec(0)


def brute_force_shap(model: BoostedEnsemble, sample, row_id: str | None = None) -> Attribution:
    """Shapley values by direct subset enumeration of the same value function.

    phi_i = sum over S not containing i of |S|! (M-|S|-1)! / M! times
    [v(S + i) - v(S)], with M the full feature count. Capped at 20
    features (2^M subsets).
    """
    m = model.n_features
    if m > _BRUTE_FORCE_MAX_FEATURES:
        raise PreconditionError(f"brute_force_shap is capped at {_BRUTE_FORCE_MAX_FEATURES} features, got {m}")
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 1 or x.size != m:
        raise PreconditionError(f"expected a sample of {m} features")
    _check_model(model)
    masks = np.arange(1 << m, dtype=np.int64)
    popcount = np.zeros(masks.size, dtype=np.int64)
    for b in range(m):
        popcount += (masks >> b) & 1
    fact = [math.factorial(i) for i in range(m + 1)]
    weight_by_size = np.array([fact[s] * fact[m - 1 - s] / fact[m] for s in range(m)])

    v = np.full(masks.size, model.base_score)
    for tree in model.trees:
        v = v + model.eta * _tree_mask_values(tree, x, masks)

    phi = np.zeros(m)
    for i in range(m):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = float(np.sum(weight_by_size[popcount[without]] * (v[without | bit] - v[without])))
    return Attribution(base_value=float(v[0]), phi=phi, row_id=row_id)


# ---------------------------------------------------------------------------
# rankings and robustness
# ---------------------------------------------------------------------------

def rank_features(model: BoostedEnsemble, values, column_names, horizon: int) -> HorizonRanking:
    """Columns ordered by mean |phi| over the evaluation rows (ties by name)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise PreconditionError("need a non-empty (n, m) evaluation matrix")
    if len(column_names) != model.n_features:
        raise PreconditionError("column names must match the model arity")
    phi, _ = attribute_rows(model, values)
    mean_abs = np.mean(np.abs(phi), axis=0)
    entries = sorted(zip(column_names, mean_abs.tolist()), key=lambda e: (-e[1], e[0]))
    return HorizonRanking(horizon=horizon, entries=entries)


@dataclass
class PerturbationRepeat:
    noise_rank: int
    noise_mean_abs_phi: float
    top_jaccard: float


@dataclass
class PerturbationReport:
    top_k: int
    repeats: list = field(default_factory=list)
    baseline_top: list = field(default_factory=list)
    noise_column: str = _NOISE_COLUMN

    def noise_ever_in_top(self) -> bool:
        return any(r.noise_rank <= self.top_k for r in self.repeats)

    def min_jaccard(self) -> float:
        return min(r.top_jaccard for r in self.repeats)

    def as_dict(self) -> dict:
        return {
            "top_k": self.top_k,
            "noise_column": self.noise_column,
            "baseline_top": self.baseline_top,
            "repeats": [
                {"noise_rank": r.noise_rank, "noise_mean_abs_phi": r.noise_mean_abs_phi,
                 "top_jaccard": r.top_jaccard}
                for r in self.repeats
            ],
        }


def perturbation_test(values, labels, column_names, params: GbdtParams, seed: int,
                      repeats: int, top_k: int = 5, horizon: int = 0) -> PerturbationReport:
    """Retrain with an appended standard-normal column and track rank shifts.

    Reports, per repeat, the noise column's rank and the Jaccard overlap
    of the top-k column sets before and after the perturbation.
    """
    if repeats < 1:
        raise PreconditionError(f"repeats must be >= 1, got {repeats}")
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    names = list(column_names)
    if _NOISE_COLUMN in names:
        raise PreconditionError(f"column {_NOISE_COLUMN!r} already present")
    weights = expand_class_weights(labels, class_weights(labels))

    base_model = train_gbdt(values, labels, weights, params, seed=seed)
    base_rank = rank_features(base_model, values, names, horizon)
    base_top = set(base_rank.top(top_k))

    report = PerturbationReport(top_k=top_k, baseline_top=sorted(base_top))
    for r in range(repeats):
        noise = rng_for(seed, _NOISE_TAG, r).standard_normal(values.shape[0])
        x2 = np.column_stack([values, noise])
        names2 = names + [_NOISE_COLUMN]
        model2 = train_gbdt(x2, labels, weights, params, seed=seed)
        rank2 = rank_features(model2, x2, names2, horizon)
        top2 = set(rank2.top(top_k))
        jaccard = len(base_top & top2) / len(base_top | top2)
        noise_rank = rank2.rank_of(_NOISE_COLUMN)
        noise_phi = dict(rank2.entries)[_NOISE_COLUMN]
        report.repeats.append(PerturbationRepeat(
            noise_rank=noise_rank,
            noise_mean_abs_phi=noise_phi,
            top_jaccard=jaccard,
        ))
    return report


def horizon_sweep_rankings(cohort, horizons, params: GbdtParams, **pipeline_kwargs) -> list:
    """Full pipeline (window, preprocess, train, rank) per horizon."""
    from .pipeline import sweep_rankings  # deferred: pipeline composes this module
    return sweep_rankings(cohort, horizons, params, **pipeline_kwargs)
