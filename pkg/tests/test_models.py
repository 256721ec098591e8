import math

import numpy as np
import pytest

from icurisk.boosting import (BoostedEnsemble, GbdtParams, Tree, class_weights,
                              expand_class_weights, load_model, predict, predict_margin,
                              save_model, train_gbdt)
from icurisk.errors import NumericError, PreconditionError
from icurisk.linear import predict_logistic, train_logistic
from icurisk.metrics import auroc
from icurisk.tuning import HyperGrid, grid_search
from icurisk.util import sigmoid


def make_stump(feature=0, threshold=0.0, left_value=-1.0, right_value=1.0,
               left_cover=0.5, right_cover=0.5, missing_left=True,
               n_features=1, base_score=0.0, eta=1.0):
    tree = Tree(
        feature=np.array([feature, -1, -1], dtype=np.int32),
        threshold=np.array([threshold, 0.0, 0.0]),
        missing_left=np.array([missing_left, True, True]),
        left=np.array([1, -1, -1], dtype=np.int32),
        right=np.array([2, -1, -1], dtype=np.int32),
        value=np.array([0.0, left_value, right_value]),
        cover=np.array([left_cover + right_cover, left_cover, right_cover]),
    )
    return BoostedEnsemble(trees=[tree], base_score=base_score, eta=eta,
                           n_features=n_features, params=GbdtParams(rounds=1), seed=0)


# ---------------------------------------------------------------------------
# class weights
# ---------------------------------------------------------------------------

def test_class_weights_arithmetic():
    labels = np.r_[np.ones(10), np.zeros(90)]
    w = class_weights(labels)
    assert w[1] == pytest.approx(5.0, abs=1e-12)
    assert w[0] == pytest.approx(100 / 180, abs=1e-12)


def test_class_weights_balanced_is_unit():
    w = class_weights(np.r_[np.ones(8), np.zeros(8)])
    assert w == {0: 1.0, 1: 1.0}


def test_class_weights_small_case():
    w = class_weights(np.array([1, 0, 0, 0]))
    assert w[1] == pytest.approx(2.0) and w[0] == pytest.approx(2.0 / 3.0)


def test_class_weights_equalize_mass():
    rng = np.random.default_rng(0)
    labels = (rng.random(137) < 0.23).astype(int)
    w = expand_class_weights(labels, class_weights(labels))
    assert w[labels == 1].sum() == pytest.approx(w[labels == 0].sum(), rel=1e-12)


def test_class_weights_single_class_rejected():
    with pytest.raises(PreconditionError):
        class_weights(np.ones(5))


# ---------------------------------------------------------------------------
# boosting
# ---------------------------------------------------------------------------

def test_zero_rounds_predicts_base_rate():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 3))
    y = (rng.random(50) < 0.3).astype(int)
    model = train_gbdt(x, y, params=GbdtParams(rounds=0))
    expected = sigmoid(model.base_score)
    np.testing.assert_allclose(predict(model, x), expected, atol=1e-15)
    assert model.base_score == pytest.approx(math.log(y.mean() / (1 - y.mean())), abs=1e-12)


def test_separable_1d_reaches_perfect_training_auroc():
    x = np.linspace(-1, 1, 40).reshape(-1, 1)
    y = (x[:, 0] > 0).astype(int)
    model = train_gbdt(x, y, params=GbdtParams(max_depth=1, rounds=10))
    assert auroc(predict(model, x), y) == 1.0


def test_all_positive_labels_push_probability_up():
    x = np.arange(10, dtype=np.float64).reshape(-1, 1)
    y = np.ones(10)
    model = train_gbdt(x, y, params=GbdtParams(max_depth=2, rounds=1))
    for tree in model.trees:
        leaves = tree.value[tree.feature < 0]
        assert np.all(leaves >= 0.0)
    base_rate = sigmoid(model.base_score)
    assert np.all(predict(model, x) > base_rate)


def test_stump_prediction_closed_form():
    model = make_stump(threshold=0.5, right_value=2.0)
    p = predict(model, np.array([[1.0]]))
    assert p[0] == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), abs=1e-15)
    assert p[0] == pytest.approx(0.8807970779778823, abs=1e-12)


def test_margin_zero_is_half():
    model = make_stump(left_value=0.0, right_value=0.0)
    assert predict(model, np.array([[3.0]]))[0] == 0.5


def test_missing_follows_default_direction():
    model = make_stump(threshold=0.0, missing_left=False)
    missing = predict(model, np.array([[np.nan]]))
    explicit_right = predict(model, np.array([[1.0]]))
    assert missing[0] == explicit_right[0]
    model_left = make_stump(threshold=0.0, missing_left=True)
    assert predict(model_left, np.array([[np.nan]]))[0] == predict(model_left, np.array([[-1.0]]))[0]


def test_predict_is_sigmoid_of_margin():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(60, 4))
    y = (rng.random(60) < 0.4).astype(int)
    model = train_gbdt(x, y, params=GbdtParams(max_depth=3, rounds=15))
    margins = predict_margin(model, x)
    np.testing.assert_allclose(predict(model, x), sigmoid(margins), atol=1e-12)


def test_training_loss_monotone():
    rng = np.random.default_rng(3)
    for trial in range(5):
        x = rng.normal(size=(80, 4))
        y = (rng.random(80) < 0.35).astype(int)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        w = expand_class_weights(y, class_weights(y))
        model = train_gbdt(x, y, w, GbdtParams(max_depth=3, rounds=25, eta=0.1, gamma=0.0))
        losses = model.train_loss
        assert all(losses[i + 1] <= losses[i] + 1e-12 for i in range(len(losses) - 1)), trial


def test_weight_scaling_invariance_at_zero_lambda():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(70, 3))
    y = (rng.random(70) < 0.4).astype(int)
    w = expand_class_weights(y, class_weights(y))
    base = GbdtParams(max_depth=3, rounds=8, reg_lambda=0.0, min_child_weight=0.25)
    scaled = GbdtParams(max_depth=3, rounds=8, reg_lambda=0.0, min_child_weight=1.0)
    m1 = train_gbdt(x, y, w, base)
    m2 = train_gbdt(x, y, 4.0 * w, scaled)  # power-of-two scale: float-exact
    for t1, t2 in zip(m1.trees, m2.trees):
        np.testing.assert_array_equal(t1.feature, t2.feature)
        np.testing.assert_array_equal(t1.threshold, t2.threshold)
        np.testing.assert_array_equal(t1.value, t2.value)
    np.testing.assert_array_equal(predict_margin(m1, x), predict_margin(m2, x))


def test_model_roundtrip_bit_for_bit(tmp_path):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(60, 5))
    x[rng.random(x.shape) < 0.1] = np.nan
    y = (rng.random(60) < 0.3).astype(int)
    if y.sum() == 0:
        y[0] = 1
    model = train_gbdt(x, y, params=GbdtParams(max_depth=4, rounds=12))
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    probe = rng.normal(size=(20, 5))
    probe[rng.random(probe.shape) < 0.2] = np.nan
    np.testing.assert_array_equal(predict_margin(model, probe), predict_margin(back, probe))
    assert back.params == model.params
    save_model(back, tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_constant_feature_never_split():
    rng = np.random.default_rng(6)
    x = np.column_stack([rng.normal(size=50), np.full(50, 7.0)])
    y = (x[:, 0] > 0).astype(int)
    model = train_gbdt(x, y, params=GbdtParams(max_depth=3, rounds=10))
    for tree in model.trees:
        used = tree.feature[tree.feature >= 0]
        assert 1 not in used


def test_arity_mismatch_rejected():
    model = make_stump()
    with pytest.raises(PreconditionError):
        predict(model, np.zeros((3, 2)))


def test_infinite_feature_rejected():
    x = np.array([[1.0], [np.inf]])
    with pytest.raises(PreconditionError):
        train_gbdt(x, np.array([0, 1]))


def test_overflowing_weights_abort():
    x = np.array([[0.0], [1.0], [0.0], [1.0]])
    y = np.array([0, 1, 0, 1])
    with pytest.raises(NumericError, match="overflow"):
        train_gbdt(x, y, np.full(4, 1e308), GbdtParams(rounds=2))


def test_early_stopping_truncates_at_best_round():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(120, 3))
    p = sigmoid(1.5 * x[:, 0])
    y = (rng.random(120) < p).astype(int)
    x_val = rng.normal(size=(60, 3))
    y_val = (rng.random(60) < sigmoid(1.5 * x_val[:, 0])).astype(int)
    full = train_gbdt(x, y, params=GbdtParams(max_depth=3, rounds=200, eta=0.3))
    stopped = train_gbdt(x, y, params=GbdtParams(max_depth=3, rounds=200, eta=0.3),
                         valid_set=(x_val, y_val), early_stopping_rounds=5)
    assert len(stopped.trees) < len(full.trees)
    # prefix property: the kept trees are the same ones the full run grew
    np.testing.assert_array_equal(stopped.trees[0].threshold, full.trees[0].threshold)


def test_early_stopping_off_by_default():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(50, 2))
    y = (rng.random(50) < 0.4).astype(int)
    y[0], y[1] = 0, 1
    model = train_gbdt(x, y, params=GbdtParams(max_depth=2, rounds=30),
                       valid_set=(x, y))  # validation tracked, no stopping
    assert len(model.trees) == 30


def test_subsample_deterministic():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(80, 3))
    y = (rng.random(80) < 0.4).astype(int)
    params = GbdtParams(max_depth=2, rounds=10, subsample=0.7)
    m1 = train_gbdt(x, y, params=params, seed=42)
    m2 = train_gbdt(x, y, params=params, seed=42)
    np.testing.assert_array_equal(predict_margin(m1, x), predict_margin(m2, x))


# ---------------------------------------------------------------------------
# logistic baseline
# ---------------------------------------------------------------------------

def test_logistic_independent_feature():
    x = np.array([[-1.0], [1.0], [-1.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    model = train_logistic(x, y)
    assert abs(model.weights[0]) < 1e-4
    assert model.intercept == pytest.approx(0.0, abs=1e-6)  # logit(0.5)


def test_logistic_weighted_intercept():
    x = np.array([[-1.0], [1.0], [-1.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    w = np.array([1.0, 1.0, 3.0, 3.0])
    model = train_logistic(x, y, w)
    assert model.intercept == pytest.approx(math.log(3.0), abs=1e-6)  # logit(6/8)


def test_logistic_duplicated_column_matches_single():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(120, 1))
    p = sigmoid(1.5 * x[:, 0] - 0.3)
    y = (rng.random(120) < p).astype(int)
    single = train_logistic(x, y)
    double = train_logistic(np.column_stack([x, x]), y)
    p1 = predict_logistic(single, x)
    p2 = predict_logistic(double, np.column_stack([x, x]))
    np.testing.assert_allclose(p1, p2, atol=1e-6)


def test_logistic_zero_feature_gets_zero_weight():
    rng = np.random.default_rng(9)
    x = np.column_stack([rng.normal(size=60), np.zeros(60)])
    y = (rng.random(60) < 0.5).astype(int)
    model = train_logistic(x, y)
    assert model.weights[1] == 0.0


def test_logistic_separation_warning():
    # under the tiny ridge a separable fit converges to a saturated optimum
    # instead of diverging; the warning flag must be raised either way
    x = np.linspace(-1, 1, 30).reshape(-1, 1)
    y = (x[:, 0] > 0).astype(int)
    model = train_logistic(x, y)
    assert model.separation_warning
    not_separable = train_logistic(x, np.array([0, 1] * 15))
    assert not not_separable.separation_warning


def test_logistic_rejects_missing_values():
    with pytest.raises(PreconditionError):
        train_logistic(np.array([[1.0], [np.nan]]), np.array([0, 1]))


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def _signal_data(n=120, seed=10):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    p = sigmoid(2.0 * x[:, 0])
    y = (rng.random(n) < p).astype(int)
    return x, y


def test_grid_single_point():
    x, y = _signal_data()
    grid = HyperGrid(max_depth=(2,), rounds=(20,), eta=(0.1,))
    result = grid_search(x, y, grid, k=3, seed=0)
    assert len(result.table) == 1
    assert len(result.table[0].fold_aurocs) == 3
    assert result.best == result.table[0].params


def test_grid_depth_matters_for_interactions():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(300, 2))
    y = ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(int)  # pure interaction
    grid = HyperGrid(max_depth=(1, 4), rounds=(40,), eta=(0.3,))
    result = grid_search(x, y, grid, k=3, seed=1)
    by_depth = {e.params.max_depth: e.mean for e in result.table}
    assert by_depth[4] >= by_depth[1]
    assert result.best.max_depth == 4


def test_grid_tie_breaks_to_fewer_rounds():
    # separable with a wide class gap: every configuration and fold reaches
    # AUROC 1.0, so the tie-break decides
    x = np.r_[np.linspace(-1, -0.5, 30), np.linspace(0.5, 1, 30)].reshape(-1, 1)
    y = (x[:, 0] > 0).astype(int)
    grid = HyperGrid(max_depth=(1,), rounds=(50, 10), eta=(0.3,))
    result = grid_search(x, y, grid, k=2, seed=2)
    means = {e.params.rounds: e.mean for e in result.table}
    assert means[10] == means[50] == 1.0
    assert result.best.rounds == 10
