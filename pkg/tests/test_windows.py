import math

import numpy as np
import pytest

from icurisk.cohort import VariableManifest, apply_inclusion
from icurisk.errors import PreconditionError
from icurisk.windows import (WindowConfig, build_matrix, extract_window, load_matrix,
                             save_matrix, select_columns)

from conftest import make_stay


def test_two_point_window_mean_and_std():
    stay = make_stay(los=720, series={"hr": [(0, 2.0), (60, 4.0)]})
    out = extract_window(stay, WindowConfig(horizon=360))
    assert out["hr"]["mean"] == pytest.approx(3.0, abs=1e-12)
    # independent oracle: closed-form sample std of {2, 4}
    assert out["hr"]["std"] == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_single_point_window_reports_zero_std():
    stay = make_stay(los=720, series={"hr": [(0, 5.0)]})
    out = extract_window(stay, WindowConfig(horizon=360))
    assert out["hr"]["mean"] == 5.0
    assert out["hr"]["std"] == 0.0


def test_empty_window_is_missing():
    stay = make_stay(los=720, series={"hr": [(400, 5.0), (700, 6.0)]})
    out = extract_window(stay, WindowConfig(horizon=360))
    assert math.isnan(out["hr"]["mean"])
    assert math.isnan(out["hr"]["std"])


def test_window_endpoint_is_inclusive():
    stay = make_stay(los=720, series={"hr": [(360, 7.0)]})
    out = extract_window(stay, WindowConfig(horizon=360))
    assert out["hr"]["mean"] == 7.0  # point exactly at event_time - horizon


def test_event_before_horizon_rejected():
    stay = make_stay(los=200, event_time=200, series={"hr": [(0, 5.0)]})
    with pytest.raises(PreconditionError):
        extract_window(stay, WindowConfig(horizon=360))


def test_bad_config_rejected():
    with pytest.raises(PreconditionError):
        WindowConfig(horizon=0).validate()
    with pytest.raises(PreconditionError):
        WindowConfig(horizon=60, statistics=()).validate()
    with pytest.raises(PreconditionError):
        WindowConfig(horizon=60, statistics=("median",)).validate()


def _three_var_stays():
    series = {v: [(0, 1.0), (60, 2.0)] for v in ("a", "b", "c")}
    return [make_stay(stay_id=f"s{i}", series=series, los=1800) for i in range(4)]


def test_column_arity_three_vars_plus_statics():
    matrix = build_matrix(_three_var_stays(), WindowConfig(horizon=360), ["a", "b", "c"])
    # 3 variables x {mean, std} + age + sex + ventilated; no ethnicity recorded
    assert len(matrix.columns) == 9
    assert matrix.column_names[:2] == ["a_mean", "a_std"]
    assert matrix.column_names[6:] == ["age", "sex_male", "ventilated"]


def test_build_matrix_deterministic(medium_cohort, medium_spec):
    kept, _ = apply_inclusion(medium_cohort, 720)
    cfg = WindowConfig(horizon=720)
    variables = ["lactate", "sbp"]
    a = build_matrix(kept, cfg, variables, manifest=medium_spec.manifest())
    b = build_matrix(kept, cfg, variables, manifest=medium_spec.manifest())
    np.testing.assert_array_equal(a.values, b.values)
    assert a.column_names == b.column_names and a.row_ids == b.row_ids


def test_far_horizon_rows_subset_of_near(medium_cohort, medium_spec):
    variables = ["lactate"]
    rows = {}
    for h in (360, 1440):
        kept, _ = apply_inclusion(medium_cohort, h)
        rows[h] = set(build_matrix(kept, WindowConfig(horizon=h), variables).row_ids)
    assert rows[1440] <= rows[360]


def test_row_order_is_sorted_stay_id():
    stays = [make_stay(stay_id=s, series={"a": [(0, 1.0)]}) for s in ("s3", "s1", "s2")]
    matrix = build_matrix(stays, WindowConfig(horizon=360), ["a"])
    assert matrix.row_ids == ["s1", "s2", "s3"]


def test_empty_inputs_rejected():
    with pytest.raises(PreconditionError):
        build_matrix([], WindowConfig(horizon=360), ["a"])
    with pytest.raises(PreconditionError):
        build_matrix(_three_var_stays(), WindowConfig(horizon=360), [])


def test_ethnicity_one_hot_with_other_bucket():
    stays = [
        make_stay(stay_id="s1", ethnicity="caucasian", series={"a": [(0, 1.0)]}),
        make_stay(stay_id="s2", ethnicity="black", series={"a": [(0, 1.0)]}),
        make_stay(stay_id="s3", ethnicity="martian", series={"a": [(0, 1.0)]}),
    ]
    matrix = build_matrix(stays, WindowConfig(horizon=360), ["a"],
                          ethnicity_categories=["black", "caucasian"])
    names = matrix.column_names
    i_cauc, i_black, i_other = (names.index(n) for n in
                                ("ethnicity_caucasian", "ethnicity_black", "ethnicity_other"))
    assert matrix.values[0, i_cauc] == 1.0 and matrix.values[0, i_other] == 0.0
    assert matrix.values[1, i_black] == 1.0
    assert matrix.values[2, i_other] == 1.0  # unseen category falls in the bucket


def test_static_extras_become_columns():
    stays = [
        make_stay(stay_id="s1", series={"a": [(0, 1.0)]}, extras={"apache_iv": 60.0}),
        make_stay(stay_id="s2", series={"a": [(0, 1.0)]}),
    ]
    matrix = build_matrix(stays, WindowConfig(horizon=360), ["a"])
    col = matrix.column_names.index("apache_iv")
    assert matrix.values[0, col] == 60.0
    assert math.isnan(matrix.values[1, col])


def test_units_carried_from_manifest():
    manifest = VariableManifest([("a", "lab", "mmol/L")])
    matrix = build_matrix(_three_var_stays(), WindowConfig(horizon=360), ["a"], manifest=manifest)
    assert matrix.columns[0].units == "mmol/L"
    assert matrix.columns[1].units == "mmol/L"  # std keeps the native units


def test_window_nesting_counts_non_increasing():
    points = [(t, float(t)) for t in range(0, 1501, 100)]
    stay = make_stay(los=1500, series={"a": points})
    counts = []
    for h in (100, 400, 800, 1200):
        cutoff = stay.event_time - h
        counts.append(sum(1 for t, _ in points if t <= cutoff))
        out = extract_window(stay, WindowConfig(horizon=h))
        assert not math.isnan(out["a"]["mean"])
    assert counts == sorted(counts, reverse=True)


def test_shift_invariance():
    rng = np.random.default_rng(1)
    points = [(int(t), float(v)) for t, v in zip(range(0, 2000, 50), rng.normal(10, 3, 40))]
    stay = make_stay(los=2000, series={"a": points})
    cfg = WindowConfig(horizon=500)
    base = extract_window(stay, cfg)["a"]
    shifted_points = [(t, v + 17.5) for t, v in points]
    shifted = extract_window(make_stay(los=2000, series={"a": shifted_points}), cfg)["a"]
    assert shifted["mean"] == pytest.approx(base["mean"] + 17.5, abs=1e-9)
    assert shifted["std"] == pytest.approx(base["std"], rel=1e-12)


def test_select_columns_identity_and_subset():
    matrix = build_matrix(_three_var_stays(), WindowConfig(horizon=360), ["a", "b", "c"])
    full = select_columns(matrix, matrix.column_names)
    np.testing.assert_array_equal(full.values, matrix.values)
    sub = select_columns(matrix, ["b_mean", "age"])
    assert sub.column_names == ["b_mean", "age"]
    assert sub.row_ids == matrix.row_ids
    np.testing.assert_array_equal(sub.labels, matrix.labels)
    assert sub.group_tags == matrix.group_tags


def test_select_columns_unknown_name_listed():
    matrix = build_matrix(_three_var_stays(), WindowConfig(horizon=360), ["a"])
    with pytest.raises(PreconditionError, match="foo"):
        select_columns(matrix, ["a_mean", "foo"])


def test_matrix_roundtrip_with_missing(tmp_path, medium_cohort, medium_spec):
    kept, _ = apply_inclusion(medium_cohort[:200], 720)
    matrix = build_matrix(kept, WindowConfig(horizon=720), ["lactate", "sbp"],
                          manifest=medium_spec.manifest())
    path = tmp_path / "m.csv"
    save_matrix(matrix, path)
    back = load_matrix(path)
    assert back.row_ids == matrix.row_ids
    assert back.column_names == matrix.column_names
    assert back.columns == matrix.columns
    np.testing.assert_array_equal(back.labels, matrix.labels)
    assert back.group_tags == matrix.group_tags
    both_nan = np.isnan(back.values) & np.isnan(matrix.values)
    assert np.array_equal(back.values[~both_nan], matrix.values[~both_nan])
    assert np.isnan(matrix.values).sum() == np.isnan(back.values).sum()
