import numpy as np
import pytest

from icurisk.boosting import GbdtParams
from icurisk.cohort import PatientStay, eicu_like_spec, generate_cohort


def make_stay(stay_id="s1", age=67.0, sex="male", ethnicity=None, ventilated=False,
              los=1800, died=False, event_time=None, series=None, extras=None):
    """Hand-built stay; series maps variable -> list of (t, value)."""
    built = {}
    for var, points in (series or {}).items():
        times = np.array([t for t, _ in points], dtype=np.int64)
        values = np.array([v for _, v in points], dtype=np.float64)
        built[var] = (times, values)
    return PatientStay(
        stay_id=stay_id,
        age=age,
        sex=sex,
        ethnicity=ethnicity,
        ventilated=ventilated,
        los=los,
        died=died,
        event_time=los if event_time is None else event_time,
        series=built,
        static_extras=dict(extras or {}),
    )


@pytest.fixture(scope="session")
def medium_spec():
    return eicu_like_spec(n_stays=1500, rng_seed=5)


@pytest.fixture(scope="session")
def medium_cohort(medium_spec):
    return generate_cohort(medium_spec)


@pytest.fixture(scope="session")
def tiny_cohort():
    return generate_cohort(eicu_like_spec(n_stays=120, rng_seed=3))


@pytest.fixture(scope="session")
def fast_params():
    return GbdtParams(max_depth=3, rounds=60)
