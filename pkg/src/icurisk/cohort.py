"""Patient-stay data model, synthetic cohort generation, and inclusion filters.

A cohort is a list of :class:`PatientStay`. Each stay carries static
attributes, a binary death outcome, an event time (death time for
non-survivors, discharge time for survivors), and per-variable
measurement series stored as parallel (times, values) arrays.

The synthetic generator draws, per stay and variable, a mean-reverting
Gaussian walk (stationary AR(1)) around a configured mean with the
configured marginal standard deviation. The death outcome follows a
logistic model on proximity-weighted averages of the standardized
series deviations: measurements taken close to the end of the stay are
up-weighted by a linear ramp, so deviations near the event carry more
of the mortality signal. That single mechanism yields cohorts where
(a) marginal variable means stay centered on their configured values,
(b) non-survivors drift toward the planted direction as the event
approaches, and (c) models predicting at short lead times see more
signal than models predicting far ahead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DataFormatError, PreconditionError
from .util import fmt_float, rng_for, sigmoid

MINUTES_PER_DAY = 1440
MIN_STAY_MINUTES = 300  # transient-stay floor, 5 hours

AGE_LOW = 18.0
AGE_HIGH = 89.0

REASON_AGE = "age bounds"
REASON_STAY = "insufficient stay length"
REASON_OBS = "no in-window measurements"

VARIABLE_CLASSES = ("vital", "lab")


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementPoint:
    """One timed observation of one variable, in native units."""

    variable_id: str
    time_offset: int  # minutes since ICU admission
    value: float


@dataclass
class PatientStay:
    stay_id: str
    age: float
    sex: str  # "male" / "female"
    ethnicity: str | None
    ventilated: bool
    diagnoses: frozenset = frozenset()
    los: int = 0  # minutes
    died: bool = False
    event_time: int = 0  # death time if died, discharge time otherwise
    series: dict = field(default_factory=dict)  # variable_id -> (times i8[], values f8[])
    static_extras: dict = field(default_factory=dict)  # name -> float

    def points(self, variable_id: str):
        times, values = self.series.get(variable_id, (np.empty(0, np.int64), np.empty(0, np.float64)))
        return times, values

    def validate(self) -> None:
        if self.event_time > self.los:
            raise DataFormatError(f"stay {self.stay_id}: event_time {self.event_time} exceeds los {self.los}")
        for var, (times, values) in self.series.items():
            if times.size != values.size:
                raise DataFormatError(f"stay {self.stay_id}: ragged series for {var}")
            if times.size and times.min() < 0:
                raise DataFormatError(f"stay {self.stay_id}: negative time offset in {var}")
            if times.size and times.max() > self.los:
                raise DataFormatError(f"stay {self.stay_id}: {var} has measurements after discharge")
            if values.size and not np.all(np.isfinite(values)):
                raise DataFormatError(f"stay {self.stay_id}: non-finite value in {var}")


@dataclass(frozen=True)
class VariableSpec:
    """Generative parameters for one measured variable."""

    variable_id: str
    var_class: str  # "vital" or "lab"
    units: str
    mean: float
    sd: float
    period_minutes: int
    missing_rate: float
    effect: float = 0.0  # log-odds shift per +1 sd proximity-weighted deviation


@dataclass(frozen=True)
class CohortSpec:
    n_stays: int
    prevalence: float
    rng_seed: int
    variables: tuple
    age_mean: float = 66.8
    age_sd: float = 12.7
    male_fraction: float = 0.637
    ethnicity_weights: tuple = (
        ("caucasian", 0.77),
        ("black", 0.10),
        ("hispanic", 0.08),
        ("asian", 0.03),
        ("other", 0.02),
    )
    los_mean_days: float = 4.1
    los_sd_days: float = 2.7
    ventilated_rate: float = 0.30
    age_effect: float = 0.30
    ventilated_effect: float = 0.60
    ramp_start_mult: float = 1.0
    ramp_end_mult: float = 2.0
    ramp_span_minutes: int = 1440
    walk_persistence: float = 0.8
    diagnosis_tag: str = "myocardial_infarction"

    def validate(self) -> None:
        if self.n_stays < 1:
            raise PreconditionError(f"n_stays must be >= 1, got {self.n_stays}")
        if not (0.0 < self.prevalence < 1.0):
            raise PreconditionError(f"prevalence must lie in (0, 1), got {self.prevalence}")
        if not self.variables:
            raise PreconditionError("variables must be non-empty")
        for v in self.variables:
            if v.var_class not in VARIABLE_CLASSES:
                raise PreconditionError(f"variable {v.variable_id}: unknown class {v.var_class!r}")
            if not math.isfinite(v.mean):
                raise PreconditionError(f"variable {v.variable_id}: mean is not finite")
            if not (math.isfinite(v.sd) and v.sd >= 0):
                raise PreconditionError(f"variable {v.variable_id}: sd must be finite and >= 0")
            if v.period_minutes < 1:
                raise PreconditionError(f"variable {v.variable_id}: period_minutes must be >= 1")
            if not (0.0 <= v.missing_rate < 1.0):
                raise PreconditionError(f"variable {v.variable_id}: missing_rate must lie in [0, 1)")
            if not math.isfinite(v.effect):
                raise PreconditionError(f"variable {v.variable_id}: effect is not finite")
        if not (0.0 < self.age_sd):
            raise PreconditionError("age_sd must be positive")
        if not (0.0 <= self.male_fraction <= 1.0):
            raise PreconditionError("male_fraction must lie in [0, 1]")
        if self.los_mean_days <= 0 or self.los_sd_days <= 0:
            raise PreconditionError("los_mean_days and los_sd_days must be positive")
        if not (0.0 <= self.ventilated_rate <= 1.0):
            raise PreconditionError("ventilated_rate must lie in [0, 1]")
        total = sum(w for _, w in self.ethnicity_weights)
        if total <= 0 or any(w < 0 for _, w in self.ethnicity_weights):
            raise PreconditionError("ethnicity_weights must be non-negative with positive sum")
        if self.ramp_span_minutes <= 0:
            raise PreconditionError("ramp_span_minutes must be positive")
        if self.ramp_start_mult <= 0 or self.ramp_end_mult <= 0:
            raise PreconditionError("ramp multipliers must be positive")
        if not (0.0 <= self.walk_persistence < 1.0):
            raise PreconditionError("walk_persistence must lie in [0, 1)")

    def manifest(self) -> "VariableManifest":
        return VariableManifest([(v.variable_id, v.var_class, v.units) for v in self.variables])

    def signal_variables(self) -> list:
        return [v.variable_id for v in self.variables if v.effect != 0.0]


class VariableManifest:
    """Ordered map variable_id -> (class, units)."""

    def __init__(self, rows):
        self.rows = [(str(v), str(c), str(u)) for v, c, u in rows]
        self._by_id = {v: (c, u) for v, c, u in self.rows}
        for v, c, u in self.rows:
            if c not in VARIABLE_CLASSES:
                raise DataFormatError(f"variable {v}: unknown class {c!r}")

    def __contains__(self, variable_id):
        return variable_id in self._by_id

    def variable_ids(self):
        return [v for v, _, _ in self.rows]

    def var_class(self, variable_id: str) -> str:
        try:
            return self._by_id[variable_id][0]
        except KeyError:
            raise DataFormatError(f"variable {variable_id}: not in manifest, class unknown") from None

    def units(self, variable_id: str) -> str:
        return self._by_id.get(variable_id, ("", ""))[1]


# ---------------------------------------------------------------------------
# built-in cohort profiles
# ---------------------------------------------------------------------------

def _base_variables():
    return (
        VariableSpec("heart_rate", "vital", "bpm", 85.0, 15.0, 60, 0.05, 0.0),
        VariableSpec("sbp", "vital", "mmHg", 120.2, 17.9, 60, 0.05, -2.8),
        VariableSpec("resp_rate", "vital", "breaths/min", 18.0, 4.0, 60, 0.05, 0.0),
        VariableSpec("spo2", "vital", "%", 96.5, 2.5, 60, 0.05, 0.0),
        VariableSpec("lactate", "lab", "mmol/L", 2.9, 2.8, 360, 0.15, 3.5),
        VariableSpec("glucose", "lab", "mg/dL", 150.4, 61.7, 360, 0.15, 2.2),
        VariableSpec("wbc", "lab", "10^9/L", 15.5, 10.5, 360, 0.15, 0.0),
        VariableSpec("rdw", "lab", "%", 15.1, 2.2, 360, 0.15, 0.0),
        VariableSpec("urea_nitrogen", "lab", "mg/dL", 27.4, 19.5, 360, 0.15, 1.8),
        VariableSpec("bicarbonate", "lab", "mEq/L", 24.7, 4.2, 360, 0.15, -1.8),
    )


def eicu_like_spec(n_stays: int = 5000, prevalence: float = 0.12, rng_seed: int = 7) -> CohortSpec:
    """Default multi-centre-style cohort profile."""
    return CohortSpec(n_stays=n_stays, prevalence=prevalence, rng_seed=rng_seed, variables=_base_variables())


def mimic_like_spec(n_stays: int = 1143, prevalence: float = 0.115, rng_seed: int = 8) -> CohortSpec:
    """Distribution-shifted external cohort profile (single-centre style)."""
    shifted = {
        "sbp": (126.3, 18.8),
        "lactate": (2.0, 1.5),
        "glucose": (136.5, 49.3),
        "wbc": (10.6, 7.4),
        "rdw": (14.4, 2.1),
        "urea_nitrogen": (22.8, 17.0),
        "bicarbonate": (23.3, 3.1),
    }
    variables = tuple(
        replace(v, mean=shifted[v.variable_id][0], sd=shifted[v.variable_id][1])
        if v.variable_id in shifted
        else v
        for v in _base_variables()
    )
    return CohortSpec(
        n_stays=n_stays,
        prevalence=prevalence,
        rng_seed=rng_seed,
        variables=variables,
        age_mean=68.1,
        age_sd=13.2,
        male_fraction=0.519,
        los_mean_days=3.7,
        los_sd_days=2.9,
    )


PROFILES = {"eicu": eicu_like_spec, "mimic": mimic_like_spec}


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

@njit(cache=True)
def _ar1(eps, persistence):
    # standardized stationary AR(1): x0 ~ N(0,1), marginal variance 1
    out = np.empty_like(eps)
    if eps.shape[0] == 0:
        return out
    out[0] = eps[0]
    c = math.sqrt(1.0 - persistence * persistence)
    for i in range(1, eps.shape[0]):
        out[i] = persistence * out[i - 1] + c * eps[i]
    return out


def _ramp_weights(times, event_time, start_mult, end_mult, span):
    lead = event_time - times.astype(np.float64)
    frac = np.clip(1.0 - lead / span, 0.0, 1.0)
    return start_mult + (end_mult - start_mult) * frac


def _draw_stay(spec: CohortSpec, idx: int):
    """One stay plus its mortality linear predictor (without intercept)."""
    rng = rng_for(spec.rng_seed, idx)
    age = float(np.round(rng.normal(spec.age_mean, spec.age_sd), 1))
    sex = "male" if rng.random() < spec.male_fraction else "female"
    eth_names = [n for n, _ in spec.ethnicity_weights]
    eth_w = np.array([w for _, w in spec.ethnicity_weights], dtype=np.float64)
    ethnicity = eth_names[int(rng.choice(len(eth_names), p=eth_w / eth_w.sum()))]
    ventilated = bool(rng.random() < spec.ventilated_rate)

    # log-normal stay length matched to the configured mean/sd in days
    m, s = spec.los_mean_days, spec.los_sd_days
    sigma2 = math.log(1.0 + (s / m) ** 2)
    mu = math.log(m) - sigma2 / 2.0
    los_days = math.exp(rng.normal(mu, math.sqrt(sigma2)))
    los = max(60, int(round(los_days * MINUTES_PER_DAY)))
    event_time = los

    risk = spec.age_effect * (age - spec.age_mean) / spec.age_sd
    risk += spec.ventilated_effect * ((1.0 if ventilated else 0.0) - spec.ventilated_rate)

    series = {}
    for v in spec.variables:
        times = np.arange(0, los + 1, v.period_minutes, dtype=np.int64)
        eps = rng.standard_normal(times.size)
        dev = _ar1(eps, spec.walk_persistence)
        keep = rng.random(times.size) >= v.missing_rate
        times, dev = times[keep], dev[keep]
        series[v.variable_id] = (times, v.mean + v.sd * dev)
        if v.effect != 0.0 and times.size:
            w = _ramp_weights(times, event_time, spec.ramp_start_mult, spec.ramp_end_mult, spec.ramp_span_minutes)
            risk += v.effect * float(np.sum(w * dev) / np.sum(w))

    outcome_draw = rng_for(spec.rng_seed, idx, 1).random()
    stay = PatientStay(
        stay_id=f"s{idx:06d}",
        age=age,
        sex=sex,
        ethnicity=ethnicity,
        ventilated=ventilated,
        diagnoses=frozenset({spec.diagnosis_tag}),
        los=los,
        died=False,
        event_time=event_time,
        series=series,
    )
    return stay, risk, outcome_draw


def _calibrate_intercept(risks: np.ndarray, prevalence: float) -> float:
    """Bisect the intercept so the mean event probability hits `prevalence`."""
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.mean(sigmoid(mid + risks))) < prevalence:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_cohort(spec: CohortSpec) -> list:
    """Deterministic synthetic cohort for `spec` (pure function of the spec)."""
    spec.validate()
    stays, risks, draws = [], np.empty(spec.n_stays), np.empty(spec.n_stays)
    for idx in range(spec.n_stays):
        stay, risk, draw = _draw_stay(spec, idx)
        stays.append(stay)
        risks[idx] = risk
        draws[idx] = draw
    alpha = _calibrate_intercept(risks, spec.prevalence)
    probs = sigmoid(alpha + risks)
    for stay, p, u in zip(stays, probs, draws):
        stay.died = bool(u < p)
    return stays


# ---------------------------------------------------------------------------
# inclusion / exclusion
# ---------------------------------------------------------------------------

@dataclass
class InclusionTally:
    n_input: int
    n_retained: int
    excluded: dict  # reason -> count, in application order

    def check_conservation(self) -> bool:
        return self.n_input == self.n_retained + sum(self.excluded.values())


def apply_inclusion(cohort, horizon: int):
    """Retain stays eligible for prediction at `horizon` minutes of lead time.

    Criteria, applied in order (a stay is tallied under the first one it
    fails): adult age bounds, minimum stay length max(5 h, horizon), and
    at least one measurement inside the prediction window
    [0, event_time - horizon].
    """
    if horizon <= 0:
        raise PreconditionError(f"horizon must be positive, got {horizon}")
    excluded = {REASON_AGE: 0, REASON_STAY: 0, REASON_OBS: 0}
    retained = []
    min_los = max(MIN_STAY_MINUTES, horizon)
    for stay in cohort:
        if not (AGE_LOW < stay.age < AGE_HIGH):
            excluded[REASON_AGE] += 1
            continue
        if stay.los < min_los:
            excluded[REASON_STAY] += 1
            continue
        cutoff = stay.event_time - horizon
        if cutoff < 0 or not any(times.size and times.min() <= cutoff for times, _ in stay.series.values()):
            excluded[REASON_OBS] += 1
            continue
        retained.append(stay)
    return retained, InclusionTally(len(cohort), len(retained), excluded)


def filter_sparse_variables(cohort, manifest: VariableManifest,
                            vital_threshold: float = 0.125,
                            lab_threshold: float = 0.25) -> list:
    """Variables measured in enough stays to keep, in manifest order."""
    for name, t in (("vital_threshold", vital_threshold), ("lab_threshold", lab_threshold)):
        if not (0.0 <= t <= 1.0):
            raise PreconditionError(f"{name} must lie in [0, 1], got {t}")
    seen = set()
    for stay in cohort:
        seen.update(stay.series.keys())
    unknown = sorted(v for v in seen if v not in manifest)
    if unknown:
        raise DataFormatError(f"variables present in cohort but missing from manifest: {', '.join(unknown)}")
    if not cohort:
        return []
    n = len(cohort)
    retained = []
    for var in manifest.variable_ids():
        count = sum(1 for stay in cohort if stay.points(var)[0].size > 0)
        if count == 0:  # never measured anywhere: nothing to summarize
            continue
        threshold = vital_threshold if manifest.var_class(var) == "vital" else lab_threshold
        if count / n >= threshold:
            retained.append(var)
    return retained


# ---------------------------------------------------------------------------
# file io
# ---------------------------------------------------------------------------

STAY_COLUMNS = ["stay_id", "age", "sex", "ethnicity", "ventilated",
                "los_minutes", "died", "event_time_minutes", "diagnoses"]
MEASUREMENT_COLUMNS = ["stay_id", "variable_id", "time_offset_minutes", "value"]


def write_cohort(cohort, stays_path, measurements_path) -> None:
    extras = sorted({k for stay in cohort for k in stay.static_extras})
    with open(stays_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(STAY_COLUMNS + extras)
        for stay in cohort:
            row = [
                stay.stay_id,
                fmt_float(stay.age),
                stay.sex,
                stay.ethnicity or "",
                int(stay.ventilated),
                stay.los,
                int(stay.died),
                stay.event_time,
                ";".join(sorted(stay.diagnoses)),
            ]
            row += [fmt_float(stay.static_extras[k]) if k in stay.static_extras else "" for k in extras]
            writer.writerow(row)
    with open(measurements_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MEASUREMENT_COLUMNS)
        for stay in cohort:
            for var in sorted(stay.series):
                times, values = stay.series[var]
                for t, x in zip(times.tolist(), values.tolist()):
                    writer.writerow([stay.stay_id, var, t, fmt_float(x)])


class _RowErrors:
    def __init__(self, path, limit=25):
        self.path = path
        self.limit = limit
        self.rows = []

    def add(self, lineno, message):
        if len(self.rows) < self.limit:
            self.rows.append(f"line {lineno}: {message}")

    def raise_if_any(self):
        if self.rows:
            raise DataFormatError(f"{self.path}: " + "; ".join(self.rows))


def read_cohort(stays_path, measurements_path) -> list:
    """Read a cohort pair of files; unknown numeric stay columns land in static_extras."""
    stays = {}
    order = []
    errors = _RowErrors(stays_path)
    with open(stays_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{stays_path}: empty file")
        missing = [c for c in STAY_COLUMNS if c not in header and c != "diagnoses"]
        if missing:
            raise DataFormatError(f"{stays_path}: missing required columns: {', '.join(missing)}")
        col = {name: header.index(name) for name in header}
        extra_names = [c for c in header if c not in STAY_COLUMNS]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                errors.add(lineno, f"expected {len(header)} fields, got {len(row)}")
                continue
            try:
                stay_id = row[col["stay_id"]]
                if not stay_id:
                    raise ValueError("empty stay_id")
                if stay_id in stays:
                    raise ValueError(f"duplicate stay_id {stay_id}")
                age = float(row[col["age"]])
                sex = row[col["sex"]]
                if sex not in ("male", "female"):
                    raise ValueError(f"sex must be male/female, got {sex!r}")
                ventilated = _parse_binary(row[col["ventilated"]], "ventilated")
                los = _parse_minutes(row[col["los_minutes"]], "los_minutes")
                died = _parse_binary(row[col["died"]], "died")
                event_time = _parse_minutes(row[col["event_time_minutes"]], "event_time_minutes")
                if event_time > los:
                    raise ValueError(f"event_time_minutes {event_time} exceeds los_minutes {los}")
                diagnoses = frozenset()
                if "diagnoses" in col and row[col["diagnoses"]]:
                    diagnoses = frozenset(row[col["diagnoses"]].split(";"))
                extras = {}
                for name in extra_names:
                    cell = row[col[name]]
                    if cell == "":
                        continue
                    extras[name] = float(cell)
            except ValueError as exc:
                errors.add(lineno, str(exc))
                continue
            stays[stay_id] = PatientStay(
                stay_id=stay_id,
                age=age,
                sex=sex,
                ethnicity=row[col["ethnicity"]] or None,
                ventilated=ventilated,
                diagnoses=diagnoses,
                los=los,
                died=died,
                event_time=event_time,
                static_extras=extras,
            )
            order.append(stay_id)
    errors.raise_if_any()

    points = {sid: {} for sid in stays}
    errors = _RowErrors(measurements_path)
    with open(measurements_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{measurements_path}: empty file")
        missing = [c for c in MEASUREMENT_COLUMNS if c not in header]
        if missing:
            raise DataFormatError(f"{measurements_path}: missing required columns: {', '.join(missing)}")
        col = {name: header.index(name) for name in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                stay_id = row[col["stay_id"]]
                if stay_id not in stays:
                    raise ValueError(f"unknown stay_id {stay_id}")
                t = _parse_minutes(row[col["time_offset_minutes"]], "time_offset_minutes")
                if t > stays[stay_id].los:
                    raise ValueError(f"time_offset_minutes {t} exceeds stay length")
                value = float(row[col["value"]])
                if not math.isfinite(value):
                    raise ValueError("value is not finite")
            except ValueError as exc:
                errors.add(lineno, str(exc))
                continue
            points[stay_id].setdefault(row[col["variable_id"]], []).append((t, value))
    errors.raise_if_any()

    for sid in order:
        series = {}
        for var, pts in points[sid].items():
            pts.sort(key=lambda p: p[0])
            times = np.array([p[0] for p in pts], dtype=np.int64)
            values = np.array([p[1] for p in pts], dtype=np.float64)
            series[var] = (times, values)
        stays[sid].series = series
    return [stays[sid] for sid in order]


def _parse_binary(cell: str, name: str) -> bool:
    if cell in ("0", "1"):
        return cell == "1"
    raise ValueError(f"{name} must be 0 or 1, got {cell!r}")


def _parse_minutes(cell: str, name: str) -> int:
    try:
        value = int(cell)
    except ValueError:
        raise ValueError(f"{name} must be an integer minute count, got {cell!r}") from None
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value


def write_manifest(manifest: VariableManifest, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable_id", "class", "units"])
        writer.writerows(manifest.rows)


def read_manifest(path) -> VariableManifest:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["variable_id", "class", "units"]:
            raise DataFormatError(f"{path}: expected header variable_id,class,units")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataFormatError(f"{path}: line {lineno}: expected 3 fields")
            rows.append(tuple(row))
    return VariableManifest(rows)


# keyed-text cohort spec files ----------------------------------------------

def write_cohort_spec(spec: CohortSpec, path) -> None:
    lines = [
        "format_version = 1",
        f"n_stays = {spec.n_stays}",
        f"prevalence = {spec.prevalence!r}",
        f"rng_seed = {spec.rng_seed}",
        f"age_mean = {spec.age_mean!r}",
        f"age_sd = {spec.age_sd!r}",
        f"male_fraction = {spec.male_fraction!r}",
        "ethnicity_weights = " + ",".join(f"{n}:{w!r}" for n, w in spec.ethnicity_weights),
        f"los_mean_days = {spec.los_mean_days!r}",
        f"los_sd_days = {spec.los_sd_days!r}",
        f"ventilated_rate = {spec.ventilated_rate!r}",
        f"age_effect = {spec.age_effect!r}",
        f"ventilated_effect = {spec.ventilated_effect!r}",
        f"ramp_start_mult = {spec.ramp_start_mult!r}",
        f"ramp_end_mult = {spec.ramp_end_mult!r}",
        f"ramp_span_minutes = {spec.ramp_span_minutes}",
        f"walk_persistence = {spec.walk_persistence!r}",
        f"diagnosis_tag = {spec.diagnosis_tag}",
    ]
    for v in spec.variables:
        lines.append(
            f"variable = {v.variable_id}|{v.var_class}|{v.units}|{v.mean!r}|{v.sd!r}|"
            f"{v.period_minutes}|{v.missing_rate!r}|{v.effect!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_cohort_spec(path) -> CohortSpec:
    pairs = {}
    variables = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "variable":
            parts = value.split("|")
            if len(parts) != 8:
                raise DataFormatError(f"{path}: line {lineno}: variable rows need 8 |-separated fields")
            try:
                variables.append(VariableSpec(
                    parts[0], parts[1], parts[2], float(parts[3]), float(parts[4]),
                    int(parts[5]), float(parts[6]), float(parts[7]),
                ))
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
        else:
            pairs[key] = value
    try:
        eth = tuple(
            (item.split(":")[0], float(item.split(":")[1]))
            for item in pairs.get("ethnicity_weights", "").split(",")
        ) if pairs.get("ethnicity_weights") else CohortSpec.ethnicity_weights
        spec = CohortSpec(
            n_stays=int(pairs["n_stays"]),
            prevalence=float(pairs["prevalence"]),
            rng_seed=int(pairs["rng_seed"]),
            variables=tuple(variables),
            age_mean=float(pairs.get("age_mean", 66.8)),
            age_sd=float(pairs.get("age_sd", 12.7)),
            male_fraction=float(pairs.get("male_fraction", 0.637)),
            ethnicity_weights=eth,
            los_mean_days=float(pairs.get("los_mean_days", 4.1)),
            los_sd_days=float(pairs.get("los_sd_days", 2.7)),
            ventilated_rate=float(pairs.get("ventilated_rate", 0.30)),
            age_effect=float(pairs.get("age_effect", 0.30)),
            ventilated_effect=float(pairs.get("ventilated_effect", 0.60)),
            ramp_start_mult=float(pairs.get("ramp_start_mult", 1.0)),
            ramp_end_mult=float(pairs.get("ramp_end_mult", 2.0)),
            ramp_span_minutes=int(pairs.get("ramp_span_minutes", 1440)),
            walk_persistence=float(pairs.get("walk_persistence", 0.8)),
            diagnosis_tag=pairs.get("diagnosis_tag", "myocardial_infarction"),
        )
    except KeyError as exc:
        raise DataFormatError(f"{path}: missing required key {exc}") from None
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    spec.validate()
    return spec
