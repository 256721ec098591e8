"""Horizon-windowed feature extraction.

For a prediction horizon h, each time-series variable is summarized over
the closed window [0, event_time - h] into a mean and a sample standard
deviation (keeping the variable's native units), and the summaries are
concatenated with static attributes into a rectangular feature matrix.
Rows are ordered by stay_id, so the construction is deterministic.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import VariableManifest
from .errors import DataFormatError, PreconditionError
from .util import fmt_float

STATISTICS = ("mean", "std")
DEFAULT_HORIZONS = (360, 720, 1080, 1440)


@dataclass(frozen=True)
class WindowConfig:
    horizon: int  # minutes of lead time before the event
    statistics: tuple = STATISTICS
    min_points_for_std: int = 2

    def validate(self) -> None:
        if self.horizon <= 0:
            raise PreconditionError(f"horizon must be positive, got {self.horizon}")
        if not self.statistics:
            raise PreconditionError("statistics must be non-empty")
        unknown = [s for s in self.statistics if s not in STATISTICS]
        if unknown:
            raise PreconditionError(f"unknown statistics: {', '.join(unknown)}")
        if self.min_points_for_std < 2:
            raise PreconditionError("min_points_for_std must be >= 2")


@dataclass(frozen=True)
class ColumnInfo:
    name: str
    kind: str  # "summary" or "static"
    source: str
    statistic: str
    units: str


@dataclass
class FeatureMatrix:
    row_ids: list
    columns: list  # list[ColumnInfo]
    values: np.ndarray  # (n_rows, n_cols) float64, NaN = missing
    labels: np.ndarray  # (n_rows,) int8 death outcome
    group_tags: dict = field(default_factory=dict)  # tag name -> list[str] per row

    @property
    def column_names(self) -> list:
        return [c.name for c in self.columns]

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise PreconditionError(f"unknown column: {name}") from None

    def subset_rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(
            row_ids=[self.row_ids[i] for i in idx],
            columns=list(self.columns),
            values=self.values[idx].copy(),
            labels=self.labels[idx].copy(),
            group_tags={k: [v[i] for i in idx] for k, v in self.group_tags.items()},
        )


def extract_window(stay, cfg: WindowConfig) -> dict:
    """Per-variable summary statistics over [0, event_time - horizon].

    Both window endpoints are inclusive. Variables with no in-window
    points yield NaN for every statistic; windows with fewer than
    `min_points_for_std` points report std 0.0 so that "measured once"
    stays distinguishable from "never measured".
    """
    cfg.validate()
    cutoff = stay.event_time - cfg.horizon
    if cutoff < 0:
        raise PreconditionError(
            f"stay {stay.stay_id}: event_time {stay.event_time} precedes horizon {cfg.horizon}"
        )
    out = {}
    for var, (times, values) in stay.series.items():
        inside = values[(times >= 0) & (times <= cutoff)]
        stats = {}
        for stat in cfg.statistics:
            if inside.size == 0:
                stats[stat] = math.nan
            elif stat == "mean":
                stats[stat] = float(np.mean(inside))
            elif stat == "std":
                stats[stat] = float(np.std(inside, ddof=1)) if inside.size >= cfg.min_points_for_std else 0.0
        out[var] = stats
    return out


def build_matrix(cohort, cfg: WindowConfig, variables,
                 manifest: VariableManifest | None = None,
                 ethnicity_categories: list | None = None) -> FeatureMatrix:
    """Feature matrix: (variable x statistic) summaries, then statics.

    Static columns are age, sex (1 = male), ventilated, an ethnicity
    one-hot (categories observed in `cohort` unless a fixed list is
    given, plus an "other" bucket; no columns at all when no stay
    carries an ethnicity), and any static_extras keys, sorted.
    """
    cfg.validate()
    if not cohort:
        raise PreconditionError("cohort is empty")
    if not variables:
        raise PreconditionError("variable list is empty")
    stays = sorted(cohort, key=lambda s: s.stay_id)

    units = (lambda v: manifest.units(v)) if manifest is not None else (lambda v: "")
    columns = [
        ColumnInfo(f"{var}_{stat}", "summary", var, stat, units(var))
        for var in variables
        for stat in cfg.statistics
    ]
    columns.append(ColumnInfo("age", "static", "age", "", "years"))
    columns.append(ColumnInfo("sex_male", "static", "sex", "", ""))
    columns.append(ColumnInfo("ventilated", "static", "ventilated", "", ""))
    if ethnicity_categories is None:
        cats = sorted({s.ethnicity for s in stays if s.ethnicity})
    else:
        cats = list(ethnicity_categories)
    had_any_ethnicity = bool(cats)
    cats = [c for c in cats if c != "other"]  # unlisted values share the catch-all bucket
    if had_any_ethnicity:
        for cat in cats:
            columns.append(ColumnInfo(f"ethnicity_{cat}", "static", "ethnicity", "", ""))
        columns.append(ColumnInfo("ethnicity_other", "static", "ethnicity", "", ""))
    extras = sorted({k for s in stays for k in s.static_extras})
    for name in extras:
        columns.append(ColumnInfo(name, "static", name, "", ""))

    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise DataFormatError(f"duplicate column descriptors: {', '.join(dupes)}")

    values = np.full((len(stays), len(columns)), np.nan)
    for i, stay in enumerate(stays):
        summaries = extract_window(stay, cfg)
        j = 0
        for var in variables:
            for stat in cfg.statistics:
                values[i, j] = summaries.get(var, {}).get(stat, math.nan)
                j += 1
        values[i, j] = stay.age; j += 1
        values[i, j] = 1.0 if stay.sex == "male" else 0.0; j += 1
        values[i, j] = 1.0 if stay.ventilated else 0.0; j += 1
        if had_any_ethnicity:
            hit = stay.ethnicity in cats
            for cat in cats:
                values[i, j] = 1.0 if stay.ethnicity == cat else 0.0
                j += 1
            values[i, j] = 0.0 if hit else 1.0
            j += 1
        for name in extras:
            if name in stay.static_extras:
                values[i, j] = stay.static_extras[name]
            j += 1

    return FeatureMatrix(
        row_ids=[s.stay_id for s in stays],
        columns=columns,
        values=values,
        labels=np.array([int(s.died) for s in stays], dtype=np.int8),
        group_tags={
            "sex": [s.sex for s in stays],
            "ethnicity": [s.ethnicity or "" for s in stays],
        },
    )


def select_columns(matrix: FeatureMatrix, names) -> FeatureMatrix:
    """Column-restricted copy preserving rows, labels, and group tags."""
    have = {c.name: i for i, c in enumerate(matrix.columns)}
    unknown = [n for n in names if n not in have]
    if unknown:
        raise PreconditionError(f"unknown columns: {', '.join(unknown)}")
    idx = [have[n] for n in names]
    return FeatureMatrix(
        row_ids=list(matrix.row_ids),
        columns=[matrix.columns[i] for i in idx],
        values=matrix.values[:, idx].copy(),
        labels=matrix.labels.copy(),
        group_tags={k: list(v) for k, v in matrix.group_tags.items()},
    )


# ---------------------------------------------------------------------------
# serialization: delimited values + JSON sidecar of column descriptors
# ---------------------------------------------------------------------------

def save_matrix(matrix: FeatureMatrix, path) -> None:
    path = str(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        tag_names = sorted(matrix.group_tags)
        writer.writerow(["stay_id", "died"] + [f"tag_{t}" for t in tag_names] + matrix.column_names)
        for i, sid in enumerate(matrix.row_ids):
            row = [sid, int(matrix.labels[i])]
            row += [matrix.group_tags[t][i] for t in tag_names]
            row += [fmt_float(x) for x in matrix.values[i]]
            writer.writerow(row)
    sidecar = {
        "format_version": 1,
        "columns": [
            {"name": c.name, "kind": c.kind, "source": c.source, "statistic": c.statistic, "units": c.units}
            for c in matrix.columns
        ],
    }
    with open(path + ".columns.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_matrix(path) -> FeatureMatrix:
    path = str(path)
    with open(path + ".columns.json", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    columns = [ColumnInfo(c["name"], c["kind"], c["source"], c["statistic"], c["units"])
               for c in sidecar["columns"]]
    row_ids, labels, rows = [], [], []
    tags: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        tag_names = [h[4:] for h in header if h.startswith("tag_")]
        n_meta = 2 + len(tag_names)
        if header[n_meta:] != [c.name for c in columns]:
            raise DataFormatError(f"{path}: columns do not match sidecar")
        tags = {t: [] for t in tag_names}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}: line {lineno}: expected {len(header)} fields")
            row_ids.append(row[0])
            labels.append(int(row[1]))
            for k, t in enumerate(tag_names):
                tags[t].append(row[2 + k])
            try:
                rows.append([float(cell) if cell != "" else math.nan for cell in row[n_meta:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    return FeatureMatrix(
        row_ids=row_ids,
        columns=columns,
        values=np.array(rows, dtype=np.float64).reshape(len(row_ids), len(columns)),
        labels=np.array(labels, dtype=np.int8),
        group_tags=tags,
    )
