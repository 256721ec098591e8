"""Run configuration: INI sections per pipeline stage, CLI overrides win.

Every stochastic stage carries an explicit seed, so a config file fully
determines a run. The default output root comes from the ICURISK_OUT
environment variable when set.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

ENV_OUT_ROOT = "ICURISK_OUT"


def _default_out() -> str:
    return os.environ.get(ENV_OUT_ROOT, "runs/out")


@dataclass
class RunConfig:
    # [paths]
    out_root: str = field(default_factory=_default_out)
    stays: str = ""            # empty: use the generate stage's output
    measurements: str = ""
    variable_manifest: str = ""
    cohort_spec_file: str = ""  # optional keyed-text generator spec
    external_stays: str = ""
    external_measurements: str = ""
    # [generate]
    profile: str = "eicu"
    n_stays: int = 5000
    prevalence: float = 0.12
    generate_seed: int = 7
    external_profile: str = ""  # e.g. "mimic": also emit a shifted external cohort
    external_n_stays: int = 1200
    external_seed: int = 8
    # [windows]
    horizons: tuple = (360, 720, 1080, 1440)
    statistics: tuple = ("mean", "std")
    min_points_for_std: int = 2
    vital_threshold: float = 0.125
    lab_threshold: float = 0.25
    # [split]
    test_fraction: float = 0.2
    folds: int = 5
    split_seed: int = 11
    # [model]
    max_depth: int = 4
    rounds: int = 200
    eta: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    train_seed: int = 13
    # [grid]
    tune_enabled: bool = False
    grid_max_depth: tuple = (3, 4)
    grid_rounds: tuple = (100, 200)
    grid_eta: tuple = (0.1,)
    grid_reg_lambda: tuple = (1.0,)
    grid_gamma: tuple = (0.0,)
    grid_min_child_weight: tuple = (1.0,)
    tune_seed: int = 17
    # [evaluate]
    threshold: float = 0.5
    bootstrap_iterations: int = 50
    bootstrap_level: float = 0.90
    bootstrap_seed: int = 19
    permutation_n: int = 0  # 0 disables the permutation test in evaluate
    permutation_seed: int = 23
    min_group_size: int = 30
    # [explain]
    top_k: int = 8
    max_eval_rows: int = 0  # 0 = attribute every test row
    perturb_repeats: int = 5
    perturb_seed: int = 29
    perturb_horizon: int = 0  # 0 = nearest horizon
    # [curves]
    curve_start: float = 0.01
    curve_stop: float = 0.99
    curve_step: float = 0.01
    impact_population: int = 1000
    curve_bands: bool = True
    # [external]
    external_top_k: int = 8
    # [runtime]
    jobs: int = 1

    def validate(self) -> None:
        if not self.horizons:
            raise ConfigError("windows.horizons must be non-empty")
        if any(h <= 0 for h in self.horizons):
            raise ConfigError("windows.horizons must be positive minute counts")
        if not (0.0 < self.test_fraction < 1.0):
            raise ConfigError("split.test_fraction must lie in (0, 1)")
        if self.folds < 2:
            raise ConfigError("split.folds must be >= 2")
        if not (0.0 <= self.threshold <= 1.0):
            raise ConfigError("evaluate.threshold must lie in [0, 1]")
        if self.jobs < 1:
            raise ConfigError("runtime.jobs must be >= 1")
        if not (0.0 < self.curve_start < self.curve_stop < 1.0):
            raise ConfigError("curves require 0 < start < stop < 1")
        if self.curve_step <= 0:
            raise ConfigError("curves.step must be positive")
        if self.profile not in ("eicu", "mimic"):
            raise ConfigError(f"generate.profile must be eicu or mimic, got {self.profile!r}")
        if self.external_profile and self.external_profile not in ("eicu", "mimic"):
            raise ConfigError("generate.external_profile must be eicu or mimic when set")

    def echo(self) -> dict:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v
                for f in fields(self)}


# section -> {ini key: (attr, parser)}
def _int_tuple(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def _float_tuple(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _str_tuple(text):
    return tuple(t for t in text.replace(",", " ").split())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_SCHEMA = {
    "paths": {
        "out_root": ("out_root", str),
        "stays": ("stays", str),
        "measurements": ("measurements", str),
        "variable_manifest": ("variable_manifest", str),
        "cohort_spec_file": ("cohort_spec_file", str),
        "external_stays": ("external_stays", str),
        "external_measurements": ("external_measurements", str),
    },
    "generate": {
        "profile": ("profile", str),
        "n_stays": ("n_stays", int),
        "prevalence": ("prevalence", float),
        "seed": ("generate_seed", int),
        "external_profile": ("external_profile", str),
        "external_n_stays": ("external_n_stays", int),
        "external_seed": ("external_seed", int),
    },
    "windows": {
        "horizons": ("horizons", _int_tuple),
        "statistics": ("statistics", _str_tuple),
        "min_points_for_std": ("min_points_for_std", int),
        "vital_threshold": ("vital_threshold", float),
        "lab_threshold": ("lab_threshold", float),
    },
    "split": {
        "test_fraction": ("test_fraction", float),
        "folds": ("folds", int),
        "seed": ("split_seed", int),
    },
    "model": {
        "max_depth": ("max_depth", int),
        "rounds": ("rounds", int),
        "eta": ("eta", float),
        "reg_lambda": ("reg_lambda", float),
        "gamma": ("gamma", float),
        "min_child_weight": ("min_child_weight", float),
        "subsample": ("subsample", float),
        "seed": ("train_seed", int),
    },
    "grid": {
        "enabled": ("tune_enabled", _bool),
        "max_depth": ("grid_max_depth", _int_tuple),
        "rounds": ("grid_rounds", _int_tuple),
        "eta": ("grid_eta", _float_tuple),
        "reg_lambda": ("grid_reg_lambda", _float_tuple),
        "gamma": ("grid_gamma", _float_tuple),
        "min_child_weight": ("grid_min_child_weight", _float_tuple),
        "seed": ("tune_seed", int),
    },
    "evaluate": {
        "threshold": ("threshold", float),
        "bootstrap_iterations": ("bootstrap_iterations", int),
        "bootstrap_level": ("bootstrap_level", float),
        "bootstrap_seed": ("bootstrap_seed", int),
        "permutation_n": ("permutation_n", int),
        "permutation_seed": ("permutation_seed", int),
        "min_group_size": ("min_group_size", int),
    },
    "explain": {
        "top_k": ("top_k", int),
        "max_eval_rows": ("max_eval_rows", int),
        "perturb_repeats": ("perturb_repeats", int),
        "perturb_seed": ("perturb_seed", int),
        "perturb_horizon": ("perturb_horizon", int),
    },
    "curves": {
        "start": ("curve_start", float),
        "stop": ("curve_stop", float),
        "step": ("curve_step", float),
        "population": ("impact_population", int),
        "bands": ("curve_bands", _bool),
    },
    "external": {
        "top_k": ("external_top_k", int),
    },
    "runtime": {
        "jobs": ("jobs", int),
    },
}


def load_config(path: str | None = None, overrides=()) -> RunConfig:
    """Parse the INI file (if any), then apply `section.key=value` overrides."""
    cfg = RunConfig()
    if path:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                _apply(cfg, section, key, raw, origin=path)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, _, raw = item.partition("=")
        if "." not in dotted:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        section, _, key = dotted.strip().partition(".")
        _apply(cfg, section, key, raw.strip(), origin="--set")
    cfg.validate()
    return cfg


def _apply(cfg: RunConfig, section: str, key: str, raw: str, origin: str) -> None:
    try:
        attr, parse = _SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"{origin}: unknown option {section}.{key}") from None
    try:
        setattr(cfg, attr, parse(raw))
    except ValueError as exc:
        raise ConfigError(f"{origin}: bad value for {section}.{key}: {exc}") from None


EXAMPLE_CONFIG = """\
[paths]
out_root = runs/demo

[generate]
profile = eicu
n_stays = 5000
prevalence = 0.12
seed = 7
external_profile = mimic
external_n_stays = 1200
external_seed = 8

[windows]
horizons = 360 720 1080 1440

[split]
test_fraction = 0.2
folds = 5
seed = 11

[model]
max_depth = 4
rounds = 200
eta = 0.1

[grid]
enabled = false
max_depth = 3 4
rounds = 100 200

[evaluate]
threshold = 0.5
bootstrap_iterations = 50
bootstrap_level = 0.90

[explain]
top_k = 8
perturb_repeats = 5

[external]
top_k = 8
"""
