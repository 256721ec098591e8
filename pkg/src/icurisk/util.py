"""Small shared helpers: seeding, hashing, keyed-text state files."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import DataFormatError


def rng_for(seed: int, *tags: int) -> np.random.Generator:
    """Derived generator for (seed, tags).

    Every stochastic stage derives its stream this way so that parallel
    and serial execution orders produce identical results.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(t) for t in tags]]))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt_float(x) -> str:
    """Shortest round-trip decimal form; '' for missing (NaN)."""
    x = float(x)
    if np.isnan(x):
        return ""
    return repr(x)


def fmt_float_list(xs) -> str:
    return ",".join(fmt_float(x) for x in xs)


def parse_float_list(text: str) -> np.ndarray:
    if text == "":
        return np.empty(0, dtype=np.float64)
    return np.array([float(t) for t in text.split(",")], dtype=np.float64)


def write_keyed(path, pairs: dict) -> None:
    """One `key = value` per line, UTF-8. Values are pre-formatted strings."""
    lines = [f"{k} = {v}" for k, v in pairs.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_keyed(path) -> dict:
    pairs = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        pairs[key.strip()] = value.strip()
    return pairs
