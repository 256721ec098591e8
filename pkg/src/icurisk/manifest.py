"""Run manifests: per-stage content hashes, config echoes, and timings.

The manifest guards reproducibility two ways. First, re-running a stage
with the same configuration must reproduce the same output hashes.
Second, the train/test partition file is hashed when it is created, and
every later stage re-hashes it and refuses to run if it changed, so the
held-out rows cannot silently leak into fitting.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import DataFormatError
from .util import sha256_bytes, sha256_file

MANIFEST_NAME = "manifest.json"


_VOLATILE_CONFIG_KEYS = ("out_root", "jobs")  # irrelevant to results by contract


class RunManifest:
    def __init__(self, out_root, version: str):
        self.out_root = Path(out_root)
        self.path = self.out_root / MANIFEST_NAME
        self.data = {"version": version, "stages": {}, "partition_hash": None}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                self.data = json.load(fh)
            self.data.setdefault("stages", {})
            self.data.setdefault("partition_hash", None)
            self.data["version"] = version

    def _key(self, path) -> str:
        """Paths under the output root are recorded relative to it."""
        try:
            return Path(path).resolve().relative_to(self.out_root.resolve()).as_posix()
        except ValueError:
            return str(path)

    def record_stage(self, name: str, config_echo: dict, inputs, outputs, seconds: float) -> None:
        self.data["stages"][name] = {
            "config": config_echo,
            "inputs": {self._key(p): sha256_file(p) for p in sorted(str(x) for x in inputs)},
            "outputs": {self._key(p): sha256_file(p) for p in sorted(str(x) for x in outputs)},
            "seconds": round(seconds, 3),
        }
        self.save()

    def set_partition_hash(self, split_path) -> None:
        self.data["partition_hash"] = sha256_file(split_path)
        self.save()

    def assert_partition(self, split_path) -> None:
        recorded = self.data.get("partition_hash")
        if recorded is None:
            raise DataFormatError("manifest has no recorded train/test partition hash; run prepare first")
        actual = sha256_file(split_path)
        if actual != recorded:
            raise DataFormatError(
                f"train/test partition changed since prepare: {actual} != recorded {recorded}"
            )

    def content_fingerprint(self) -> str:
        """Hash of everything reproducibility covers.

        Timings, the output location, and the worker count are excluded:
        identical configuration must reproduce this fingerprint exactly,
        whatever the directory or --jobs setting.
        """
        stages = {}
        for name, st in self.data["stages"].items():
            config = {k: v for k, v in st["config"].items() if k not in _VOLATILE_CONFIG_KEYS}
            stages[name] = {"config": config, "inputs": st["inputs"], "outputs": st["outputs"]}
        doc = {"stages": stages, "partition_hash": self.data["partition_hash"]}
        return sha256_bytes(json.dumps(doc, sort_keys=True).encode())

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=1, sort_keys=True)
            fh.write("\n")
