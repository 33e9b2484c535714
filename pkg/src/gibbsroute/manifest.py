"""CSV writers and the run manifest.

Numbers are written with ``repr``-exact formatting so that a rerun with the
same seed reproduces every data file byte for byte.  The manifest is sorted
JSON; only the ``created`` field depends on the wall clock.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

__all__ = ["TAGS", "Manifest", "write_csv", "write_json", "to_jsonable", "strip_timestamps"]

# reference: compared with a published number; oracle: checked against an
# independent computation; definitional: holds by construction
TAGS = ("reference", "oracle", "definitional", "report")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def to_jsonable(v):
    if isinstance(v, dict):
        return {str(k): to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [to_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return to_jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, Fraction):
        return str(v)
    return v


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class Manifest:
    experiment: str
    seed: int = 0
    config: dict = field(default_factory=dict)
    results: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def add(self, name: str, value: Any, tag: str = "report", tolerance: Optional[Any] = None, flagged: bool = False) -> None:
        if tag not in TAGS:
            raise ValueError(f"unknown tag {tag!r}; expected one of {TAGS}")
        entry = {"name": name, "value": to_jsonable(value), "tag": tag, "flagged": bool(flagged)}
        if tolerance is not None:
            entry["tolerance"] = to_jsonable(tolerance)
            self.tolerances[name] = to_jsonable(tolerance)
        self.results.append(entry)
        if flagged:
            self.flags.append(name)

    def flag(self, message: str) -> None:
        self.flags.append(message)

    def add_file(self, path, root=None) -> None:
        path = Path(path)
        name = str(path.relative_to(root)) if root is not None else path.name
        self.files.append({"path": name, "sha256": _sha256(path)})

    def result(self, name: str):
        for r in self.results:
            if r["name"] == name:
                return r["value"]
        raise KeyError(name)

    def to_dict(self, created: Optional[str] = None) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "config": to_jsonable(self.config),
            "results": self.results,
            "seeds": to_jsonable(self.seeds),
            "tolerances": self.tolerances,
            "flags": self.flags,
            "files": sorted(self.files, key=lambda f: f["path"]),
            "created": created if created is not None else datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }

    def write(self, path, created: Optional[str] = None) -> Path:
        return write_json(path, self.to_dict(created))


def strip_timestamps(manifest: dict) -> dict:
    out = dict(manifest)
    out.pop("created", None)
    return out
