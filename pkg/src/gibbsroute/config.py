"""Experiment configuration: JSON or ``key = value`` files, strictly validated."""
from __future__ import annotations

from dataclasses import dataclass
import json
from pathlib import Path
from typing import Any

from .geometry import Geometry
from .pathloss import PathLoss

__all__ = ["ConfigError", "ExperimentConfig", "EXPERIMENTS", "parse_config", "load_config", "defaults_for"]

EXPERIMENTS = ("limit-profiles", "relay-map", "mcmc", "anneal", "asymptotics", "dense-subarea", "game")

GEOMETRY_KEYS = {
    "dimension": int,
    "radius": float,
    "alpha": float,
    "pathloss_kind": str,
    "pathloss_shift": float,
    "gamma": float,
    "beta": float,
    "kmax": int,
    "intensity": float,
    "delta_center": list,
    "delta_radius": float,
    "a": float,
}
GEOMETRY_REQUIRED = ("dimension", "radius", "alpha", "pathloss_kind", "gamma", "kmax")
# the asymptotic probes size W from the transmitter distance
ASYMPTOTICS_REQUIRED = ("dimension", "alpha", "pathloss_kind", "gamma", "r0_list")

EXPERIMENT_KEYS: dict[str, dict[str, type]] = {
    "limit-profiles": {"gammas": list, "n_radii": int, "n_nu2": int},
    "relay-map": {"n_points": int},
    "mcmc": {"n_users": int, "lam": float, "steps": int, "burn_in": int, "thin": int, "kernel": str},
    "anneal": {"n_users": int, "lam": float, "t_max": int, "c0": float, "runs": int},
    "asymptotics": {"r0_list": list, "h": float, "radius_factor": float},
    "dense-subarea": {"n_grid": int, "rate_kmax": int},
    "game": {"q": str, "game_file": str},
}
GAME_REQUIRED = ("beta",)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _coerce(key: str, value: Any, typ: type):
    if typ is list:
        if isinstance(value, (list, tuple)):
            return list(value)
        if isinstance(value, (int, float)):
            return [value]
        raise ConfigError(key, f"expected a list, got {value!r}")
    if typ is str:
        return str(value)
    if typ is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected an integer, got {value!r}") from None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [parse_value(t) for t in text.split(",")]
    return text


def _parse_kv(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key = value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


_GEOMETRY_MESSAGES = (
    ("only d", "dimension"),
    ("radius", "radius"),
    ("gamma", "gamma"),
    ("beta", "beta"),
    ("kmax", "kmax"),
    ("intensity", "intensity"),
    ("delta_center", "delta_center"),
    ("Delta must lie", "delta_center"),
    ("delta_radius", "delta_radius"),
    ("a ", "a"),
)


def _geometry_key(msg: str) -> str:
    for prefix, key in _GEOMETRY_MESSAGES:
        if msg.startswith(prefix):
            return key
    return "geometry"


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = 0
    out: str = "out"
    threads: int = 1

    # -- model objects ------------------------------------------------------
    def pathloss(self) -> PathLoss:
        p = self.params
        try:
            return PathLoss(p["pathloss_kind"], p["alpha"], p.get("pathloss_shift", 1.0))
        except ValueError as e:
            key = "pathloss_kind" if "kind" in str(e) else ("pathloss_shift" if "shift" in str(e) else "alpha")
            raise ConfigError(key, str(e)) from None

    def geometry(self) -> Geometry:
        p = self.params
        kw = dict(
            d=p["dimension"],
            radius=p["radius"],
            gamma=p["gamma"],
            beta=p.get("beta", 0.0),
            kmax=p["kmax"],
            intensity=p.get("intensity", 1.0),
        )
        if "delta_radius" in p:
            kw.update(delta_center=tuple(p.get("delta_center", [0.0] * p["dimension"])), delta_radius=p["delta_radius"], a=p.get("a", 0.0))
        try:
            return Geometry(**kw)
        except ValueError as e:
            msg = str(e)
            raise ConfigError(_geometry_key(msg), msg) from None

    def probe_geometry(self, r0: float) -> Geometry:
        """W = B_{f r0} for an asymptotic probe at distance r0 (f = radius_factor)."""
        p = self.params
        try:
            return Geometry(d=p["dimension"], radius=p.get("radius_factor", 1.1) * r0, gamma=p["gamma"], kmax=2)
        except ValueError as e:
            raise ConfigError(_geometry_key(str(e)), str(e)) from None

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "out": self.out, "threads": self.threads}
        d.update(self.params)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def defaults_for(experiment: str) -> dict:
    """Built-in parameter sets; the geometric ones are the two reference examples."""
    ex1 = {"dimension": 1, "radius": 5.0, "alpha": 4.0, "pathloss_kind": "hertz", "gamma": 1.0, "kmax": 2}
    ex2 = {"dimension": 2, "radius": 7.0, "alpha": 4.0, "pathloss_kind": "shifted", "pathloss_shift": 1.0, "gamma": 1.0, "kmax": 2}
    table = {
        "limit-profiles": {**ex1, "gammas": [0, 0.001, 0.01, 0.1, 0.4, 0.7, 1], "n_radii": 101, "n_nu2": 41},
        "relay-map": {**ex2, "n_points": 100},
        "mcmc": {"dimension": 1, "radius": 2.0, "alpha": 4.0, "pathloss_kind": "shifted", "gamma": 0.5, "beta": 0.3, "kmax": 2,
                 "n_users": 4, "lam": 1.0, "steps": 200000, "burn_in": 10000, "thin": 100, "kernel": "metropolis"},
        "anneal": {"dimension": 1, "radius": 2.0, "alpha": 4.0, "pathloss_kind": "shifted", "gamma": 1.0, "beta": 0.5, "kmax": 2,
                   "n_users": 5, "lam": 1.0, "t_max": 5000, "runs": 20},
        "asymptotics": {"dimension": 1, "alpha": 4.0, "pathloss_kind": "hertz", "gamma": 1.0,
                        "r0_list": [50, 100, 200], "h": 0.02, "radius_factor": 1.1},
        "dense-subarea": {**ex1, "delta_center": [0.0], "delta_radius": 5.0, "a": 1.0, "n_grid": 64, "rate_kmax": 2},
        "game": {"q": "1", "beta": 0.75},
    }
    if experiment not in table:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    return json.loads(json.dumps(table[experiment]))


def parse_config(data: dict, experiment: str | None = None) -> ExperimentConfig:
    """Validate a raw mapping; unknown keys and missing required keys are errors."""
    data = dict(data)
    exp = data.pop("experiment", None) or experiment
    if exp is None:
        raise ConfigError("experiment", "missing required key")
    if experiment is not None and exp != experiment:
        raise ConfigError("experiment", f"config is for {exp!r}, not {experiment!r}")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; expected one of {EXPERIMENTS}")
    seed = _coerce("seed", data.pop("seed", 0), int)
    out = _coerce("out", data.pop("out", "out"), str)
    threads = _coerce("threads", data.pop("threads", 1), int)
    if threads < 1:
        raise ConfigError("threads", "must be >= 1")
    allowed = dict(EXPERIMENT_KEYS[exp])
    if exp == "game":
        allowed.update(beta=float, gamma=float)
    else:
        allowed.update(GEOMETRY_KEYS)
    params = {}
    for k, v in data.items():
        if k not in allowed:
            raise ConfigError(k, "unknown key")
        params[k] = _coerce(k, v, allowed[k])
    required = {"game": GAME_REQUIRED, "asymptotics": ASYMPTOTICS_REQUIRED}.get(exp, GEOMETRY_REQUIRED)
    for k in required:
        if k not in params and not (exp == "game" and "game_file" in params):
            raise ConfigError(k, "missing required key")
    cfg = ExperimentConfig(exp, params, seed, out, threads)
    if exp == "asymptotics":
        _validate_asymptotics(cfg)
    elif exp != "game":
        cfg.pathloss()
        cfg.geometry()
    return cfg


def _validate_asymptotics(cfg: ExperimentConfig) -> None:
    p = cfg.params
    if p["dimension"] != 1:
        raise ConfigError("dimension", "the asymptotic hop-count probe runs in d = 1")
    r0s = p["r0_list"]
    if not r0s or not all(isinstance(r, (int, float)) and r > 1 for r in r0s):
        raise ConfigError("r0_list", "needs a nonempty list of distances > 1")
    if p.get("radius_factor", 1.1) <= 1:
        raise ConfigError("radius_factor", "must exceed 1 so that W contains the transmitter")
    if p.get("h", 0.02) <= 0:
        raise ConfigError("h", "grid step must be positive")
    cfg.pathloss()
    for r0 in r0s:
        cfg.probe_geometry(float(r0))


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON: {e}") from None
    else:
        data = _parse_kv(text)
    return parse_config(data, experiment)
