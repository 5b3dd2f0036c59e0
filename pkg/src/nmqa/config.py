"""Run configuration: a YAML key-value tree plus command-line overrides."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .filtering import MESSAGE_SCOPES, FilterConfig
from .lattice import FIELD_KINDS, QubitArray, TrueField, build_grid, make_field
from .measurement import NoiseParams

SIM_BUDGETS = [5, 10, 15, 20, 25, 50, 75, 100, 125, 250]
REPLAY_BUDGETS = [1, 2, 3, 4, 6, 12, 18, 24, 30, 60, 72, 96, 120, 246]

DEFAULTS: dict[str, Any] = {
    "grid": {"rows": 5, "cols": 5, "spacing": 1.0},
    "field": {
        "kind": "square2d",
        "low": 0.25 * math.pi,
        "high": 0.75 * math.pi,
        "params": {"row_range": [0, 2], "col_range": [0, 2]},
    },
    "databank": None,
    "T": SIM_BUDGETS,
    "replay_T": REPLAY_BUDGETS,
    "trials": 50,
    "n_alpha": 100,
    "n_beta": 25,
    "lambda1": 0.89,
    "lambda2": 0.97,
    "sigma_v": 1e-4,
    "mu_f": 0.0,
    "sigma_f": 1e-6,
    "k0": 1.0,
    "r_min": None,
    "r_max": None,
    "message_scope": "particle",
    "naive_fill": math.pi / 2,
    "seed": 0,
    "out": "results",
    "threads": 1,
    "plots": True,
    "tune": {"T": 20, "n_pairs": 250},
}


class ConfigError(ValueError):
    """Invalid configuration value; message names the offending key."""


@dataclass
class RunConfig:
    data: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    @property
    def array(self) -> QubitArray:
        g = self.data["grid"]
        return build_grid(int(g["rows"]), int(g["cols"]), float(g["spacing"]))

    def true_field(self, array: QubitArray | None = None) -> TrueField:
        f = self.data["field"]
        return make_field(
            array or self.array, f["kind"], float(f["low"]), float(f["high"]), f.get("params") or {}
        )

    def noise(self) -> NoiseParams:
        return NoiseParams(
            sigma_v=float(self.data["sigma_v"]),
            mu_f=float(self.data["mu_f"]),
            sigma_f=float(self.data["sigma_f"]),
        )

    def filter_config(self, array: QubitArray | None = None) -> FilterConfig:
        array = array or self.array
        r_min = self.data["r_min"]
        r_max = self.data["r_max"]
        return FilterConfig(
            n_alpha=int(self.data["n_alpha"]),
            n_beta=int(self.data["n_beta"]),
            lambda1=float(self.data["lambda1"]),
            lambda2=float(self.data["lambda2"]),
            noise=self.noise(),
            r_min=float(array.spacing if r_min is None else r_min),
            r_max=float(max(array.diameter, array.spacing) if r_max is None else r_max),
            k0=float(self.data["k0"]),
            message_scope=self.data["message_scope"],
        )

    def snapshot(self) -> dict[str, Any]:
        return copy.deepcopy(self.data)


def _merge(base: dict, update: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict) and key != "params":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse {raw!r}") from exc
    return key.strip().split("."), value


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    sets: list[str] | None = None,
) -> RunConfig:
    """Defaults, then the YAML file, then ``--set`` items, then explicit flag overrides."""
    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
        if not isinstance(loaded, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        data = _merge(data, loaded)
    for item in sets or ():
        keys, value = parse_override(item)
        if keys[0] not in DEFAULTS:
            raise ConfigError(f"unknown config key {keys[0]!r}")
        node = data
        for k in keys[:-1]:
            if node.get(k) is None:
                node[k] = {}
            node = node[k]
        node[keys[-1]] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    cfg = RunConfig(data)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    d = cfg.data

    def check(ok: bool, key: str, msg: str) -> None:
        if not ok:
            raise ConfigError(f"{key}: {msg} (got {_get(d, key)!r})")

    g = d["grid"]
    for k in ("rows", "cols"):
        check(isinstance(g.get(k), int) and g[k] >= 1, f"grid.{k}", "must be a positive int")
    check(_num(g.get("spacing")) and g["spacing"] > 0, "grid.spacing", "must be > 0")
    for key in ("T", "replay_T"):
        T = d[key]
        check(
            isinstance(T, list) and len(T) > 0 and all(isinstance(t, int) and t >= 1 for t in T),
            key, "must be a non-empty list of ints >= 1",
        )
    check(isinstance(d["trials"], int) and d["trials"] >= 1, "trials", "must be an int >= 1")
    for k in ("n_alpha", "n_beta"):
        check(isinstance(d[k], int) and d[k] >= 1, k, "must be an int >= 1")
    for k in ("lambda1", "lambda2"):
        check(_num(d[k]) and 0 <= d[k] <= 1, k, "must lie in [0, 1]")
    check(_num(d["sigma_v"]) and 0 < d["sigma_v"] < 1, "sigma_v", "must lie in (0, 1)")
    check(_num(d["sigma_f"]) and d["sigma_f"] > 0, "sigma_f", "must be > 0")
    check(_num(d["mu_f"]), "mu_f", "must be a number")
    check(_num(d["k0"]) and d["k0"] >= 1, "k0", "must be >= 1")
    for k in ("r_min", "r_max"):
        check(d[k] is None or (_num(d[k]) and d[k] > 0), k, "must be > 0 or null")
    check(d["message_scope"] in MESSAGE_SCOPES, "message_scope", f"must be one of {MESSAGE_SCOPES}")
    check(isinstance(d["seed"], int) and d["seed"] >= 0, "seed", "must be a nonnegative int")
    check(isinstance(d["threads"], int) and d["threads"] >= 1, "threads", "must be an int >= 1")
    check(_num(d["naive_fill"]) and 0 <= d["naive_fill"] <= math.pi, "naive_fill", "must lie in [0, pi]")
    f = d["field"]
    check(f.get("kind") in FIELD_KINDS, "field.kind", f"must be one of {FIELD_KINDS}")
    check(
        _num(f.get("low")) and _num(f.get("high")) and 0 <= f["low"] <= f["high"] <= math.pi,
        "field", "need 0 <= low <= high <= pi",
    )
    t = d["tune"]
    check(isinstance(t.get("T"), int) and t["T"] >= 1, "tune.T", "must be an int >= 1")
    check(isinstance(t.get("n_pairs"), int) and t["n_pairs"] >= 1, "tune.n_pairs", "must be an int >= 1")
    try:
        array = cfg.array
        cfg.filter_config(array)
        if d["databank"] is None:
            cfg.true_field(array)
    except ConfigError:
        raise
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _get(d: Mapping, dotted: str):
    node: Any = d
    for k in dotted.split("."):
        if not isinstance(node, Mapping):
            return None
        node = node.get(k)
    return node


def dump_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.snapshot(), sort_keys=False)
