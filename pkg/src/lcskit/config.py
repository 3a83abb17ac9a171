"""Run configuration: TOML file, dotted overrides, validation."""
from __future__ import annotations

import copy
import math
import os
import sys

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import IntegratorParams, make_field
from .flowmap import Grid2
from .geometry import make_chart


class ConfigError(ValueError):
    """Invalid or unparseable run configuration."""


FIELD_KEYS = {
    "nonlinear_saddle": {"L": 2.0, "q1": 1.0, "q2": 0.15},
    "linear_saddle": {"lambda": 0.3},
    "sphere_rotation": {"omega": 1.0},
}
CHART_KEYS = {
    "euclidean": {},
    "sphere": {"radius": 1.0, "pole_clamp": 1e-3},
}

DEFAULTS = {
    "chart": {"name": "euclidean"},
    "field": {"name": "nonlinear_saddle", "L": 2.0, "q1": 1.0, "q2": 0.15},
    "grid": {"x_range": [-1.0, 1.0], "y_range": [-1.0, 1.0], "nx": 201, "ny": 201},
    "time": {"t1": 0.0, "T": 1.0, "direction": "forward"},
    "integrator": {"method": "dopri45", "rtol": 1e-10, "atol": 1e-10, "step": 1e-2,
                   "max_steps": 100000},
    "deformation": {"h": 1e-5, "estimator": "fd", "gap_tol": 1e-9},
    "lines": {"seeds": [[0.01, 0.0], [0.0, 0.01]], "kinds": ["strainline", "stretchline"],
              "step": 1e-3, "max_len": 0.4, "normal_angle": 5.0, "coverage": 0.9,
              "first_order": 1e-3},
    "extrema": {"scalar": "ftle_f", "direction": "xi2", "kind": "max"},
    "verify": {"samples": 100, "transfer_samples": 20, "seed": 0,
               "incompressibility_tol": 1e-3, "relation_tol": 1e-3,
               "ftle_tol": 2e-3, "transfer_tol1": 1e-3, "transfer_tol2": 1e-2},
    "output": {"dir": "out", "formats": ["csv", "lcsk"]},
    "run": {"threads": 0},
}

_SECTIONS = tuple(DEFAULTS)


def default_config():
    return copy.deepcopy(DEFAULTS)


def _merge(base, extra, where=""):
    for key, value in extra.items():
        if key not in base and where not in ("field", "chart"):
            raise ConfigError(f"unknown key {where + '.' if where else ''}{key}")
        if isinstance(value, dict):
            if not isinstance(base.get(key), dict):
                raise ConfigError(f"{key} is not a section")
            _merge(base[key], value, key)
        else:
            base[key] = value


def _fill_named(cfg, section, table):
    """Drop keys of other fields/charts and fill defaults for the chosen one."""
    sec = cfg[section]
    name = sec.get("name")
    if name not in table:
        raise ConfigError(f"unknown {section} {name!r}; choose one of {sorted(table)}")
    extra = set(sec) - {"name"} - set(table[name])
    if extra:
        raise ConfigError(f"{section} {name!r} does not take {sorted(extra)}")
    cfg[section] = {"name": name, **{k: sec.get(k, v) for k, v in table[name].items()}}


def parse_value(text):
    """Parse an override value as a TOML literal, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` strings in order."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2 or parts[0] not in _SECTIONS:
            raise ConfigError(f"override key {key!r} must be section.key")
        sec, name = parts
        if name not in cfg[sec] and sec not in ("field", "chart"):
            raise ConfigError(f"unknown key {key!r}")
        if sec in ("field", "chart") and name == "name" and cfg[sec].get("name") != text.strip():
            # switching field or chart resets its parameters
            cfg[sec] = {"name": parse_value(text.strip())}
            continue
        cfg[sec][name] = parse_value(text.strip())
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, then the TOML file at ``path``, then ``overrides``; validated."""
    user = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
    cfg = _merged(user)
    apply_overrides(cfg, overrides)
    return validate(cfg)


def loads(text):
    try:
        return validate(_merged(tomllib.loads(text)))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc


def _merged(user):
    cfg = default_config()
    for sec in ("field", "chart"):
        if "name" in user.get(sec, {}):
            cfg[sec] = {"name": user[sec]["name"]}
    _merge(cfg, user)
    return cfg


def dumps(cfg):
    return tomli_w.dumps(cfg)


def _num(cfg, sec, key, positive=False, integer=False):
    v = cfg[sec][key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{sec}.{key} must be a number")
    if not math.isfinite(v):
        raise ConfigError(f"{sec}.{key} must be finite")
    if integer and int(v) != v:
        raise ConfigError(f"{sec}.{key} must be an integer")
    if positive and not v > 0:
        raise ConfigError(f"{sec}.{key} must be positive")
    cfg[sec][key] = int(v) if integer else float(v)


def validate(cfg):
    """Normalise types and check ranges; raises ``ConfigError``."""
    cfg = copy.deepcopy(cfg)
    _fill_named(cfg, "field", FIELD_KEYS)
    _fill_named(cfg, "chart", CHART_KEYS)
    for k in FIELD_KEYS[cfg["field"]["name"]]:
        _num(cfg, "field", k)
    for k in CHART_KEYS[cfg["chart"]["name"]]:
        _num(cfg, "chart", k, positive=True)
    g = cfg["grid"]
    for k in ("x_range", "y_range"):
        if not (isinstance(g[k], list) and len(g[k]) == 2):
            raise ConfigError(f"grid.{k} must be a two-element list")
        g[k] = [float(v) for v in g[k]]
    for k in ("nx", "ny"):
        _num(cfg, "grid", k, positive=True, integer=True)
    t = cfg["time"]
    _num(cfg, "time", "t1")
    _num(cfg, "time", "T")
    if t["T"] == 0:
        raise ConfigError("time.T must be nonzero")
    if t["direction"] not in ("forward", "backward"):
        raise ConfigError("time.direction must be 'forward' or 'backward'")
    _num(cfg, "integrator", "max_steps", positive=True, integer=True)
    for k in ("rtol", "atol", "step"):
        _num(cfg, "integrator", k, positive=True)
    _num(cfg, "deformation", "h", positive=True)
    _num(cfg, "deformation", "gap_tol", positive=True)
    if cfg["deformation"]["estimator"] not in ("fd", "variational"):
        raise ConfigError("deformation.estimator must be 'fd' or 'variational'")
    ln = cfg["lines"]
    for k in ("step", "max_len", "normal_angle", "coverage", "first_order"):
        _num(cfg, "lines", k, positive=True)
    if len(ln["seeds"]) != len(ln["kinds"]):
        raise ConfigError("lines.seeds and lines.kinds must have equal length")
    ln["seeds"] = [[float(a), float(b)] for a, b in ln["seeds"]]
    for k in ln["kinds"]:
        if k not in ("strainline", "stretchline"):
            raise ConfigError(f"unknown line kind {k!r}")
    ex = cfg["extrema"]
    if ex["scalar"] not in ("s1", "s2", "ftle_f"):
        raise ConfigError("extrema.scalar must be s1, s2 or ftle_f")
    if ex["direction"] not in ("xi1", "xi2"):
        raise ConfigError("extrema.direction must be xi1 or xi2")
    if ex["kind"] not in ("max", "min"):
        raise ConfigError("extrema.kind must be max or min")
    for k in ("samples", "transfer_samples"):
        _num(cfg, "verify", k, positive=True, integer=True)
    _num(cfg, "verify", "seed", integer=True)
    for k in ("incompressibility_tol", "relation_tol", "ftle_tol", "transfer_tol1",
              "transfer_tol2"):
        _num(cfg, "verify", k, positive=True)
    for f in cfg["output"]["formats"]:
        if f not in ("csv", "lcsk"):
            raise ConfigError(f"unknown output format {f!r}")
    _num(cfg, "run", "threads", integer=True)
    if cfg["run"]["threads"] < 0:
        raise ConfigError("run.threads must be >= 0 (0 uses every core)")
    try:
        build(cfg)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


class Run:
    """Objects built from a validated configuration."""

    def __init__(self, cfg):
        self.cfg = cfg
        ch = {k: v for k, v in cfg["chart"].items() if k != "name"}
        self.chart = make_chart(cfg["chart"]["name"], **ch)
        fp = {k: v for k, v in cfg["field"].items() if k != "name"}
        self.field = make_field(cfg["field"]["name"], **fp)
        g = cfg["grid"]
        self.grid = Grid2(tuple(g["x_range"]), tuple(g["y_range"]), g["nx"], g["ny"])
        i = cfg["integrator"]
        self.ip = IntegratorParams(i["method"], i["rtol"], i["atol"], i["step"], i["max_steps"])
        t = cfg["time"]
        sign = 1.0 if t["direction"] == "forward" else -1.0
        self.t1 = t["t1"]
        self.t2 = t["t1"] + sign * abs(t["T"])
        self.h = cfg["deformation"]["h"]
        self.estimator = cfg["deformation"]["estimator"]
        self.gap_tol = cfg["deformation"]["gap_tol"]
        self.threads = cfg["run"]["threads"] or (os.cpu_count() or 1)


def build(cfg):
    return Run(cfg)
