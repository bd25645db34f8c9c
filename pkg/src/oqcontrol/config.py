"""Scenario configuration files (TOML): defaults, parsing and validation."""
import copy
import math
import re
import sys

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import SystemParams
from .qops import check_density_matrix

SCENARIOS = ("case1-maxoverlap", "case2-sphere-batch", "steer-state", "steer-overlap",
             "pmp-check", "free-evolution")

DESCRIPTIONS = {
    "case1-maxoverlap": "overlap maximization from I/4 towards diag(1,0,0,0) with rho/chi/GPM methods",
    "case2-sphere-batch": "rho-method-reg on 50 coupling axes spread over the sphere",
    "steer-state": "annealing search of the Gaussian-envelope class for T + P ||rho(T) - target||",
    "steer-overlap": "annealing search for T + P |<rho(T), target> - M|",
    "pmp-check": "maximum-principle check of c = 0 at random angles for V1 and V2",
    "free-evolution": "uncontrolled evolution and its overlap gap",
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based source line when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


_CASE1_SYSTEM = {
    "eps": 0.1, "omega": [1.0, 0.5], "relax": [0.5, 0.5], "lamb": [0.5, 0.5],
    "theta": [math.pi / 3, math.pi / 4], "phi": [math.pi / 4, math.pi / 3],
    "interaction": "V1", "mu": 50.0, "n_max": 10.0,
}
_STEER_SYSTEM = dict(_CASE1_SYSTEM, theta=[math.pi / 2, math.pi / 2], phi=[0.0, 0.0])
_MIXED = [0.25, 0.25, 0.25, 0.25]
_CRAB = {"nu": [0.5, 1.0, 2.0], "h_u": [0.0, 2.0], "amp": [-10.0, 10.0], "C": [0.0, 5.0],
         "h_n": [0.0, 2.0], "T": [0.5, 2.0]}
_ANNEAL = {"P": 1000.0, "seeds": list(range(10)), "max_evals": 10000, "initial_temp": 5230.0,
           "visit": 2.62, "accept": -5.0, "restart_temp_ratio": 2e-5, "local_search": True}


def _krotov_run(name, variant, s, c0, thresholds, max_iters=100, target_I=5e-5, regularized=True):
    return {"name": name, "method": "krotov", "variant": variant, "regularized": regularized,
            "s": s, "alpha": 1.0, "singular_policy": "both", "c0": c0, "max_iters": max_iters,
            "eps_stop": 1e-12, "target_I": target_I, "thresholds": thresholds}


DEFAULTS = {
    "free-evolution": {
        "scenario": "free-evolution", "output": "runs/free-evolution", "T": 100.0, "N": 10000,
        "substeps": 2, "system": _CASE1_SYSTEM,
        "states": {"rho0": _MIXED, "target": [1.0, 0.0, 0.0, 0.0]},
        "thresholds": {"I_min": 4.3e-5, "I_max": 4.8e-5},
    },
    "pmp-check": {
        "scenario": "pmp-check", "output": "runs/pmp-check", "T": 100.0, "N": 10000,
        "substeps": 2, "system": _CASE1_SYSTEM,
        "states": {"rho0": _MIXED, "target": [1.0, 0.0, 0.0, 0.0]},
        "pmp": {"draws": 20, "seed": 0, "interactions": ["V1", "V2"], "tol": 1e-10},
        "thresholds": {"Ku_max": 1e-8, "Kn_max": 1e-10, "closed_form_max": 1e-8},
    },
    "case1-maxoverlap": {
        "scenario": "case1-maxoverlap", "output": "runs/case1-maxoverlap", "T": 100.0,
        "N": 10000, "substeps": 2, "system": _CASE1_SYSTEM,
        "states": {"rho0": _MIXED, "target": [1.0, 0.0, 0.0, 0.0]},
        "runs": [
            _krotov_run("rho-reg-s0", "rho", 0, [0.0, 0.0, 1.0], {"I_max": 5e-5, "cauchy_max": 6}),
            _krotov_run("chi-reg-s0", "chi", 0, [0.0, 0.0, 1.0], {"I_max": 5e-5, "cauchy_max": 6}),
            _krotov_run("rho-reg-s1", "rho", 1, [0.0, 0.0, 1.0], {"I_min": 0.005, "I_max": 0.05},
                        max_iters=1000, target_I=0.0),
            {"name": "gpm2", "method": "gpm", "variant": "gpm2",
             "schedule": [[math.inf, 1.0, 0.7], [0.1, 0.5, 0.85], [0.05, 0.3, 0.9]],
             "beta": [0.01, 0.1], "c0": [50.0, 10.0, 10.0], "max_iters": 1000, "target_I": 5e-5,
             "implicit": False, "thresholds": {"I_max": 5e-5, "cauchy_max": 1500}},
            {"name": "gpm1", "method": "gpm", "variant": "gpm1",
             "schedule": [[math.inf, 1.0, 0.0]], "beta": [0.01, 0.1], "c0": [50.0, 10.0, 10.0],
             "max_iters": 250, "target_I": 0.0, "implicit": False,
             "thresholds": {"I_min": 0.05}},
        ],
    },
    "case2-sphere-batch": {
        "scenario": "case2-sphere-batch", "output": "runs/case2-sphere-batch", "T": 70.0,
        "N": 7000, "substeps": 2, "workers": 4, "system": _CASE1_SYSTEM,
        "states": {"rho0": _MIXED, "target": [0.7, 0.1, 0.1, 0.1]},
        "batch": {"points": 50},
        "method": {"variant": "rho", "regularized": True, "s": 0, "alpha": 1.0,
                   "singular_policy": "both", "c0": [0.1, 1.0, 1.0], "max_iters": 100,
                   "eps_stop": 1e-12, "target_I": 5.6e-4},
        "thresholds": {"I_max": 5.6e-4, "cauchy_min": 3, "cauchy_max": 30,
                       "zero_I_min": 5.3e-4, "zero_I_max": 5.7e-4},
    },
    "steer-state": {
        "scenario": "steer-state", "output": "runs/steer-state", "N": 2000, "substeps": 2,
        "workers": 4, "system": _STEER_SYSTEM,
        "states": {"rho0": [1.0, 0.0, 0.0, 0.0], "target": [0.1, 0.1, 0.3, 0.5]},
        "anneal": dict(_ANNEAL, interactions=["V1", "V2"]),
        "crab": _CRAB,
        "thresholds": {"metric_max": 0.05},
    },
    "steer-overlap": {
        "scenario": "steer-overlap", "output": "runs/steer-overlap", "N": 2000, "substeps": 2,
        "workers": 4, "system": _STEER_SYSTEM,
        "states": {"rho0": [1.0, 0.0, 0.0, 0.0], "target": [0.1, 0.1, 0.3, 0.5]},
        "anneal": dict(_ANNEAL, interactions=["V1"], M=0.5),
        "crab": _CRAB,
        "thresholds": {"metric_max": 1e-3},
    },
}

# key -> (kind, required); kinds: float, int, bool, str, list:<n>, matrix, table, runs
_TOP = {"scenario": ("str", True), "output": ("str", True), "T": ("float", False),
        "N": ("int", True), "substeps": ("int", False), "workers": ("int", False),
        "system": ("table", True), "states": ("table", True), "thresholds": ("table", False)}
_SYSTEM = {"eps": "float", "omega": "list:2", "relax": "list:2", "lamb": "list:2",
           "theta": "list:2", "phi": "list:2", "interaction": "str", "mu": "float",
           "n_max": "float"}
_STATES = {"rho0": "matrix", "target": "matrix"}
_KROTOV = {"variant": "str", "regularized": "bool", "s": "int", "alpha": "float",
           "singular_policy": "str", "c0": "list:3", "max_iters": "int", "eps_stop": "float",
           "target_I": "float", "cauchy_budget": "int"}
_GPM = {"variant": "str", "schedule": "schedule", "beta": "list:2", "c0": "list:3",
        "max_iters": "int", "target_I": "float", "cauchy_budget": "int", "implicit": "bool"}
_THRESHOLDS = {"I_min": "float", "I_max": "float", "cauchy_min": "int", "cauchy_max": "int",
               "Ku_max": "float", "Kn_max": "float", "closed_form_max": "float",
               "metric_max": "float", "zero_I_min": "float", "zero_I_max": "float"}
_ANNEAL_KEYS = {"P": "float", "seeds": "intlist", "max_evals": "int", "initial_temp": "float",
                "visit": "float", "accept": "float", "restart_temp_ratio": "float",
                "local_search": "bool", "interactions": "strlist", "M": "float"}
_CRAB_KEYS = {"nu": "floatlist", "h_u": "list:2", "amp": "list:2", "C": "list:2",
              "h_n": "list:2", "T": "list:2"}
_PMP = {"draws": "int", "seed": "int", "interactions": "strlist", "tol": "float"}

_EXTRA = {
    "free-evolution": {},
    "pmp-check": {"pmp": _PMP},
    "case1-maxoverlap": {"runs": None},
    "case2-sphere-batch": {"batch": {"points": "int"}, "method": _KROTOV},
    "steer-state": {"anneal": _ANNEAL_KEYS, "crab": _CRAB_KEYS},
    "steer-overlap": {"anneal": _ANNEAL_KEYS, "crab": _CRAB_KEYS},
}


def list_scenarios():
    return list(SCENARIOS)


def default_config(scenario):
    if scenario not in DEFAULTS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    return copy.deepcopy(DEFAULTS[scenario])


def emit_default_config(scenario):
    """TOML text of the default configuration of ``scenario``."""
    cfg = default_config(scenario)
    header = f"# {scenario}: {DESCRIPTIONS[scenario]}\n"
    return header + tomli_w.dumps(cfg)


def _line_of(text, key, section=None):
    """Best-effort source line of ``key`` (inside ``[section]`` when given)."""
    if text is None:
        return None
    lines = text.splitlines()
    start = 0
    if section:
        pat = re.compile(r"^\s*\[+\s*" + re.escape(section) + r"\s*\]+")
        for i, line in enumerate(lines):
            if pat.match(line):
                start = i
                break
        else:
            return None
    kpat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start, len(lines)):
        if kpat.match(lines[i]):
            return i + 1
    return start + 1 if section else None


def _check_value(kind, value, where, text, key, section):
    def fail(msg):
        raise ConfigError(f"{where}: {msg}", _line_of(text, key, section))

    is_num = isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "float":
        if not is_num:
            fail("expected a number")
        return float(value)
    if kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            fail("expected an integer")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            fail("expected true or false")
        return value
    if kind == "str":
        if not isinstance(value, str):
            fail("expected a string")
        return value
    if kind.startswith("list:") or kind == "floatlist":
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            fail("expected a list of numbers")
        if kind.startswith("list:") and len(value) != int(kind[5:]):
            fail(f"expected {kind[5:]} numbers, got {len(value)}")
        return [float(v) for v in value]
    if kind == "intlist":
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                                  for v in value):
            fail("expected a list of integers")
        return value
    if kind == "strlist":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            fail("expected a list of strings")
        return value
    if kind == "schedule":
        if not isinstance(value, list) or not value or not all(
                isinstance(e, list) and len(e) == 3 for e in value):
            fail("expected a list of [threshold, alpha, theta] triples")
        return [[float(x) for x in e] for e in value]
    if kind == "matrix":
        try:
            return parse_matrix(value)
        except (TypeError, ValueError) as exc:
            fail(str(exc))
    raise AssertionError(kind)


def parse_matrix(value):
    """A 4x4 density matrix from a diagonal list or 4 rows of ``[re, im]`` pairs."""
    if isinstance(value, list) and len(value) == 4 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        m = np.diag(np.array(value, dtype=float)).astype(complex)
    elif (isinstance(value, list) and len(value) == 4
          and all(isinstance(r, list) and len(r) == 4 for r in value)):
        try:
            m = np.array([[complex(float(p[0]), float(p[1])) for p in row] for row in value])
        except (TypeError, IndexError, ValueError):
            raise ValueError("matrix rows must hold [re, im] pairs")
    else:
        raise ValueError("matrix must be 4 diagonal entries or 4 rows of [re, im] pairs")
    return check_density_matrix(m)


def _check_table(table, schema, where, text, section, required=True):
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table", _line_of(text, section.split(".")[-1]))
    out = {}
    for key, value in table.items():
        if key not in schema:
            raise ConfigError(f"{where}: unknown key {key!r}", _line_of(text, key, section))
        out[key] = _check_value(schema[key], value, f"{where}.{key}", text, key, section)
    return out


def validate(raw, text=None):
    """Check a parsed configuration; returns a normalized copy.

    Unknown keys, wrong types and impossible values raise :class:`ConfigError`
    with the offending line when ``text`` (the source) is given.
    """
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}",
                          _line_of(text, "scenario"))
    extra = _EXTRA[scenario]
    cfg = {}
    for key, value in raw.items():
        if key in _TOP:
            kind = _TOP[key][0]
        elif key in extra:
            kind = "table" if extra[key] is not None else "runs"
        else:
            raise ConfigError(f"unknown key {key!r} for scenario {scenario}", _line_of(text, key))
        if kind in ("table", "runs"):
            cfg[key] = value
        else:
            cfg[key] = _check_value(kind, value, key, text, key, None)
    for key, (kind, required) in _TOP.items():
        if required and key not in cfg:
            raise ConfigError(f"missing required key {key!r}")
    for key in extra:
        if key not in cfg:
            raise ConfigError(f"missing required table {key!r} for scenario {scenario}")
    if scenario not in ("steer-state", "steer-overlap") and "T" not in cfg:
        raise ConfigError("missing required key 'T'")
    cfg["system"] = _check_table(cfg["system"], _SYSTEM, "system", text, "system")
    cfg["states"] = _check_table(cfg["states"], _STATES, "states", text, "states")
    cfg["thresholds"] = _check_table(cfg.get("thresholds", {}), _THRESHOLDS, "thresholds", text, "thresholds")
    for key, schema in extra.items():
        if schema is not None:
            cfg[key] = _check_table(cfg[key], schema, key, text, key)
    if scenario == "case1-maxoverlap":
        cfg["runs"] = _check_runs(cfg["runs"], text)
    for key in ("system", "states"):
        missing = set((_SYSTEM if key == "system" else _STATES)) - set(cfg[key])
        if missing:
            raise ConfigError(f"{key}: missing {', '.join(sorted(missing))}", _line_of(text, key))
    _check_semantics(cfg, text)
    return cfg


def _check_runs(runs, text):
    if not isinstance(runs, list) or not runs:
        raise ConfigError("runs: expected at least one [[runs]] table", _line_of(text, "runs"))
    out = []
    names = set()
    for i, run in enumerate(runs):
        where = f"runs[{i}]"
        if not isinstance(run, dict):
            raise ConfigError(f"{where}: expected a table")
        run = dict(run)
        method = run.pop("method", None)
        name = run.pop("name", None)
        thresholds = run.pop("thresholds", {})
        if method not in ("krotov", "gpm"):
            raise ConfigError(f"{where}: method must be 'krotov' or 'gpm'", _line_of(text, "method"))
        if not isinstance(name, str) or not name or name in names:
            raise ConfigError(f"{where}: needs a unique name", _line_of(text, "name"))
        names.add(name)
        schema = _KROTOV if method == "krotov" else _GPM
        body = _check_table(run, schema, where, text, "runs")
        body["thresholds"] = _check_table(thresholds, _THRESHOLDS, f"{where}.thresholds", text,
                                          "runs.thresholds")
        out.append({"name": name, "method": method, **body})
    return out


def _check_semantics(cfg, text):
    try:
        system_params(cfg)
    except ValueError as exc:
        raise ConfigError(f"system: {exc}", _line_of(text, "system"))
    if cfg.get("T") is not None and not cfg["T"] > 0:
        raise ConfigError("T must be positive", _line_of(text, "T"))
    if cfg["N"] < 1:
        raise ConfigError("N must be positive", _line_of(text, "N"))
    sub = cfg.get("substeps", 2)
    if sub < 2 or sub % 2:
        raise ConfigError("substeps must be an even integer >= 2", _line_of(text, "substeps"))
    if cfg.get("workers", 1) < 1:
        raise ConfigError("workers must be positive", _line_of(text, "workers"))
    anneal = cfg.get("anneal")
    if anneal is not None:
        if cfg["scenario"] == "steer-overlap":
            M = anneal.get("M")
            if M is None or not 0 < M < 1:
                raise ConfigError("anneal.M is required and must lie in (0, 1)",
                                  _line_of(text, "M", "anneal"))
        for v in anneal.get("interactions", ["V1"]):
            if v not in ("V1", "V2"):
                raise ConfigError(f"anneal.interactions: unknown interaction {v!r}",
                                  _line_of(text, "interactions", "anneal"))
        if anneal.get("max_evals", 1) < 1:
            raise ConfigError("anneal.max_evals must be positive", _line_of(text, "max_evals", "anneal"))
        if anneal.get("P", 1.0) <= 0:
            raise ConfigError("anneal.P must be positive", _line_of(text, "P", "anneal"))


def system_params(cfg, **overrides):
    s = dict(cfg["system"], **overrides)
    return SystemParams(eps=s["eps"], omega=tuple(s["omega"]), relax=tuple(s["relax"]),
                        lamb=tuple(s["lamb"]), theta=tuple(s["theta"]), phi=tuple(s["phi"]),
                        interaction=s["interaction"], mu=s["mu"], n_max=s["n_max"])


def loads(text):
    """Parse and validate TOML source text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", int(m.group(1)) if m else None)
    return validate(raw, text)


def load(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def raw_loads(text):
    """Parse without validation (used to check default round-trips)."""
    return tomllib.loads(text)
