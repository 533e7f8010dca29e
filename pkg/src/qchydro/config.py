"""Run configuration: strict JSON parsing, schema validation and defaults.

A config is one JSON document. Unknown keys, duplicate keys, type and range
violations are all collected and reported together in a :class:`ConfigError`.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import jsonschema

from . import presets
from .errors import ConfigError
from .models import INCOMPRESSIBLE, MODELS, PLANAR_ONLY, THREE_D_ONLY, VacuumPolicy

SCALAR_KINDS = presets.SCALAR_KINDS
SETUPS = {"dephasing_reference": presets.dephasing_reference}
NEEDS_C = {"qc3d", "qc3d_stress", "qc_planar", "pure_state_planar"}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_vec = {"type": "array", "items": {"type": "integer"}}
_num_vec = {"type": "array", "items": _num}

_mode = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "amp": _num,
        "k": _int_vec,
        "phase": _num,
        "func": {"enum": ["sin", "cos"]},
    },
}
_product = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "amp": _num,
        "k": _int_vec,
        "phase": _num_vec,
        "funcs": {"type": "array", "items": {"enum": ["sin", "cos", None]}},
    },
}
SCALAR = {
    "oneOf": [
        _num,
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(SCALAR_KINDS)},
                "value": _num,
                "offset": _num,
                "modes": {"type": "array", "items": _mode},
                "products": {"type": "array", "items": _product},
                "center": _num_vec,
                "width": _pos,
                "amp": _num,
                "background": _num,
                "scale": _num,
            },
        },
    ]
}
VECTOR = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["zero", "components", "cellular"]},
        "components": {"type": "array", "items": SCALAR},
        "amp": _num,
    },
}
_matrix_rows = {"type": "array", "items": {"type": "array", "items": _num}}
MATRIX = {
    "oneOf": [
        {"enum": ["identity", "sigma_x", "sigma_y", "sigma_z"]},
        _matrix_rows,
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["re"],
            "properties": {"re": _matrix_rows, "im": _matrix_rows},
        },
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "model"],
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["shape"],
            "properties": {
                "shape": {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 2, "maxItems": 3},
                "extent": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 3},
            },
        },
        "model": {"enum": sorted(MODELS)},
        "setup": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {"name": {"enum": sorted(SETUPS)}, "params": {"type": "object"}},
        },
        "hamiltonian": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "V0": SCALAR,
                "couplings": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["V", "matrix"],
                        "properties": {"V": SCALAR, "matrix": MATRIX},
                    },
                },
                "M": _pos,
                "hbar": _pos,
                "n": {"type": "integer", "minimum": 2},
                "eos": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["none", "polytropic"]},
                        "kappa": {"type": "number", "minimum": 0},
                        "gamma": {"type": "number", "exclusiveMinimum": 1},
                    },
                },
            },
        },
        "state": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["pure-state", "density-matrix"]},
                "D": SCALAR,
                "u": VECTOR,
                "theta": SCALAR,
                "phi": SCALAR,
                "bloch_radius": {"type": "number", "minimum": 0, "maximum": 1},
                "b": SCALAR,
                "b_gradient": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "c": SCALAR,
                "beta": _num,
            },
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dt", "t_end"],
            "properties": {
                "dt": _pos,
                "t_end": {"type": "number", "minimum": 0},
                "cfl_cap": {"oneOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0, "maximum": 1}]},
                "hermitize_each_stage": {"type": "boolean"},
                "renormalize_psi": {"type": "boolean"},
                "deterministic": {"type": "boolean"},
            },
        },
        "vacuum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"floor_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}},
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "every": {"type": "integer", "minimum": 1},
                "loops": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["center", "radius"],
                        "properties": {
                            "center": _num_vec,
                            "radius": _pos,
                            "nodes": {"type": "integer", "minimum": 32},
                            "name": {"type": "string"},
                        },
                    },
                },
            },
        },
        "snapshots": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"every": {"type": "integer", "minimum": 0}},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string", "minLength": 1}},
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULTS = {
    "hamiltonian": {"V0": 0.0, "couplings": [], "M": 1.0, "hbar": 1.0, "n": 2, "eos": {"kind": "none"}},
    "state": {"mode": "density-matrix", "D": 1.0, "u": {"kind": "zero"}, "theta": 0.0, "phi": 0.0,
              "bloch_radius": 1.0, "b_gradient": [0.0, 0.0, 0.0], "beta": 1.0},
    "integrator": {"cfl_cap": None, "hermitize_each_stage": True, "renormalize_psi": True, "deterministic": True},
    "vacuum": {"floor_fraction": VacuumPolicy.floor_fraction},
    "diagnostics": {"every": 1, "loops": []},
    "snapshots": {"every": 0},
    "output": {},
    "seed": 0,
}


@dataclass
class RunConfig:
    """Validated configuration with every default filled in; ``raw`` is the JSON echo."""

    raw: dict
    grid: dict
    model: str
    hamiltonian: dict
    state: dict
    integrator: dict
    vacuum: dict
    diagnostics: dict
    snapshots: dict
    output: dict
    seed: int
    source: str | None = None
    extras: dict = field(default_factory=dict)

    @property
    def dim(self):
        return len(self.grid["shape"])


# -- strict JSON -------------------------------------------------------------------------


def _duplicate_keys(text):
    """Scan JSON text and return ``(key, line)`` for every key repeated within one object."""
    found = []
    stack = []  # per container: None for arrays, a set of keys for objects
    i, n, line = 0, len(text), 1
    expect_key = False
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
        elif ch == "{":
            stack.append(set())
            expect_key = True
        elif ch == "[":
            stack.append(None)
        elif ch in "}]":
            if stack:
                stack.pop()
            expect_key = False
        elif ch == ",":
            expect_key = bool(stack) and stack[-1] is not None
        elif ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            if expect_key and stack and stack[-1] is not None:
                key = json.loads(text[i:j + 1])
                if key in stack[-1]:
                    found.append((key, line))
                stack[-1].add(key)
                expect_key = False
            line += text.count("\n", i, j)
            i = j
        i += 1
    return found


def _reject_constant(name):
    raise ValueError(f"non-standard JSON constant {name}")


def load_json(text):
    """Parse JSON text rejecting duplicate keys and ``NaN``/``Infinity`` literals."""
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    dups = _duplicate_keys(text)
    if dups:
        raise ConfigError([f"duplicate key {k!r} at line {ln}" for k, ln in dups])
    return data


# -- validation -------------------------------------------------------------------------


def _path(err):
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _semantic_errors(cfg):
    errs = []
    dim = len(cfg["grid"]["shape"])
    model = cfg["model"]
    ext = cfg["grid"].get("extent")
    if ext is not None and len(ext) != dim:
        errs.append(f"grid.extent has {len(ext)} entries but grid.shape has {dim}")
    need = 2 if model in PLANAR_ONLY else 3 if model in THREE_D_ONLY else None
    if need is not None and need != dim:
        errs.append(f"model = {model!r} requires a {need}D grid but grid.shape = {cfg['grid']['shape']} is {dim}D")
    st = cfg["state"]
    ham = cfg["hamiltonian"]
    pure = st["mode"] == "pure-state"
    if ham["n"] != 2:
        errs.append(f"hamiltonian.n = {ham['n']}: the Bloch-angle state presets need n = 2")
    for i, cpl in enumerate(ham["couplings"]):
        m = cpl["matrix"]
        rows = m if isinstance(m, list) else (m.get("re") if isinstance(m, dict) else None)
        if rows is not None and (len(rows) != ham["n"] or any(len(r) != ham["n"] for r in rows)):
            errs.append(f"hamiltonian.couplings.{i}.matrix must be {ham['n']}x{ham['n']}")
        if isinstance(m, dict) and "im" in m and (len(m["im"]) != ham["n"] or any(len(r) != ham["n"] for r in m["im"])):
            errs.append(f"hamiltonian.couplings.{i}.matrix.im must be {ham['n']}x{ham['n']}")
    if model == "pure_state_planar" and not pure:
        errs.append("model 'pure_state_planar' requires state.mode = 'pure-state'")
    if cfg["diagnostics"]["loops"] and not pure:
        errs.append("diagnostics.loops (circulation) requires state.mode = 'pure-state'")
    for i, lp in enumerate(cfg["diagnostics"]["loops"]):
        if dim != 2:
            errs.append(f"diagnostics.loops.{i}: tracer loops are planar and need a 2D grid")
        elif len(lp["center"]) != 2:
            errs.append(f"diagnostics.loops.{i}.center needs 2 coordinates")
    if "b" in st and dim != 3:
        errs.append("state.b is only used on 3D grids; planar models carry beta")
    if model in INCOMPRESSIBLE and "c" in st:
        errs.append(f"model {model!r} sets c~ = beta D; remove state.c")
    for key in ("D", "theta", "phi", "b", "c"):
        errs.extend(_scalar_errors(st.get(key), f"state.{key}", dim))
    u = st["u"]
    if u.get("kind") == "components":
        comps = u.get("components", [])
        if len(comps) != dim:
            errs.append(f"state.u.components has {len(comps)} entries but the grid is {dim}D")
        for i, c in enumerate(comps):
            errs.extend(_scalar_errors(c, f"state.u.components.{i}", dim))
    elif u.get("kind") == "cellular" and dim != 2:
        errs.append("state.u kind 'cellular' needs a 2D grid")
    errs.extend(_scalar_errors(ham["V0"], "hamiltonian.V0", dim))
    for i, cpl in enumerate(ham["couplings"]):
        errs.extend(_scalar_errors(cpl["V"], f"hamiltonian.couplings.{i}.V", dim))
    it = cfg["integrator"]
    if it["deterministic"] and it["cfl_cap"] is not None:
        errs.append("integrator.cfl_cap (adaptive dt) cannot be combined with integrator.deterministic")
    return errs


def _scalar_errors(spec, where, dim):
    if not isinstance(spec, dict):
        return []
    errs = []
    kind = spec.get("kind")
    for i, m in enumerate(spec.get("modes", [])):
        if "k" in m and len(m["k"]) != dim:
            errs.append(f"{where}.modes.{i}.k has {len(m['k'])} entries but the grid is {dim}D")
    if kind == "gaussian":
        if "width" not in spec:
            errs.append(f"{where}: gaussian preset needs 'width'")
        if "center" in spec and len(spec["center"]) != dim:
            errs.append(f"{where}.center has {len(spec['center'])} entries but the grid is {dim}D")
    if kind == "equal_D" and where == "state.D":
        errs.append("state.D cannot be the equal_D preset")
    return errs


def validate(data, source=None):
    """Validate parsed JSON and return a :class:`RunConfig` with defaults filled in."""
    if not isinstance(data, dict):
        raise ConfigError(["config must be a JSON object"])
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errs:
        raise ConfigError([f"{_path(e)}: {e.message}" for e in errs])
    cfg = copy.deepcopy(data)
    if "setup" in cfg:
        params = cfg["setup"].get("params", {})
        try:
            base = SETUPS[cfg["setup"]["name"]](**params)
        except TypeError as exc:
            raise ConfigError([f"setup.params: {exc}"]) from exc
        cfg["state"] = _merge(base["state"], cfg.get("state", {}))
        cfg["hamiltonian"] = _merge(base["hamiltonian"], cfg.get("hamiltonian", {}))
        # the named setup must itself satisfy the schema once merged
        sub = {k: cfg[k] for k in ("state", "hamiltonian")}
        sub.update(grid=cfg["grid"], model=cfg["model"])
        serrs = list(validator.iter_errors(sub))
        if serrs:
            raise ConfigError([f"{_path(e)}: {e.message}" for e in serrs])
    for key, dflt in DEFAULTS.items():
        if isinstance(dflt, dict):
            cfg[key] = _merge(dflt, cfg.get(key, {}))
        else:
            cfg.setdefault(key, dflt)
    if cfg["model"] in NEEDS_C and "c" not in cfg["state"]:
        cfg["state"]["c"] = {"kind": "equal_D"}
    if "integrator" not in data:
        raise ConfigError(["<root>: 'integrator' is a required property"])
    errs = _semantic_errors(cfg)
    if errs:
        raise ConfigError(errs)
    return RunConfig(
        raw=data,
        grid=cfg["grid"],
        model=cfg["model"],
        hamiltonian=cfg["hamiltonian"],
        state=cfg["state"],
        integrator=cfg["integrator"],
        vacuum=cfg["vacuum"],
        diagnostics=cfg["diagnostics"],
        snapshots=cfg["snapshots"],
        output=cfg["output"],
        seed=cfg["seed"],
        source=source,
    )


def parse_config(path):
    """Read, parse and validate a config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from exc
    return validate(load_json(text), source=str(path))


def make_grid(cfg):
    from .fields import Grid

    shape = tuple(cfg.grid["shape"])
    extent = cfg.grid.get("extent") or [2 * math.pi] * len(shape)
    return Grid(shape, tuple(e / n for e, n in zip(extent, shape)))
