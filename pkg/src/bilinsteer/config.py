"""Run configuration: schema validation, state/mask specs and the preset library."""

from __future__ import annotations

import ast
import copy
import json
import operator
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .grid import Field, SpatialGrid, SupportMask, build_grid, field_from_csv
from .io import SCHEMA, config_digest
from .pde import NonlinearitySpec, make_nonlinearity
from .steer import SteeringProblem

# -- schema ------------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pos_list = {"type": "array", "items": _pos}

STATE_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["eigenfunction", "product-eigenfunction", "linear-difference", "coordinate",
                          "constant", "hat", "step", "scaled", "pointwise-product", "csv-file", "masked"]},
        "k": {"type": "integer", "minimum": 1},
        "k1": {"type": "integer", "minimum": 1},
        "k2": {"type": "integer", "minimum": 1},
        "axis": {"type": "integer", "minimum": 0, "maximum": 1},
        "value": _num,
        "center": {"oneOf": [_num, {"type": "array", "items": _num}]},
        "width": _pos,
        "height": _num,
        "a": _num,
        "b": _num,
        "factor": _num,
        "multiplier": {"type": "string"},
        "path": {"type": "string"},
        "inner": {"$ref": "#/$defs/state"},
        "mask": {"$ref": "#/$defs/mask"},
    },
    "additionalProperties": False,
}

MASK_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["full", "box", "ball"]},
        "lower": {"type": "array", "items": _num},
        "upper": {"type": "array", "items": _num},
        "center": {"type": "array", "items": _num},
        "radius": _pos,
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"state": STATE_SCHEMA, "mask": MASK_SCHEMA},
    "type": "object",
    "required": ["schema", "problem"],
    "properties": {
        "schema": {"const": SCHEMA},
        "problem": {
            "type": "object",
            "required": ["grid", "y0", "yd"],
            "properties": {
                "grid": {
                    "type": "object",
                    "required": ["d", "N"],
                    "properties": {"d": {"enum": [1, 2]}, "N": {"type": "integer", "minimum": 3}},
                    "additionalProperties": False,
                },
                "y0": {"$ref": "#/$defs/state"},
                "yd": {"$ref": "#/$defs/state"},
                "mask": {"$ref": "#/$defs/mask"},
                "nonlinearity": {
                    "type": "object",
                    "required": ["name"],
                    "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
                    "additionalProperties": False,
                },
                "epsilon": _pos,
                "T0": _pos,
                "steps_per_T": {"type": "integer", "minimum": 100},
                "delta": _pos,
                "a_max": _pos,
                "delta_E": _pos,
                "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "T_min": _pos,
            },
            "additionalProperties": False,
        },
        "steer": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["theorem1", "corollary1", "fixed-time"]},
                "T": _pos,
                "case": {"enum": ["a", "b"]},
                "amplification": {"enum": ["spectral", "gronwall"]},
                "r_schedule": {**_pos_list, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {"T_list": {**_pos_list, "minItems": 3}},
            "additionalProperties": False,
        },
        "bernstein": {
            "type": "object",
            "properties": {
                "T": _pos,
                "n_list": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "mollify": {
            "type": "object",
            "properties": {"field": {"$ref": "#/$defs/state"}, "r_list": {**_pos_list, "minItems": 1}},
            "additionalProperties": False,
        },
        "hold": {
            "type": "object",
            "properties": {"target": {"$ref": "#/$defs/state"}, "T": _pos, "dt": _pos},
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "emit_trajectory": {"type": "boolean"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

# -- multiplier expressions -----------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
          "abs": np.abs, "tanh": np.tanh}
_CONSTS = {"pi": np.pi, "e": np.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_CMPOPS = {ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt, ast.GtE: operator.ge}


def eval_expression(text: str, variables: dict):
    """Evaluate an arithmetic expression over numpy arrays.

    Only numbers, the given variables, pi/e, + - * / **, unary minus,
    comparisons (as 0/1 indicators) and a few elementwise functions are allowed.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {text!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in variables:
                return variables[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
            return _CMPOPS[type(node.ops[0])](ev(node.left), ev(node.comparators[0])).astype(float)
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ConfigError(f"unsupported construct in expression {text!r}")

    with np.errstate(all="ignore"):
        return ev(tree)


# -- state and mask specs -----------------------------------------------------------------


def _variables(grid: SpatialGrid) -> dict:
    c = grid.coords
    if grid.d == 1:
        return {"x": c[0], "x1": c[0]}
    return {"x1": c[0], "x2": c[1]}


def build_mask(spec: dict | None, grid: SpatialGrid) -> SupportMask:
    spec = spec or {"kind": "full"}
    kind = spec["kind"]
    c = grid.coords
    if kind == "full":
        return SupportMask.full(grid)
    if kind == "box":
        lo, hi = spec.get("lower"), spec.get("upper")
        if lo is None or hi is None or len(lo) != grid.d or len(hi) != grid.d:
            raise ConfigError(f"box mask needs lower/upper of length {grid.d}")
        inside = np.ones(grid.size, dtype=bool)
        for i in range(grid.d):
            inside &= (c[i] > lo[i]) & (c[i] < hi[i])
        return SupportMask(grid, inside)
    if kind == "ball":
        center, radius = spec.get("center"), spec.get("radius")
        if center is None or radius is None or len(center) != grid.d:
            raise ConfigError(f"ball mask needs center of length {grid.d} and radius")
        s2 = sum((c[i] - center[i]) ** 2 for i in range(grid.d))
        return SupportMask(grid, s2 < radius**2)
    raise ConfigError(f"unknown mask kind {kind!r}")


def _require(spec, *keys):
    missing = [k for k in keys if k not in spec]
    if missing:
        raise ConfigError(f"state kind {spec['kind']!r} needs {', '.join(missing)}")


def build_state(spec: dict, grid: SpatialGrid, base_dir: Path | None = None) -> Field:
    kind = spec["kind"]
    c = grid.coords
    if kind == "eigenfunction":
        k = spec.get("k", 1)
        vals = np.ones(grid.size)
        for x in c:
            vals = vals * np.sin(k * np.pi * x)
        return Field(grid, vals)
    if kind == "product-eigenfunction":
        if grid.d != 2:
            raise ConfigError("product-eigenfunction needs a 2D grid")
        return Field(grid, np.sin(spec.get("k1", 1) * np.pi * c[0]) * np.sin(spec.get("k2", 1) * np.pi * c[1]))
    if kind == "linear-difference":
        if grid.d != 2:
            raise ConfigError("linear-difference needs a 2D grid")
        return Field(grid, c[0] - c[1])
    if kind == "coordinate":
        axis = spec.get("axis", 0)
        if axis >= grid.d:
            raise ConfigError(f"axis {axis} out of range for d={grid.d}")
        return Field(grid, c[axis].copy())
    if kind == "constant":
        _require(spec, "value")
        return Field(grid, np.full(grid.size, float(spec["value"])))
    if kind == "hat":
        center = spec.get("center", 0.5)
        center = [center] * grid.d if np.ndim(center) == 0 else list(center)
        if len(center) != grid.d:
            raise ConfigError("hat center has the wrong length")
        width, height = spec.get("width", 0.25), spec.get("height", 1.0)
        vals = np.full(grid.size, float(height))
        for x, x0 in zip(c, center):
            vals = vals * np.maximum(0.0, 1.0 - np.abs(x - x0) / width)
        return Field(grid, vals)
    if kind == "step":
        a, b = spec.get("a", 0.0), spec.get("b", 0.5)
        x = c[spec.get("axis", 0)]
        return Field(grid, np.where((x > a) & (x < b), float(spec.get("value", 1.0)), 0.0))
    if kind == "scaled":
        _require(spec, "inner", "factor")
        return build_state(spec["inner"], grid, base_dir) * float(spec["factor"])
    if kind == "pointwise-product":
        _require(spec, "inner", "multiplier")
        inner = build_state(spec["inner"], grid, base_dir)
        m = np.broadcast_to(eval_expression(spec["multiplier"], _variables(grid)), (grid.size,))
        if not np.all(np.isfinite(m)):
            raise ConfigError(f"multiplier {spec['multiplier']!r} is not finite on the grid")
        return Field(grid, inner.values * m)
    if kind == "csv-file":
        _require(spec, "path")
        path = Path(spec["path"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            return field_from_csv(grid, path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read field from {path}: {exc}") from None
    if kind == "masked":
        _require(spec, "inner", "mask")
        inner = build_state(spec["inner"], grid, base_dir)
        return Field(grid, inner.values * build_mask(spec["mask"], grid).values)
    raise ConfigError(f"unknown state kind {kind!r}")


# -- presets ---------------------------------------------------------------------------------

_EIG = {"kind": "eigenfunction", "k": 1}
_EXAMPLE_O = {"kind": "box", "lower": [0.1, 0.1], "upper": [0.9, 0.9]}
_EXAMPLE_Y0 = {"kind": "masked", "inner": {"kind": "linear-difference"}, "mask": _EXAMPLE_O}


def _preset(problem, **sections):
    return {"schema": SCHEMA, "problem": problem, **sections}


PRESETS = {
    "eigenfunction-doubling": _preset(
        {"grid": {"d": 1, "N": 199}, "y0": _EIG, "yd": {"kind": "scaled", "inner": _EIG, "factor": 2.0},
         "nonlinearity": {"name": "zero"}, "epsilon": 0.05},
        steer={"mode": "theorem1"}, sweep={"T_list": [0.1, 0.05, 0.025, 0.0125]},
        bernstein={"T": 0.1, "n_list": [25, 50, 100]}, hold={"target": _EIG, "T": 0.5, "dt": 1e-3}),
    "semilinear-sine": _preset(
        {"grid": {"d": 1, "N": 199}, "y0": _EIG, "yd": {"kind": "scaled", "inner": _EIG, "factor": 2.0},
         "nonlinearity": {"name": "sine", "params": {"c": 0.5}}, "epsilon": 0.05},
        steer={"mode": "theorem1"}, sweep={"T_list": [0.1, 0.05, 0.025, 0.0125]},
        bernstein={"T": 0.1, "n_list": [25, 50, 100]}),
    "null-control": _preset(
        {"grid": {"d": 1, "N": 199}, "y0": _EIG, "yd": _EIG, "nonlinearity": {"name": "zero"}, "epsilon": 0.05},
        steer={"mode": "theorem1"}, sweep={"T_list": [0.1, 0.05, 0.025, 0.0125]}),
    "sign-flipped": _preset(
        {"grid": {"d": 1, "N": 199}, "y0": _EIG, "yd": {"kind": "scaled", "inner": _EIG, "factor": -1.0},
         "nonlinearity": {"name": "zero"}, "epsilon": 0.05},
        steer={"mode": "theorem1"}),
    "example-2d": _preset(
        {"grid": {"d": 2, "N": 49}, "y0": _EXAMPLE_Y0,
         "yd": {"kind": "scaled", "inner": _EXAMPLE_Y0, "factor": 1.5}, "mask": _EXAMPLE_O,
         "nonlinearity": {"name": "zero"}, "epsilon": 0.05, "rho": 0.25},
        steer={"mode": "theorem1"}),
    "discontinuous-ratio": _preset(
        {"grid": {"d": 1, "N": 199}, "y0": _EIG,
         "yd": {"kind": "pointwise-product", "inner": _EIG, "multiplier": "1 + (x < 0.5)"},
         "nonlinearity": {"name": "zero"}, "epsilon": 0.1},
        steer={"mode": "corollary1"},
        mollify={"field": {"kind": "step", "a": 0.0, "b": 0.5}, "r_list": [0.2, 0.1, 0.05]}),
    "fixed-time-eigen": _preset(
        {"grid": {"d": 1, "N": 199}, "y0": {"kind": "scaled", "inner": _EIG, "factor": 0.5}, "yd": _EIG,
         "nonlinearity": {"name": "linear", "params": {"c": 0.3}}, "epsilon": 0.05},
        steer={"mode": "fixed-time", "T": 0.5, "case": "a"}, hold={"target": _EIG, "T": 0.5, "dt": 1e-3}),
    "fixed-time-hat": _preset(
        {"grid": {"d": 1, "N": 199}, "y0": {"kind": "scaled", "inner": _EIG, "factor": 0.5},
         "yd": {"kind": "hat", "center": 0.5, "width": 0.25},
         "nonlinearity": {"name": "linear", "params": {"c": 0.3}}, "epsilon": 0.1},
        steer={"mode": "fixed-time", "T": 0.5, "case": "b"}),
}


# -- loading ------------------------------------------------------------------------------------


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("y0", "yd", "mask", "field", "target"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(raw: dict) -> dict:
    """Expand an optional ``preset`` key and validate against the schema."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    name = raw.pop("preset", None)
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
        raw = _merge(PRESETS[name], raw)
    if "schema" in raw and raw["schema"] != SCHEMA:
        raise ConfigError(f"unsupported schema {raw['schema']!r}; expected {SCHEMA!r}")
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    return raw


@dataclass(frozen=True, eq=False)
class RunConfig:
    data: dict
    base_dir: Path

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None):
        return cls(resolve(raw), Path(base_dir or "."))

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw, path.parent)

    @property
    def digest(self) -> str:
        return config_digest(self.data)

    def section(self, name) -> dict:
        return self.data.get(name, {})

    @property
    def grid(self) -> SpatialGrid:
        g = self.data["problem"]["grid"]
        return build_grid(g["d"], g["N"])

    def state(self, spec) -> Field:
        return build_state(spec, self.grid, self.base_dir)

    def nonlinearity(self) -> NonlinearitySpec:
        spec = self.data["problem"].get("nonlinearity", {"name": "zero"})
        try:
            return make_nonlinearity(spec["name"], **spec.get("params", {}))
        except TypeError as exc:
            raise ConfigError(f"bad parameters for nonlinearity {spec['name']!r}: {exc}") from None

    def problem(self) -> SteeringProblem:
        p = self.data["problem"]
        grid = self.grid
        keys = ("T0", "steps_per_T", "delta", "a_max", "delta_E", "rho", "T_min")
        return SteeringProblem(
            grid=grid,
            y0=build_state(p["y0"], grid, self.base_dir),
            yd=build_state(p["yd"], grid, self.base_dir),
            O=build_mask(p.get("mask"), grid),
            nonlinearity=self.nonlinearity(),
            epsilon=p.get("epsilon", 0.05),
            **{k: p[k] for k in keys if k in p},
        )
