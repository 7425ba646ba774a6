"""Run configuration: schema validation, defaults, content hash and object builders."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema
import yaml

from .noise import MollifierSpec
from .observables import Observable, make_profile
from .solver import SolverConfig, make_g
from .torus import TorusField, load_field


class ConfigError(ValueError):
    """Malformed or schema-violating configuration (CLI exit code 2)."""


_FIELD = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "modes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "k": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                            "kind": {"enum": ["cos", "sin"]},
                            "amplitude": {"type": "number"},
                        },
                        "required": ["k", "amplitude"],
                        "additionalProperties": False,
                    },
                }
            },
            "required": ["modes"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"file": {"type": "string"}},
            "required": ["file"],
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "type": "object",
    "properties": {
        "grid": {"type": "integer", "minimum": 8, "multipleOf": 2},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "steps": {"type": "integer", "minimum": 4},
        "kappa": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "blowup": {"type": "number", "exclusiveMinimum": 0},
        "g": {
            "type": "object",
            "properties": {"name": {"enum": ["zero", "constant", "linear", "sin", "sin3"]}, "scale": {"type": "number"}},
            "required": ["name"],
            "additionalProperties": False,
        },
        "u0": _FIELD,
        "control": _FIELD,
        "observable": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["endpoint", "time_average"]},
                "profile": {
                    "type": "object",
                    "properties": {
                        "name": {"enum": ["constant", "tanh", "cosine", "quadratic"]},
                        "a": {"type": "number"},
                        "b": {"type": "number"},
                        "x0": {"type": "number"},
                        "c": {"type": "number"},
                    },
                    "required": ["name"],
                    "additionalProperties": False,
                },
                "weight": _FIELD,
            },
            "required": ["kind", "profile", "weight"],
            "additionalProperties": False,
        },
        "mollifier": {
            "type": "object",
            "properties": {"shape": {"enum": ["sharp", "gaussian"]}},
            "required": ["shape"],
            "additionalProperties": False,
        },
        "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "basis_size": {"type": "integer", "minimum": 1},
        "mc": {
            "type": "object",
            "properties": {
                "lambda_samples": {"type": "integer", "minimum": 2},
                "J_samples": {"type": "integer", "minimum": 2},
                "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "minimizer": {
            "type": "object",
            "properties": {
                "max_iter": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "starts": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
    "required": ["grid", "T", "steps", "g", "u0", "observable"],
    "additionalProperties": False,
}

DEFAULTS = {
    "kappa": 0.05,
    "blowup": 1e6,
    "mollifier": {"shape": "sharp"},
    "deltas": [0.0625],
    "basis_size": 32,
    "mc": {"lambda_samples": 1000, "J_samples": 1000, "epsilons": [0.5, 0.35, 0.25]},
    "minimizer": {"max_iter": 200, "tol": 1e-8, "starts": 0},
    "seed": 0,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path) -> dict:
    """Read a YAML or JSON document, validate it and fill defaults."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return normalize(raw, base_dir=Path(path).parent)


def normalize(raw, base_dir: Path | None = None) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a key-value document")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {exc.message}") from exc
    cfg = _merge(DEFAULTS, raw)
    if base_dir is not None:
        cfg["_base_dir"] = str(base_dir)
    return cfg


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace, private keys dropped)."""
    public = {k: v for k, v in cfg.items() if not k.startswith("_")}
    text = json.dumps(public, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_field(spec: dict | None, n: int, base_dir: str | None = None) -> TorusField:
    if spec is None:
        return TorusField.zeros(n)
    if "file" in spec:
        p = Path(spec["file"])
        if not p.is_absolute() and base_dir:
            p = Path(base_dir) / p
        f = load_field(p)
        if f.n != n:
            raise ConfigError(f"field file {p} has grid {f.n}, config grid is {n}")
        return f
    out = TorusField.zeros(n)
    for m in spec["modes"]:
        kx, ky = m["k"]
        try:
            out = out + TorusField.trig((kx, ky), n, m.get("kind", "cos"), m["amplitude"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return out


class Built:
    """Objects derived from a validated configuration."""

    def __init__(self, cfg: dict):
        self.raw = cfg
        self.hash = config_hash(cfg)
        n = cfg["grid"]
        base = cfg.get("_base_dir")
        try:
            self.g = make_g(cfg["g"]["name"], cfg["g"].get("scale", 1.0))
            self.solver = SolverConfig(n, float(cfg["T"]), int(cfg["steps"]), self.g, float(cfg["blowup"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.u0 = build_field(cfg["u0"], n, base)
        self.control = build_field(cfg.get("control"), n, base)
        ob = cfg["observable"]
        prof = ob["profile"]
        self.profile = make_profile(prof["name"], **{k: float(v) for k, v in prof.items() if k != "name"})
        self.observable = Observable(ob["kind"], self.profile, build_field(ob["weight"], n, base))
        self.mollifier_shape = cfg["mollifier"]["shape"]
        self.deltas = [float(d) for d in cfg["deltas"]]
        self.seed = int(cfg["seed"])

    def mollifier(self, delta: float) -> MollifierSpec:
        return MollifierSpec(self.mollifier_shape, delta)
