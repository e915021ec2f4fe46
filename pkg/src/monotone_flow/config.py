"""Run configuration: strict JSON schema and scenario resolution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import catalog as cat
from .errors import ConfigError, DomainMismatchError, UnsupportedOperatorError
from .geometry import set_from_json
from .operators import decompose, operator_from_json
from .scenario import Scenario, field_from_json

_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario"],
    "properties": {
        "scenario": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["catalog"],
                    "properties": {
                        "catalog": {"enum": list(cat.CATALOG)},
                        "params": {"type": "object"},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["field", "operator", "x0"],
                    "properties": {
                        "field": {"type": "object"},
                        "operator": {"type": "object"},
                        "constraint": {"type": "object"},
                        "x0": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    },
                },
            ]
        },
        "k": {"type": "integer", "minimum": 1},
        "lambdas": {"type": "array", "items": _POS, "minItems": 1},
        "T": _POS,
        "h_max": _POS,
        "record_dt": _POS,
        "max_records": {"type": "integer", "minimum": 2},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {name: _POS for name in
                           ("velocity", "penalty", "multiplier", "lyapunov", "convergence", "equilibrium")},
        },
        "checks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {name: {"type": "boolean"} for name in
                           ("velocity", "penalty", "multiplier", "lyapunov", "oracle")},
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambdas": {"type": "array", "items": _POS},
                "ks": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
    },
}

DEFAULT_TOLERANCES = {"velocity": 1e-6, "penalty": 1e-6, "multiplier": 1e-6, "lyapunov": 1e-6,
                      "convergence": 1e-4, "equilibrium": 1e-6}
DEFAULT_CHECKS = {"velocity": True, "penalty": True, "multiplier": True, "lyapunov": True, "oracle": True}


@dataclass
class RunConfig:
    scenario: dict
    k: int | None = None
    lambdas: list = field(default_factory=lambda: [1e-3])
    T: float | None = None
    h_max: float = 1e-3
    record_dt: float | None = None
    max_records: int = 20001
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    checks: dict = field(default_factory=lambda: dict(DEFAULT_CHECKS))
    output_dir: str = "out"
    seed: int = 0
    sweep: dict | None = None

    def to_json(self) -> dict:
        return {"scenario": self.scenario, "k": self.k, "lambdas": self.lambdas, "T": self.T,
                "h_max": self.h_max, "record_dt": self.record_dt, "max_records": self.max_records,
                "tolerances": self.tolerances, "checks": self.checks, "seed": self.seed,
                "sweep": self.sweep}


def _pointer(err: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def parse_config(obj: dict) -> RunConfig:
    """Validate a decoded config.

    Raises
    ------
    ConfigError
        With ``path`` set to a JSON pointer of the offending field.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: (len(list(e.absolute_path)), str(e.absolute_path)))
    if errors:
        e = max(errors, key=lambda e: len(list(e.absolute_path)))
        # for oneOf failures point into the branch that matched best
        if e.context:
            e = max(e.context, key=lambda c: len(list(c.absolute_path)))
        raise ConfigError(e.message, path=_pointer(e))
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(obj.get("tolerances", {}))
    checks = dict(DEFAULT_CHECKS)
    checks.update(obj.get("checks", {}))
    lambdas = [float(v) for v in obj.get("lambdas", [1e-3])]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigError("lambdas must be strictly decreasing", path="/lambdas")
    return RunConfig(
        scenario=obj["scenario"], k=obj.get("k"), lambdas=lambdas, T=obj.get("T"),
        h_max=float(obj.get("h_max", 1e-3)), record_dt=obj.get("record_dt"),
        max_records=int(obj.get("max_records", 20001)), tolerances=tol, checks=checks,
        output_dir=obj.get("output_dir", "out"), seed=int(obj.get("seed", 0)), sweep=obj.get("sweep"))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path="") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", path="") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object", path="")
    return parse_config(obj)


def resolve_scenario(cfg: RunConfig):
    """``(Scenario, LyapunovPair or None, equilibrium descriptor or None, catalog name or None)``."""
    spec = cfg.scenario
    overrides = {}
    if cfg.T is not None:
        overrides["T"] = cfg.T
    if "catalog" in spec:
        params = dict(spec.get("params", {}))
        params.update(overrides)
        try:
            sc, pair, E = cat.from_name(spec["catalog"], params)
        except TypeError as exc:
            raise ConfigError(f"bad catalog parameters: {exc}", path="/scenario/params") from exc
        name = spec["catalog"]
    else:
        try:
            opspec = operator_from_json(spec["operator"])
            dec = decompose(opspec)
            if "constraint" in spec:
                from .operators import OperatorDecomposition

                Cset = set_from_json(spec["constraint"])
                if not dec.C.is_whole_space():
                    raise ConfigError("operator already restricts the domain", path="/scenario/constraint")
                dec = OperatorDecomposition(dec.F, Cset, dec.b, opspec)
            f = field_from_json(spec["field"])
        except (KeyError, ValueError, UnsupportedOperatorError, DomainMismatchError) as exc:
            raise ConfigError(f"bad inline scenario: {exc}", path="/scenario") from exc
        sc = Scenario(f, dec, spec["x0"], cfg.T or 1.0)
        pair, E, name = None, None, None
    if cfg.k is not None:
        sc = sc.with_(k=cfg.k)
    return sc, pair, E, name
