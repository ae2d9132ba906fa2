"""Experiment configuration: schema validation, defaults, manifest hashing.

A run is described by one JSON document: noise + drift + domain + run
(subcommand-specific knobs) + seed. Validation happens before any
computation, unknown keys are rejected at every level, and every default
is materialized into the echoed config so the manifest is self-contained.

The manifest hash covers exactly the reproduction-relevant content: the
echoed config minus execution details (output_dir, threads) plus the
package version. Wall time lives only in the manifest file itself, so all
numeric outputs are byte-identical across reruns and thread counts.
"""

from __future__ import annotations

import copy
import hashlib
import json
from typing import Optional

import jsonschema
import numpy as np

from .drift_models import BUILTIN_NAMES, DriftModel, builtin_drift
from .killed_process import Domain
from .stable_noise import StableNoiseSpec

__all__ = [
    "SUBCOMMANDS",
    "config_schema",
    "default_config",
    "validate_config",
    "materialize",
    "manifest_hash",
    "build_objects",
    "ConfigError",
]

SUBCOMMANDS = (
    "sample", "simulate", "survival", "escape", "lyapunov", "reach",
    "qsd-fv", "qsd-cond", "ulam", "duhamel", "bench-all",
)


class ConfigError(ValueError):
    """Schema violation with a field-level diagnostic."""


def _num(default=None, minimum=None, exclusive_min=None, maximum=None,
         exclusive_max=None):
    s: dict = {"type": "number"}
    if default is not None:
        s["default"] = default
    if minimum is not None:
        s["minimum"] = minimum
    if exclusive_min is not None:
        s["exclusiveMinimum"] = exclusive_min
    if maximum is not None:
        s["maximum"] = maximum
    if exclusive_max is not None:
        s["exclusiveMaximum"] = exclusive_max
    return s


def _int(default=None, minimum=None):
    s: dict = {"type": "integer"}
    if default is not None:
        s["default"] = default
    if minimum is not None:
        s["minimum"] = minimum
    return s


def _arr(default=None):
    s: dict = {"type": "array", "items": {"type": "number"}}
    if default is not None:
        s["default"] = default
    return s


_RUN_SCHEMAS = {
    "sample": {
        "M": _int(100_000, 1),
        "alphas": _arr([0.8, 1.2, 1.5, 1.9]),
        "xis": _arr([0.5, 1.0, 2.0]),
        "dt": _num(1.0, exclusive_min=0),
    },
    "simulate": {
        "paths": _int(100, 1),
        "horizon": _num(1.0, minimum=0),
        "step": _num(0.01, exclusive_min=0),
        "mode": {"type": "string", "enum": ["exact", "decomposed"],
                 "default": "exact"},
        "x0": _arr([0.0]),
        "v0": _arr([0.0]),
    },
    "survival": {
        "M": _int(20_000, 100),
        "t_max": _num(6.0, exclusive_min=0),
        "t_step": _num(0.25, exclusive_min=0),
        "step": _num(0.01, exclusive_min=0),
        "x0": _arr([-0.5]),
        "v0": _arr([0.0]),
    },
    "escape": {
        "M": _int(10_000, 1),
        "t": _num(0.2, exclusive_min=0),
        "R_grid": _arr([2.0, 5.0, 10.0, 20.0, 50.0]),
        "box_lo": _arr([-0.5, -1.0]),
        "box_hi": _arr([0.5, 1.0]),
        "step": _num(0.005, exclusive_min=0),
    },
    "lyapunov": {
        "a": _num(1.0, exclusive_min=0),
        "b": _num(0.1, minimum=0),
        "p": _num(0.5, exclusive_min=0),
        "radii": _arr([15.0, 20.0, 25.0]),
        "samples_per_shell": _int(32, 4),
        "probe_M": _int(10_000, 0),
        "probe_t": _num(1.0, exclusive_min=0),
    },
    "reach": {
        "epsilon": _num(0.1, exclusive_min=0),
        "t": _num(0.3, exclusive_min=0),
        "x0": _arr([-0.5]),
        "v0": _arr([0.0]),
        "xF": _arr([0.5]),
        "vF": _arr([0.0]),
        "M_conditioned": _int(10_000, 0),
        "M_direct": _int(0, 0),
        "step": _num(0.005, exclusive_min=0),
        "rho": _num(0.05, exclusive_min=0),
    },
    "qsd-fv": {
        "N": _int(5000, 2),
        "horizon": _num(50.0, exclusive_min=0),
        "step": _num(0.01, exclusive_min=0),
        "V": _num(8.0, exclusive_min=0),
        "cells": _int(20, 2),
    },
    "qsd-cond": {
        "M": _int(50_000, 100),
        "t": _num(5.0, minimum=0),
        "x0": _arr([-0.5]),
        "v0": _arr([0.0]),
        "V": _num(8.0, exclusive_min=0),
        "cells": _int(20, 2),
        "step": _num(0.01, exclusive_min=0),
    },
    "ulam": {
        "V": _num(8.0, exclusive_min=0),
        "cells_per_axis": _int(24, 2),
        "dt": _num(0.25, exclusive_min=0),
        "samples_per_cell": _int(2000, 1),
        "step_hint": _num(0.01, exclusive_min=0),
    },
    "duhamel": {
        "M": _int(100_000, 100),
        "t": _num(1.0, exclusive_min=0),
        "x0": _arr([0.0]),
        "v0": _arr([0.0]),
        "step": _num(0.01, exclusive_min=0),
        "n_outer": _int(4000, 10),
        "n_inner": _int(2000, 10),
        "s_nodes": _int(13, 3),
    },
    "bench-all": {
        "scale": _num(0.2, exclusive_min=0, maximum=1.0),
    },
}


def config_schema(subcommand: str) -> dict:
    """Full JSON schema for one subcommand's configuration document."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["seed"],
        "properties": {
            "noise": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "alpha": _num(1.5, exclusive_min=0, exclusive_max=2),
                    "dim": _int(1, 1),
                    "delta": _num(0.1, exclusive_min=0),
                },
                "default": {},
            },
            "drift": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "name": {
                        "type": "string",
                        "enum": list(BUILTIN_NAMES) + ["none"],
                        "default": "harmonic_damped",
                    },
                    "params": {"type": "object", "default": {}},
                },
                "default": {},
            },
            "domain": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "kind": {"type": "string",
                             "enum": ["interval", "box", "ball", "none"],
                             "default": "interval"},
                    "lo": {"default": -1.0},
                    "hi": {"default": 1.0},
                    "center": _arr([0.0, 0.0]),
                    "radius": _num(1.0, exclusive_min=0),
                },
                "default": {},
            },
            "run": {
                "type": "object",
                "additionalProperties": False,
                "properties": _RUN_SCHEMAS[subcommand],
                "default": {},
            },
            "seed": {"type": "integer", "minimum": 0,
                     "maximum": 2**64 - 1},
            "threads": _int(1, 1),
            "output_dir": {"type": "string", "default": "levykin_out"},
        },
    }


def default_config(subcommand: str, seed: int = 12345) -> dict:
    return materialize({"seed": seed}, subcommand)


def validate_config(cfg: dict, subcommand: str) -> None:
    """Schema check with a field-path diagnostic on failure."""
    schema = config_schema(subcommand)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors[:5]:
            path = ".".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{path}: {e.message}")
        raise ConfigError("; ".join(msgs))


def materialize(cfg: dict, subcommand: str) -> dict:
    """Validate, then return a deep copy with every default filled in."""
    validate_config(cfg, subcommand)
    out = copy.deepcopy(cfg)
    schema = config_schema(subcommand)
    _fill_defaults(out, schema)
    validate_config(out, subcommand)
    return out


def _fill_defaults(obj: dict, schema: dict) -> None:
    for key, sub in schema.get("properties", {}).items():
        if key not in obj and "default" in sub:
            obj[key] = copy.deepcopy(sub["default"])
        if key in obj and isinstance(obj[key], dict) and sub.get("type") == "object":
            _fill_defaults(obj[key], sub)


def manifest_hash(cfg: dict, version: str) -> str:
    """sha256 over the reproduction-relevant config core plus version.

    output_dir and threads are execution details: two runs differing only
    there must produce byte-identical numeric outputs, so they stay out of
    the hash those outputs reference.
    """
    core = {k: v for k, v in cfg.items() if k not in ("output_dir", "threads")}
    blob = json.dumps({"config": core, "version": version},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_objects(cfg: dict):
    """(noise spec, drift model, domain) from a materialized config."""
    nz = cfg.get("noise", {})
    spec = StableNoiseSpec(alpha=float(nz.get("alpha", 1.5)),
                           dim=int(nz.get("dim", 1)),
                           delta_default=float(nz.get("delta", 0.1)))
    dr = cfg.get("drift", {})
    name = dr.get("name", "harmonic_damped")
    if name == "none":
        model: Optional[DriftModel] = None
    else:
        try:
            model = builtin_drift(name, dim=spec.dim, **dr.get("params", {}))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"drift.params: {e}") from e
    dm = cfg.get("domain", {})
    kind = dm.get("kind", "interval")
    if kind == "none":
        domain = None
    elif kind == "interval":
        domain = Domain.interval(float(dm.get("lo", -1.0)), float(dm.get("hi", 1.0)))
    elif kind == "box":
        lo = np.asarray(dm.get("lo", [-1.0] * spec.dim), dtype=float)
        hi = np.asarray(dm.get("hi", [1.0] * spec.dim), dtype=float)
        domain = Domain.box(lo, hi)
    else:
        domain = Domain.ball(np.asarray(dm.get("center", [0.0] * spec.dim), dtype=float),
                             float(dm.get("radius", 1.0)))
    return spec, model, domain
