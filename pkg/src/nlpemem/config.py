"""Experiment configs: JSON schemas, defaults and cross-field checks.

Every config is a JSON object with a ``command`` key naming the subcommand.
Units are SI throughout (s, Hz, W, m); nothing is rescaled implicitly.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from jsonschema import Draft202012Validator

SCHEMA_VERSION = "1"

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}
_seed = {"type": "integer", "minimum": 0, "default": 0}


def _d(schema: dict, default) -> dict:
    return {**schema, "default": default}


def _obj(props: dict, required=(), default: bool = True) -> dict:
    out = {"type": "object", "properties": props, "additionalProperties": False}
    if required:
        out["required"] = list(required)
    if default and not required:
        out["default"] = {}
    return out


def _cmd(name: str) -> dict:
    return {"const": name}


def _matrix3() -> dict:
    row = {"type": "array", "items": _nonneg, "minItems": 3, "maxItems": 3}
    return {"type": "array", "items": row, "minItems": 3, "maxItems": 3}


_pair_pos = {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}

SCHEMAS: dict[str, dict] = {
    "echo-decay": _obj({
        "command": _cmd("echo-decay"),
        "seed": _seed,
        "model": _obj({
            "d": _d(_nonneg, 2.09),
            "eta_control": _d(_prob, 0.85),
            "gamma13": _d(_nonneg, 6.0e3),
            "gamma35": _d(_nonneg, 18.0e3),
            "gamma": _d(_nonneg, 8.0e3),
        }),
        "sweep": _obj({
            "axis": {"enum": ["t31", "t42", "spin_storage"]},
            "values": {"type": "array", "items": _pos, "minItems": 1},
        }, required=("axis", "values")),
        "timing": _obj({
            "t31": _d(_pos, 40e-6),
            "t42": _d(_pos, 20e-6),
            "t32": _d(_pos, 5e-6),
            "input_delay": _d(_pos, 2e-6),
        }),
        "simulation": _obj({
            "n_ions": _d({"type": "integer", "minimum": 1000}, 100_000),
            "absorption_fwhm": _d(_nonneg, 1.8e6),
            "trace_points": _d({"type": "integer", "minimum": 1}, 101),
        }),
        "dd": _d({"oneOf": [{"type": "null"}, _obj({
            "sequence": {"enum": ["XX", "XXXX", "XY4"]},
            "angle_error": _d({"type": "number", "exclusiveMinimum": -math.pi, "exclusiveMaximum": math.pi}, 0.0),
            "pulse_duration": _d(_pos, 60e-6),
            "repeats": _d({"type": "integer", "minimum": 1}, 1),
        }, required=("sequence",))]}, None),
        "fit": _d({"oneOf": [{"type": "null"},
                              {"enum": ["gaussian_times_exp", "gaussian_only", "exp_only"]}]}, None),
    }, required=("command", "sweep")),

    "dd-bench": _obj({
        "command": _cmd("dd-bench"),
        "seed": _seed,
        "sequences": _d({"type": "array", "items": {"enum": ["XX", "XXXX", "XY4"]}, "minItems": 1},
                        ["XX", "XXXX", "XY4"]),
        "angle_errors_over_pi": {"type": "array", "minItems": 1,
                                 "items": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1}},
        "n_ions": _d({"type": "integer", "minimum": 1000}, 10_000),
        "storage": _d(_pos, 1e-3),
        "pulse_duration": _d(_pos, 60e-6),
        "detuning_fwhm": _d(_nonneg, 0.0),
        "angle_scale_fwhm": _d(_nonneg, 0.0),
    }, required=("command", "angle_errors_over_pi")),

    "fidelity": _obj({
        "command": _cmd("fidelity"),
        "seed": _seed,
        "channel": _obj({"eta_m": _d(_prob, 0.12), "p_n": _d(_prob, 0.0098), "f_c": _d(_prob, 1.0)}),
        "rows": _d({"type": "array", "items": _obj({
            "mu_q": _pos, "F_e": _prob, "F_l": _prob, "F_plus": _prob, "F_plusi": _prob,
        }, required=("mu_q", "F_e", "F_l", "F_plus", "F_plusi"))}, []),
        "curve": _obj({
            "mu_min": _d(_pos, 0.05),
            "mu_max": _d(_pos, 10.0),
            "n": _d({"type": "integer", "minimum": 2}, 50),
        }),
        "monte_carlo": _d({"oneOf": [{"type": "null"}, _obj({
            "mu_q": _d(_pos, 1.07),
            "repetitions": _d({"type": "integer", "minimum": 1}, 1_000_000),
        })]}, None),
    }, required=("command",)),

    "holeburn": _obj({
        "command": _cmd("holeburn"),
        "scheme": _obj({
            "ground_splittings": _d(_pair_pos, [34.5e6, 46.2e6]),
            "excited_splittings": _d(_pair_pos, [75.0e6, 102.0e6]),
            "relative_oscillator_strengths": _d(_matrix3(), [[1 / 3] * 3] * 3),
            "branching": _d(_matrix3(), [[1 / 3] * 3] * 3),
            "homogeneous_fwhm": _d(_pos, 10e3),
        }),
        "background_depth": _d(_nonneg, 2.09),
        "lattice": _obj({"step": _d(_pos, 5e3), "probe_half_range": _d(_pos, 4e6)}),
        "recipe": _obj({
            "window": _d(_pos, 4.5e6),
            "feature": _d(_pos, 1.8e6),
            "guard": _d(_nonneg, 0.1e6),
            "cycles": _d({"type": "integer", "minimum": 0}, 6),
            "burn_rate": _d(_nonneg, 1e4),
            "burn_time": _d(_pos, 10e-3),
            "rate": _d(_nonneg, 2e4),
            "step_time": _d(_pos, 1e-3),
        }),
        "steps": _d({"oneOf": [{"type": "null"}, {"type": "array", "items": _obj({
            "ground_level": {"type": "integer", "minimum": 0, "maximum": 2},
            "excited_level": {"type": "integer", "minimum": 0, "maximum": 2},
            "sweep_band": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            "duration": _pos,
            "rate": _nonneg,
            "linewidth": _d(_pos, 10e3),
        }, required=("ground_level", "excited_level", "sweep_band", "duration", "rate"))}]}, None),
    }, required=("command",)),

    "rf-map": _obj({
        "command": _cmd("rf-map"),
        "layout": _obj({
            "type": _d({"enum": ["cpw", "single"]}, "cpw"),
            "signal_width": _d(_pos, 150e-6),
            "gap": _d(_pos, 50e-6),
            "ground_width": _d(_pos, 500e-6),
        }),
        "grid": _obj({
            "x_min": _d({"type": "number"}, -100e-6),
            "x_max": _d({"type": "number"}, 100e-6),
            "nx": _d({"type": "integer", "minimum": 2}, 101),
            "depth_min": _d(_pos, 1e-6),
            "depth_max": _d(_pos, 60e-6),
            "nz": _d({"type": "integer", "minimum": 2}, 60),
        }),
        "mode": _obj({
            "center_x": _d({"type": "number"}, 0.0),
            "center_depth": _d(_pos, 15e-6),
            "diameter": _d(_pos, 16.3e-6),
            "step": _d(_pos, 0.1e-6),
        }),
        "calibration": _obj({"rabi_hz": _d(_pos, 16.7e3), "power_w": _d(_pos, 4.0)}),
        "powers_w": _d({"type": "array", "items": _nonneg, "minItems": 1}, [4.0, 16.0]),
        "axis": _d({"enum": ["magnitude", "x", "z"]}, "magnitude"),
    }, required=("command",)),

    "fit": _obj({
        "command": _cmd("fit"),
        "seed": _seed,
        "input": {"type": "string", "minLength": 1},
        "model": {"enum": ["gaussian_times_exp", "gaussian_only", "exp_only", "rabi", "voigt"]},
        "baseline": _d({"type": "boolean"}, False),
        "restarts": _d({"type": "integer", "minimum": 1}, 5),
    }, required=("command", "input", "model")),

    "snr": _obj({
        "command": _cmd("snr"),
        "seed": _seed,
        "channel": _obj({"eta_m": _d(_prob, 0.178), "p_n": _d(_prob, 0.0038)}),
        "mu": _d(_pos, 1.07),
        "repetitions": _d({"type": "integer", "minimum": 1}, 100_000),
        "detection_window": _d(_pos, 1.1e-6),
    }, required=("command",)),
}

COMMANDS = tuple(SCHEMAS)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else ""


def fill_defaults(schema: dict, value):
    """Return ``value`` with missing properties filled from schema defaults."""
    if isinstance(value, dict) and schema.get("type") == "object":
        out = dict(value)
        for key, sub in schema.get("properties", {}).items():
            if key not in out and "default" in sub:
                out[key] = copy.deepcopy(sub["default"])
            if key in out:
                out[key] = fill_defaults(sub, out[key])
        return out
    if isinstance(value, list) and isinstance(schema.get("items"), dict):
        return [fill_defaults(schema["items"], v) for v in value]
    if "oneOf" in schema and value is not None:
        for alt in schema["oneOf"]:
            if alt.get("type") == "object" and isinstance(value, dict):
                return fill_defaults(alt, value)
    return value


def _cross_field(cmd: str, cfg: dict) -> list[dict]:
    errs = []

    def err(path, msg):
        errs.append({"path": path, "message": msg})

    if cmd == "echo-decay":
        tm, sw = cfg["timing"], cfg["sweep"]
        t32 = tm["t32"]
        if t32 <= tm["input_delay"]:
            err("/timing/t32", "t32 must exceed input_delay")
        points = []
        for i, v in enumerate(sw["values"]):
            if sw["axis"] == "t31":
                t31, t42 = v, tm["t42"]
            elif sw["axis"] == "t42":
                t31, t42 = tm["t31"], v
            else:
                t31, t42 = v + t32, tm["t42"]
            points.append((i, t31, t42, t31 - t32))
        for i, t31, t42, store in points:
            if store <= 0:
                err(f"/sweep/values/{i}", "t31 must exceed t32")
            if t42 <= t32:
                err(f"/sweep/values/{i}" if sw["axis"] == "t42" else "/timing/t42", "t42 must exceed t32")
        dd = cfg.get("dd")
        if dd is not None:
            n = {"XX": 2, "XXXX": 4, "XY4": 4}[dd["sequence"]] * dd["repeats"]
            length = n * dd["pulse_duration"]
            for i, _, _, store in points:
                if store > 0 and length > store * (1 + 1e-12):
                    err("/dd", f"DD block ({length:g} s) longer than spin storage ({store:g} s) at sweep point {i}")
        if cfg.get("fit") is not None and len(sw["values"]) < 4:
            err("/fit", "fitting needs at least 4 sweep points")
    elif cmd == "dd-bench":
        n = max({"XX": 2, "XXXX": 4, "XY4": 4}[s] for s in cfg["sequences"])
        if n * cfg["pulse_duration"] > cfg["storage"]:
            err("/pulse_duration", "pulses do not fit in the storage time")
    elif cmd == "fidelity":
        c = cfg["curve"]
        if c["mu_min"] >= c["mu_max"]:
            err("/curve", "mu_min must be below mu_max")
        if cfg["channel"]["eta_m"] <= 0:
            err("/channel/eta_m", "eta_m must be positive")
    elif cmd == "holeburn":
        sc = cfg["scheme"]
        for key in ("relative_oscillator_strengths", "branching"):
            for i, row in enumerate(sc[key]):
                if abs(sum(row) - 1.0) > 1e-12:
                    err(f"/scheme/{key}/{i}", "row must sum to 1")
        lim = cfg["lattice"]["probe_half_range"]
        if cfg["steps"] is None:
            r = cfg["recipe"]
            if 0.5 * r["window"] > lim:
                err("/recipe/window", "window exceeds the probe range")
            if r["feature"] + 2 * r["guard"] >= r["window"]:
                err("/recipe/feature", "feature plus guards must fit inside the window")
        else:
            for i, st in enumerate(cfg["steps"]):
                lo, hi = st["sweep_band"]
                if hi < lo:
                    err(f"/steps/{i}/sweep_band", "band must satisfy lo <= hi")
                if lo < -lim or hi > lim:
                    err(f"/steps/{i}/sweep_band", "band outside the probe range")
    elif cmd == "rf-map":
        g, m = cfg["grid"], cfg["mode"]
        if g["x_min"] >= g["x_max"]:
            err("/grid/x_max", "x_max must exceed x_min")
        if g["depth_min"] >= g["depth_max"]:
            err("/grid/depth_max", "depth_max must exceed depth_min")
        if m["center_depth"] - 0.5 * m["diameter"] <= 0:
            err("/mode", "mode disk must lie below the surface")
    return errs


def validate(cfg) -> tuple[dict | None, list[dict]]:
    """Schema plus cross-field validation; returns (effective config, errors)."""
    if not isinstance(cfg, dict):
        return None, [{"path": "", "message": "config must be a JSON object"}]
    cmd = cfg.get("command")
    if cmd not in SCHEMAS:
        return None, [{"path": "/command", "message": f"command must be one of {list(COMMANDS)}"}]
    schema = SCHEMAS[cmd]
    v = Draft202012Validator(schema)
    errors = sorted(v.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        return None, [{"path": _pointer(e.absolute_path), "message": e.message} for e in errors]
    eff = fill_defaults(schema, cfg)
    xerr = _cross_field(cmd, eff)
    if xerr:
        return None, xerr
    return eff, []


def load(path) -> dict:
    """Read a JSON config; raises OSError or ValueError."""
    return json.loads(Path(path).read_text())


def schema_json(cmd: str) -> str:
    return json.dumps(SCHEMAS[cmd], indent=2, sort_keys=True)
