"""JSON config loading and validation for the command line tools.

Every subcommand takes a JSON config validated against a published schema.
Unknown keys are rejected so a typo in a hyperparameter name fails loudly
instead of silently skewing a sweep.  Validation errors carry the JSON
path of the offending field.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .sweep import METHOD_IDS
from .volume import GridSpec


class ConfigError(ValueError):
    """Invalid or malformed config; `path` names the offending field."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


_NUMBER3 = {"type": "array", "items": {"type": "number"},
            "minItems": 3, "maxItems": 3}

GRID_SCHEMA = {
    "type": "object",
    "properties": {
        "nx": {"type": "integer", "minimum": 1},
        "ny": {"type": "integer", "minimum": 1},
        "nz": {"type": "integer", "minimum": 1},
        "fov": _NUMBER3,
        "origin": _NUMBER3,
    },
    "required": ["nx", "ny", "nz", "fov"],
    "additionalProperties": False,
}

PHANTOM_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["cone", "five_tube", "cuboid_union"]},
        "tip_radius": {"type": "number"},
        "apex_angle_deg": {"type": "number"},
        "height": {"type": "number"},
        "tube_radius": {"type": "number"},
        "xy_angles_deg": {"type": "array", "items": {"type": "number"}},
        "yz_angles_deg": {"type": "array", "items": {"type": "number"}},
        "tube_length": {"type": "number"},
        "boxes": {"type": "array"},
        "tracer_value": {"type": "number"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

OPERATOR_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["spectral", "langevin"]},
        "decay_beta": {"type": "number"},
        "n_rows": {"type": "integer", "minimum": 2},
        "scale": {"type": "number"},
        "drive_mT": _NUMBER3,
        "gradient_tpm": {"type": "number"},
        "ratios": {"type": "array", "items": {"type": "integer"}},
        "kappa": {"type": "number"},
        "samples_per_period": {"type": "integer", "minimum": 2},
        "freq_min": {"type": "integer", "minimum": 0},
        "freq_max": {"type": "integer", "minimum": 1},
        "coils": {"type": "integer", "minimum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

NOISE_SCHEMA = {
    "type": "object",
    "properties": {
        "snr_db": {"type": "number"},
        "sigma": {"type": "number", "minimum": 0},
        "background_scale": {"type": "number", "minimum": 0},
        "n_background": {"type": "integer", "minimum": 2},
    },
    "additionalProperties": False,
}

SIMULATE_SCHEMA = {
    "type": "object",
    "properties": {
        "grid": GRID_SCHEMA,
        "phantom": PHANTOM_SCHEMA,
        "operator": OPERATOR_SCHEMA,
        "noise": NOISE_SCHEMA,
        "seed": {"type": "integer"},
        "supersample": {"type": "integer", "minimum": 1},
    },
    "required": ["grid", "phantom", "operator"],
    "additionalProperties": False,
}

PREPROCESS_ENTRY_SCHEMA = {
    "type": "object",
    "properties": {
        "rank": {"type": "integer", "minimum": 1},
        "snr_threshold": {"type": "number", "minimum": 0},
        "bandpass": {"type": ["array", "object", "null"]},
        "whitening": {"type": "boolean"},
        "rsvd_seed": {"type": "integer"},
    },
    "required": ["rank"],
    "additionalProperties": False,
}

PREPROCESS_SCHEMA = {
    "type": "object",
    "properties": {
        "dataset": {"type": "string"},
        **PREPROCESS_ENTRY_SCHEMA["properties"],
    },
    "required": ["dataset", "rank"],
    "additionalProperties": False,
}

_INDEX_LIST = {"type": "array", "items": {"type": "integer"}, "minItems": 1}
_VALUE_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

METHOD_SCHEMA = {
    "type": "object",
    "properties": {
        "id": {"enum": list(METHOD_IDS)},
        "rho_indices": _INDEX_LIST,
        "rho_values": _VALUE_LIST,
        "lambda_indices": _INDEX_LIST,
        "lambda_values": _VALUE_LIST,
        "rows_kept": {"type": "array", "items": {"enum": [32, 64, 128, 256, 512, 1024]}},
        "sweeps": {"type": "integer", "minimum": 1},
        "iterations": {"type": "integer", "minimum": 1},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "lr_values": _VALUE_LIST,
        "channels": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "pp_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
    "required": ["id"],
    "additionalProperties": False,
}

EVAL_PROPERTIES = {
    "metrics": {"type": "array", "items": {"enum": ["psnr", "ssim"]}, "minItems": 1},
    "data_range": {"type": "number", "exclusiveMinimum": 0},
    "shift_extent_mm": {"type": "number", "minimum": 0},
    "shift_step_mm": {"type": "number", "exclusiveMinimum": 0},
    "supersample": {"type": "integer", "minimum": 1},
}

SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "dataset": {"type": "string"},
        "phantom": PHANTOM_SCHEMA,
        "preprocess": {"type": "array", "items": PREPROCESS_ENTRY_SCHEMA, "minItems": 1},
        "methods": {"type": "array", "items": METHOD_SCHEMA, "minItems": 1},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "save_traces": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
        **EVAL_PROPERTIES,
    },
    "required": ["dataset", "preprocess", "methods"],
    "additionalProperties": False,
}

RECONSTRUCT_SCHEMA = {
    "type": "object",
    "properties": {
        "system": {"type": "string"},
        "method": METHOD_SCHEMA,
        "seed": {"type": "integer"},
    },
    "required": ["system", "method"],
    "additionalProperties": False,
}

EVALUATE_SCHEMA = {
    "type": "object",
    "properties": {
        "trace": {"type": "string"},
        "dataset": {"type": "string"},
        "phantom": PHANTOM_SCHEMA,
        "grid": GRID_SCHEMA,
        **EVAL_PROPERTIES,
    },
    "required": ["trace"],
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "results": {"type": "string"},
        "data_range": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["results"],
    "additionalProperties": False,
}

SCHEMAS = {
    "simulate": SIMULATE_SCHEMA,
    "preprocess": PREPROCESS_SCHEMA,
    "reconstruct": RECONSTRUCT_SCHEMA,
    "evaluate": EVALUATE_SCHEMA,
    "sweep": SWEEP_SCHEMA,
    "report": REPORT_SCHEMA,
}


def validate_config(cfg: dict, command: str) -> dict:
    schema = SCHEMAS[command]
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message, exc.json_path) from exc
    return cfg


def load_config(path: Path | str, command: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config root must be an object, got {type(cfg).__name__}")
    return validate_config(cfg, command)


def grid_from_config(d: dict) -> GridSpec:
    """GridSpec from config; origin defaults to centering the field of view."""
    if "origin" not in d:
        fov = d["fov"]
        d = dict(d, origin=[-fov[0] / 2.0, -fov[1] / 2.0, -fov[2] / 2.0])
    return GridSpec.from_dict(d)
