"""Experiment configuration: JSON schema, validation, defaults.

Validation is strict: unknown keys are rejected and every error names the
dotted path of the offending key. ``parse_config`` returns the fully
resolved configuration (all defaults filled in), which is what gets echoed
into the replay file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ConfigurationError


@dataclass
class Field:
    kind: str  # int | float | str | bool | int_list | any_list
    default: Any = None
    nullable: bool = False
    choices: tuple | None = None
    minimum: float | None = None
    maximum: float | None = None


SCHEMA: dict[str, Any] = {
    "seed": Field("int", default=0, minimum=0),
    "study": Field("str", default="single-run",
                   choices=("single-run", "figure1", "ablation", "sweep")),
    "output_dir": Field("str", default=None, nullable=True),
    "dataset": {
        "kind": Field("str", default="tiny-images", choices=("blobs", "tiny-images", "path")),
        "path": Field("str", default=None, nullable=True),
        "test_path": Field("str", default=None, nullable=True),
        "n": Field("int", default=2000, minimum=1),
        "n_test": Field("int", default=500, minimum=0),
        "d": Field("int", default=32, minimum=1),
        "height": Field("int", default=8, minimum=4),
        "width": Field("int", default=8, minimum=4),
        "k": Field("int", default=10, minimum=2),
        "separation": Field("float", default=3.0, minimum=0.0),
        "pixel_noise": Field("float", default=0.5, minimum=0.0),
        "seed": Field("int", default=0, minimum=0),
    },
    "noise": {
        "kind": Field("str", default="symmetric",
                      choices=("none", "symmetric", "pairflip", "instance")),
        "epsilon": Field("float", default=0.4, minimum=0.0, maximum=1.0),
        "seed": Field("int", default=0, minimum=0),
    },
    "model": {
        "kind": Field("str", default="smallcnn", choices=("mlp", "smallcnn")),
        "widths": Field("int_list", default=None, nullable=True),
        "channels": Field("int_list", default=[8, 16, 16]),
        "in_channels": Field("int", default=1, minimum=1),
        "gate_index": Field("int", default=None, nullable=True, minimum=0),
        "seed": Field("int", default=0, minimum=0),
    },
    "schedule": {
        "t_a": Field("int", default=15, minimum=0),
        "t_p": Field("int", default=10, minimum=0),
        "t_0": Field("int", default=0, minimum=0),
        "suffix_epochs": Field("int_list", default=[7, 5]),
        "batch_size": Field("int", default=128, minimum=1),
        "seed": Field("int", default=0, minimum=0),
        "optimizer": {
            "lr": Field("float", default=0.1, minimum=0.0),
            "momentum": Field("float", default=0.9, minimum=0.0, maximum=1.0),
            "weight_decay": Field("float", default=1e-4, minimum=0.0),
        },
        "pes_optimizer": {
            "lr": Field("float", default=1e-4, minimum=0.0),
        },
    },
    "select": {
        "sigma": Field("float", default=0.05, minimum=0.0),
        "seed": Field("int", default=0, minimum=0),
    },
    "figure1": {
        "epochs": Field("int", default=60, minimum=1),
    },
    "sweep": {
        "path": Field("str", default="schedule.t_a"),
        "values": Field("any_list", default=None, nullable=True),
        "objective": Field("str", default="label_precision",
                           choices=("label_precision", "label_recall", "test_acc")),
    },
}


def _check_scalar(field: Field, value: Any, path: str) -> Any:
    if value is None:
        if field.nullable:
            return None
        raise ConfigurationError(f"{path}: may not be null")
    if field.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
    elif field.kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected a number, got {value!r}")
        value = float(value)
    elif field.kind == "str":
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
    elif field.kind == "bool":
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected a boolean, got {value!r}")
    elif field.kind == "int_list":
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in value
        ):
            raise ConfigurationError(f"{path}: expected a list of integers, got {value!r}")
        return list(value)
    elif field.kind == "any_list":
        if not isinstance(value, list):
            raise ConfigurationError(f"{path}: expected a list, got {value!r}")
        return list(value)
    else:  # pragma: no cover - schema authoring error
        raise ConfigurationError(f"{path}: unknown field kind {field.kind}")
    if field.choices is not None and value not in field.choices:
        raise ConfigurationError(f"{path}: {value!r} not one of {sorted(field.choices)}")
    if field.minimum is not None and value < field.minimum:
        raise ConfigurationError(f"{path}: {value!r} below minimum {field.minimum}")
    if field.maximum is not None and value > field.maximum:
        raise ConfigurationError(f"{path}: {value!r} above maximum {field.maximum}")
    return value


def _validate(schema: dict, data: Any, path: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or '<root>'}: expected an object, got {data!r}")
    for key in data:
        if key not in schema:
            where = f"{path}.{key}" if path else key
            raise ConfigurationError(f"unknown key {where!r}")
    resolved = {}
    for key, spec in schema.items():
        child_path = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            resolved[key] = _validate(spec, data.get(key, {}), child_path)
        else:
            value = data.get(key, spec.default)
            resolved[key] = _check_scalar(spec, value, child_path)
    return resolved


def _cross_checks(cfg: dict) -> None:
    ds = cfg["dataset"]
    if ds["kind"] == "path" and not ds["path"]:
        raise ConfigurationError("dataset.path: required when dataset.kind is 'path'")
    model = cfg["model"]
    if model["kind"] == "mlp":
        if not model["widths"]:
            raise ConfigurationError("model.widths: required for an MLP model")
        if any(w <= 0 for w in model["widths"]):
            raise ConfigurationError("model.widths: widths must be positive")
    if model["kind"] == "smallcnn" and not 2 <= len(model["channels"]) <= 4:
        raise ConfigurationError("model.channels: need 2-4 conv stages")
    if any(e < 0 for e in cfg["schedule"]["suffix_epochs"]):
        raise ConfigurationError("schedule.suffix_epochs: budgets must be non-negative")
    if cfg["noise"]["kind"] == "pairflip" and cfg["noise"]["epsilon"] > 0.5:
        raise ConfigurationError("noise.epsilon: pairflip rate above 0.5 is unidentifiable")
    if cfg["study"] == "sweep":
        sweep = cfg["sweep"]
        if not sweep["values"]:
            raise ConfigurationError("sweep.values: required for a sweep study")
        _resolve_path_for_sweep(cfg, sweep["path"])


def _resolve_path_for_sweep(cfg: dict, dotted: str) -> tuple[dict, str]:
    node: Any = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigurationError(f"sweep.path: no such config key {dotted!r}")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigurationError(f"sweep.path: no such config key {dotted!r}")
    return node, leaf


def validate_config(data: dict) -> dict:
    resolved = _validate(SCHEMA, data, "")
    _cross_checks(resolved)
    return resolved


def parse_config(text: str) -> dict:
    """Parse and validate a JSON experiment config; returns the resolved echo."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    return validate_config(data)


# domain tags for deriving per-component seeds from the global seed
_DOMAIN_TAGS = {"dataset": 0, "noise": 1, "model": 2, "schedule": 3, "select": 4}


def effective_seed(global_seed: int, domain: str, local_seed: int) -> int:
    """Per-component seed: a pure function of (global seed, domain, local seed)."""
    tag = _DOMAIN_TAGS[domain]
    return int(np.random.SeedSequence([global_seed, tag, local_seed]).generate_state(1)[0])
