"""Layered configuration: CLI flags > environment > config file > defaults.

The config file is a single JSON document mirroring the keys below.
Environment overrides use the ``VERILABEL_`` prefix and exist so CI can pin
values without touching command lines.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any

from verilabel.errors import InputError

ENV_PREFIX = "VERILABEL_"

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "tau": 0.3,
    "scenario": "5+5+5+5",
    "jobs": 1,
    "grid": {"w": 24, "h": 24},
    "nms_iou": None,
    "backend": {
        "url": None,
        "oracle": False,
        "iou_thresh": 0.5,
        "flip_prob": 0.0,
        "retries": 3,
        "unparseable_policy": "reject",
    },
    "eval": {"mode": "voc", "voc_11pt": False},
    "synth": {
        "num_classes": 20,
        "images_per_task": 12,
        "objects_per_image": 4,
        "image_size": [512, 512],
        "recall_decay": 0.15,
        "hallucination_rate": 0.10,
        "box_jitter": 4.0,
        "score_noise": 0.05,
    },
}

# env var name -> (dotted config path, parser)
_ENV_VARS: dict[str, tuple[str, type]] = {
    "SEED": ("seed", int),
    "TAU": ("tau", float),
    "SCENARIO": ("scenario", str),
    "JOBS": ("jobs", int),
    "BACKEND_URL": ("backend.url", str),
    "ORACLE": ("backend.oracle", bool),
    "VOC_11PT": ("eval.voc_11pt", bool),
}


def _parse_env_value(raw: str, kind: type) -> Any:
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    try:
        return kind(raw)
    except ValueError as exc:
        raise InputError(f"cannot parse environment override {raw!r} as {kind.__name__}") from exc


def set_path(config: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def get_path(config: dict, dotted: str, default: Any = None) -> Any:
    node: Any = config
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key]
    return node


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config_file(path: Path | str) -> dict:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"config file {path} must contain a JSON object")
    return doc


def resolve_config(
    file_path: Path | str | None = None,
    cli_overrides: dict[str, Any] | None = None,
    env: dict[str, str] | None = None,
) -> dict:
    """Effective config after applying all layers (highest precedence last)."""
    config = copy.deepcopy(DEFAULTS)
    if file_path is not None:
        config = _deep_merge(config, load_config_file(file_path))
    env = os.environ if env is None else env
    for var, (dotted, kind) in _ENV_VARS.items():
        raw = env.get(ENV_PREFIX + var)
        if raw is not None:
            set_path(config, dotted, _parse_env_value(raw, kind))
    for dotted, value in (cli_overrides or {}).items():
        if value is not None:
            set_path(config, dotted, value)
    return config
