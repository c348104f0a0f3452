"""Deterministic artifact writing and run manifests.

Every pipeline command writes its outputs through :func:`dump_json` (stable
key order, stable float repr, trailing newline) and records a manifest of
the effective config plus content digests of all inputs and outputs. A rerun
with an identical manifest must reproduce identical artifact digests, so
manifests deliberately carry no timestamps.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

TOOL_NAME = "verilabel"


def canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def dump_json(obj: object, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", "utf-8")
    return path


def load_json(path: Path | str) -> object:
    return json.loads(Path(path).read_text("utf-8"))


def sha256_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def sha256_file(path: Path | str) -> str:
    return sha256_bytes(Path(path).read_bytes())


def config_hash(config: dict) -> str:
    return sha256_bytes(canonical_json(config).encode("utf-8"))


def _relativize(paths: dict[str, str], anchor: Path) -> dict[str, str]:
    # manifests record paths relative to themselves so a run directory is
    # relocatable and reruns in sibling directories produce identical bytes
    out = {}
    for key, digest in paths.items():
        try:
            out[os.path.relpath(key, anchor)] = digest
        except ValueError:
            out[key] = digest
    return out


def write_manifest(
    path: Path | str,
    *,
    command: str,
    version: str,
    config: dict,
    inputs: dict[str, str],
    outputs: dict[str, str],
    stats: dict | None = None,
) -> Path:
    anchor = Path(path).parent
    manifest = {
        "tool": TOOL_NAME,
        "version": version,
        "command": command,
        "configHash": config_hash(config),
        "config": config,
        "inputs": _relativize(inputs, anchor),
        "outputs": _relativize(outputs, anchor),
        "stats": stats or {},
    }
    return dump_json(manifest, path)
