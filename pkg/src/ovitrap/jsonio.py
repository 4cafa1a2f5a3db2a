"""Canonical JSON serialization.

All artifacts are written with sorted keys and a fixed layout so that
identical inputs produce byte-identical files; several tests compare
outputs bytewise.
"""
from __future__ import annotations

import json
from pathlib import Path

from .errors import SchemaError


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def dump_json(obj, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(obj), encoding="utf-8")


def load_json(path: str | Path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc


def require(doc: dict, key: str, where: str):
    """Fetch a required key, raising a SchemaError naming the record."""
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"{where}: missing required key '{key}'")
    return doc[key]
