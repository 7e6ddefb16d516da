"""Scenario bundle directories.

Layout::

    <dir>/scenario.json       id, title, descriptor, intent_variations, candidates
    <dir>/base.json           network spec (the ingest dialect)
    <dir>/deltas/<cand>.json  list of path edits (see evaluation.delta)
    <dir>/requirements.json   ground-truth requirements
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import jsonschema

from ..errors import ValidationError
from ..ingest import NETWORK_SCHEMA
from .scenarios import Candidate, Requirement, Scenario

_SIGNATURE = {
    "type": "object",
    "required": ["capability"],
    "properties": {"capability": {"type": "string"}, "params": {"type": "object"}},
}

SCENARIO_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["id", "title", "descriptor", "candidates"],
    "properties": {
        "id": {"type": "string"},
        "title": {"type": "string"},
        "descriptor": {
            "type": "object",
            "required": ["intent", "category", "scope"],
            "properties": {"intent": {"type": "string"}, "category": {"type": "string"}, "scope": {"type": "object"}},
        },
        "intent_variations": {"type": "array", "items": {"type": "string"}},
        "candidates": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["id", "label"],
                "properties": {
                    "id": {"type": "string", "pattern": r"^[A-Za-z0-9_.-]+$"},
                    "label": {"enum": ["GOOD", "BAD"]},
                    "main_error_test": {"oneOf": [{"type": "null"}, _SIGNATURE]},
                },
            },
        },
    },
}

DELTA_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "array",
    "items": {
        "type": "object",
        "required": ["op", "path"],
        "properties": {"op": {"enum": ["set", "remove", "add"]}, "path": {"type": "string"}, "value": {}},
    },
}

REQUIREMENTS_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "array",
    "items": {
        "type": "object",
        "required": ["requirement_id", "predicate"],
        "properties": {"requirement_id": {"type": "string"}, "description": {"type": "string"}, "predicate": _SIGNATURE},
    },
}


def _write(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read(path: Path, schema: dict[str, Any]) -> Any:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError([f"{path.name}: {exc}"]) from None
    errors = sorted(jsonschema.Draft7Validator(schema).iter_errors(data), key=lambda e: list(map(str, e.path)))
    if errors:
        raise ValidationError([f"{path.name}: {'/'.join(map(str, e.path)) or '.'}: {e.message}" for e in errors])
    return data


def dump_bundle(scenario: Scenario, directory: str | Path) -> Path:
    root = Path(directory)
    (root / "deltas").mkdir(parents=True, exist_ok=True)
    _write(root / "base.json", scenario.base)
    _write(root / "requirements.json", [r.to_dict() for r in scenario.requirements])
    for cand in scenario.candidates:
        _write(root / "deltas" / f"{cand.id}.json", [dict(e) for e in cand.delta])
    _write(
        root / "scenario.json",
        {
            "id": scenario.id,
            "title": scenario.title,
            "descriptor": dict(scenario.descriptor),
            "intent_variations": list(scenario.intent_variations),
            "candidates": [{"id": c.id, "label": c.label, "main_error_test": c.main_error_test} for c in scenario.candidates],
        },
    )
    return root


def load_bundle(directory: str | Path) -> Scenario:
    """Schema-checked load; the base spec is validated lazily when a run parses it."""
    root = Path(directory)
    meta = _read(root / "scenario.json", SCENARIO_SCHEMA)
    base = _read(root / "base.json", NETWORK_SCHEMA)
    reqs = _read(root / "requirements.json", REQUIREMENTS_SCHEMA)
    candidates = []
    for c in meta["candidates"]:
        delta = _read(root / "deltas" / f"{c['id']}.json", DELTA_SCHEMA)
        candidates.append(Candidate(c["id"], c["label"], tuple(delta), c.get("main_error_test")))
    return Scenario(
        meta["id"],
        meta["title"],
        base,
        tuple(candidates),
        meta["descriptor"],
        tuple(Requirement.from_dict(r) for r in reqs),
        tuple(meta.get("intent_variations", [])),
    )


def dump_library(scenarios: list[Scenario], directory: str | Path) -> None:
    for scenario in scenarios:
        dump_bundle(scenario, Path(directory) / scenario.id)


def load_library(directory: str | Path) -> list[Scenario]:
    return [load_bundle(p) for p in sorted(Path(directory).iterdir()) if (p / "scenario.json").exists()]
