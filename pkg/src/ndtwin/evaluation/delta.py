"""Path edits over a network-spec JSON document.

A delta is a list of edits ``{"op": "set" | "remove" | "add", "path": ..., "value": ...}``.
Paths are dotted keys with bracketed list selectors, e.g.
``devices[r1].interfaces[to_r2].mtu``. A selector matches the list item whose
natural key (hostname, name, process_id, seq, prefix, from_process, flow_id)
equals it, otherwise it is read as an integer index. ``add`` appends ``value``
to the list at ``path``, creating the list when missing.
"""

from __future__ import annotations

import copy
import re
from typing import Any, Iterable, Mapping

from ..errors import DeltaError

NATURAL_KEYS = ("hostname", "name", "process_id", "seq", "prefix", "from_process", "flow_id")
_TOKEN = re.compile(r"\[([^\]]*)\]|([^.\[\]]+)")


def parse_path(path: str) -> list[tuple[str, str]]:
    """Tokens as (kind, text) with kind "key" or "sel"."""
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(path):
        if path[pos] == ".":
            pos += 1
            continue
        m = _TOKEN.match(path, pos)
        if m is None:
            raise DeltaError(f"bad path {path!r} at offset {pos}")
        tokens.append(("sel", m.group(1)) if m.group(1) is not None else ("key", m.group(2)))
        pos = m.end()
    if not tokens:
        raise DeltaError("empty path")
    return tokens


def _select(items: list[Any], selector: str, path: str) -> int:
    for i, item in enumerate(items):
        if isinstance(item, Mapping) and any(k in item and str(item[k]) == selector for k in NATURAL_KEYS):
            return i
    try:
        index = int(selector)
    except ValueError:
        raise DeltaError(f"{path}: no list item matches {selector!r}") from None
    if not -len(items) <= index < len(items):
        raise DeltaError(f"{path}: index {index} out of range")
    return index


def _step(node: Any, token: tuple[str, str], path: str, create: bool = False) -> Any:
    kind, text = token
    if kind == "key":
        if not isinstance(node, dict):
            raise DeltaError(f"{path}: {text!r} applied to a non-object")
        if text not in node:
            if not create:
                raise DeltaError(f"{path}: missing key {text!r}")
            node[text] = []
        return node[text]
    if not isinstance(node, list):
        raise DeltaError(f"{path}: selector [{text}] applied to a non-list")
    return node[_select(node, text, path)]


def apply_edit(doc: dict[str, Any], edit: Mapping[str, Any]) -> None:
    op = edit.get("op")
    path = edit.get("path")
    if op not in ("set", "remove", "add") or not isinstance(path, str):
        raise DeltaError(f"bad edit {dict(edit)!r}")
    tokens = parse_path(path)
    if op == "add":
        node: Any = doc
        for i, token in enumerate(tokens):
            node = _step(node, token, path, create=i == len(tokens) - 1)
        if not isinstance(node, list):
            raise DeltaError(f"{path}: add needs a list")
        node.append(copy.deepcopy(edit.get("value")))
        return
    parent: Any = doc
    for token in tokens[:-1]:
        parent = _step(parent, token, path)
    kind, text = tokens[-1]
    if kind == "key":
        if not isinstance(parent, dict):
            raise DeltaError(f"{path}: parent is not an object")
        if op == "set":
            parent[text] = copy.deepcopy(edit.get("value"))
        elif text in parent:
            del parent[text]
        else:
            raise DeltaError(f"{path}: missing key {text!r}")
        return
    if not isinstance(parent, list):
        raise DeltaError(f"{path}: parent is not a list")
    index = _select(parent, text, path)
    if op == "set":
        parent[index] = copy.deepcopy(edit.get("value"))
    else:
        del parent[index]


def apply_delta(doc: Mapping[str, Any], edits: Iterable[Mapping[str, Any]]) -> dict[str, Any]:
    out = copy.deepcopy(dict(doc))
    for edit in edits:
        apply_edit(out, edit)
    return out
