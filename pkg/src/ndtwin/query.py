"""Structured graph queries over one snapshot's knowledge graph."""

from __future__ import annotations

import ipaddress
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .errors import InvalidQuery
from .layers import EdgeKind, KgEdge, KgNode, LayerId
from .schema import KINDS, NUMERIC_TYPES, STRING, KindSpec

OPS = ("eq", "ne", "prefix", "within", "lt", "le", "gt", "ge")
DIRECTIONS = ("out", "in", "both")
DEFAULT_LIMIT = 1000


@dataclass(frozen=True)
class Predicate:
    attr: str
    op: str
    value: Any

    def to_dict(self) -> dict[str, Any]:
        return {"attr": self.attr, "op": self.op, "value": self.value}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Predicate:
        return cls(attr=data["attr"], op=data.get("op", "eq"), value=data.get("value"))

    def holds(self, node: KgNode) -> bool:
        actual = node.get(self.attr)
        return evaluate_op(self.op, actual, self.value)


def evaluate_op(op: str, actual: Any, expected: Any) -> bool:
    if op == "eq":
        return actual == expected
    if op == "ne":
        return actual != expected
    if actual is None:
        return False
    if op == "prefix":
        return isinstance(actual, str) and actual.startswith(str(expected))
    if op == "within":
        try:
            outer = ipaddress.ip_network(str(expected), strict=False)
            inner = ipaddress.ip_network(str(actual), strict=False)
        except ValueError:
            return False
        return inner.version == outer.version and inner.subnet_of(outer)
    if isinstance(actual, bool) or not isinstance(actual, (int, float)):
        return False
    if op == "lt":
        return actual < expected
    if op == "le":
        return actual <= expected
    if op == "gt":
        return actual > expected
    if op == "ge":
        return actual >= expected
    raise InvalidQuery(f"unknown operator {op!r}")


@dataclass(frozen=True)
class StartClause:
    layer: LayerId
    kind: str
    where: tuple[Predicate, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"layer": self.layer.value, "kind": self.kind, "where": [p.to_dict() for p in self.where]}


@dataclass(frozen=True)
class ExpandStep:
    edge: EdgeKind
    direction: str
    layer: LayerId
    kind: str
    where: tuple[Predicate, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "edge": self.edge.value,
            "direction": self.direction,
            "layer": self.layer.value,
            "kind": self.kind,
            "where": [p.to_dict() for p in self.where],
        }


@dataclass(frozen=True)
class GraphQuery:
    start: StartClause
    expand: tuple[ExpandStep, ...] = ()
    project: tuple[str, ...] = ()
    limit: int = DEFAULT_LIMIT

    def to_dict(self) -> dict[str, Any]:
        return {
            "start": self.start.to_dict(),
            "expand": [s.to_dict() for s in self.expand],
            "project": list(self.project),
            "limit": self.limit,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> GraphQuery:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidQuery(f"query is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> GraphQuery:
        """Parse and schema-check a query; raises InvalidQuery on any bad reference."""
        if not isinstance(data, Mapping) or "start" not in data:
            raise InvalidQuery("query must be an object with a 'start' clause")
        try:
            start_raw = data["start"]
            start = StartClause(
                layer=_layer(start_raw.get("layer")),
                kind=str(start_raw.get("kind")),
                where=tuple(Predicate.from_dict(p) for p in start_raw.get("where", [])),
            )
            steps = tuple(
                ExpandStep(
                    edge=_edge(s.get("edge")),
                    direction=str(s.get("direction", "out")),
                    layer=_layer(s.get("layer")),
                    kind=str(s.get("kind")),
                    where=tuple(Predicate.from_dict(p) for p in s.get("where", [])),
                )
                for s in data.get("expand", [])
            )
            project = tuple(str(p) for p in data.get("project", []))
            limit = data.get("limit", DEFAULT_LIMIT)
        except (AttributeError, KeyError, TypeError) as exc:
            raise InvalidQuery(f"malformed query: {exc}") from None
        query = cls(start=start, expand=steps, project=project, limit=limit)
        validate(query)
        return query


def _layer(value: Any) -> LayerId:
    try:
        return LayerId.parse(value)
    except ValueError:
        raise InvalidQuery(f"unknown layer {value!r}") from None


def _edge(value: Any) -> EdgeKind:
    try:
        return EdgeKind(str(value).upper())
    except ValueError:
        raise InvalidQuery(f"unknown edge kind {value!r}") from None


def _kind_spec(layer: LayerId, kind: str) -> KindSpec:
    spec = KINDS.get((layer, kind))
    if spec is None:
        raise InvalidQuery(f"unknown kind {kind!r} in layer {layer.value}")
    return spec


def _check_predicates(spec: KindSpec, preds: Iterable[Predicate]) -> None:
    for p in preds:
        if p.op not in OPS:
            raise InvalidQuery(f"unknown operator {p.op!r}")
        attr_type = spec.attr_type(p.attr)
        if attr_type is None:
            raise InvalidQuery(f"kind {spec.kind!r} has no attribute {p.attr!r}")
        if p.op in ("lt", "le", "gt", "ge"):
            if attr_type not in NUMERIC_TYPES:
                raise InvalidQuery(f"operator {p.op!r} needs a numeric attribute, {p.attr!r} is {attr_type}")
            if isinstance(p.value, bool) or not isinstance(p.value, (int, float)):
                raise InvalidQuery(f"operator {p.op!r} needs a numeric value")
        if p.op in ("prefix", "within") and attr_type != STRING:
            raise InvalidQuery(f"operator {p.op!r} needs a string attribute")
        if p.op == "within":
            try:
                ipaddress.ip_network(str(p.value), strict=False)
            except ValueError:
                raise InvalidQuery(f"'within' needs an IP prefix, got {p.value!r}") from None


def validate(query: GraphQuery) -> None:
    specs = [_kind_spec(query.start.layer, query.start.kind)]
    _check_predicates(specs[0], query.start.where)
    for step in query.expand:
        if step.direction not in DIRECTIONS:
            raise InvalidQuery(f"unknown direction {step.direction!r}")
        spec = _kind_spec(step.layer, step.kind)
        if step.edge == EdgeKind.OWN and step.direction == "out" and specs[-1].layer != LayerId.DEVICE:
            raise InvalidQuery("OWN edges leave DEVICE nodes only")
        if step.edge == EdgeKind.CONNECT and step.layer != specs[-1].layer:
            raise InvalidQuery("CONNECT edges stay within one layer")
        _check_predicates(spec, step.where)
        specs.append(spec)
    for path in query.project:
        index, attr = _split_path(path, len(specs))
        if specs[index].attr_type(attr) is None:
            raise InvalidQuery(f"kind {specs[index].kind!r} has no attribute {attr!r}")
    if isinstance(query.limit, bool) or not isinstance(query.limit, int) or query.limit < 1:
        raise InvalidQuery("limit must be a positive integer")


def _split_path(path: str, depth: int) -> tuple[int, str]:
    head, dot, tail = path.partition(".")
    if dot and head.isdigit():
        index = int(head)
        if index >= depth:
            raise InvalidQuery(f"projection {path!r} refers to step {index}, query has {depth}")
        return index, tail
    return depth - 1, path


class GraphView:
    """Read-only indexed view over a set of nodes and edges."""

    def __init__(self, nodes: Iterable[KgNode], edges: Iterable[KgEdge]):
        self.nodes: dict[str, KgNode] = {}
        self.by_kind: dict[tuple[LayerId, str], list[KgNode]] = defaultdict(list)
        for n in nodes:
            self.nodes[n.id] = n
            self.by_kind[(n.layer, n.kind)].append(n)
        for bucket in self.by_kind.values():
            bucket.sort(key=lambda n: n.id)
        self.out_edges: dict[tuple[str, EdgeKind], list[str]] = defaultdict(list)
        self.in_edges: dict[tuple[str, EdgeKind], list[str]] = defaultdict(list)
        self.edges = list(edges)
        for e in self.edges:
            self.out_edges[(e.src, e.kind)].append(e.dst)
            self.in_edges[(e.dst, e.kind)].append(e.src)

    def neighbours(self, node_id: str, edge: EdgeKind, direction: str) -> list[str]:
        found: set[str] = set()
        if direction in ("out", "both"):
            found.update(self.out_edges.get((node_id, edge), ()))
        if direction in ("in", "both"):
            found.update(self.in_edges.get((node_id, edge), ()))
        return sorted(found)


def execute(view: GraphView, query: GraphQuery) -> list[dict[str, Any]]:
    paths: list[tuple[KgNode, ...]] = [
        (n,) for n in view.by_kind.get((query.start.layer, query.start.kind), []) if all(p.holds(n) for p in query.start.where)
    ]
    for step in query.expand:
        extended = []
        for path in paths:
            for nid in view.neighbours(path[-1].id, step.edge, step.direction):
                node = view.nodes.get(nid)
                if node is None or node.layer != step.layer or node.kind != step.kind:
                    continue
                if all(p.holds(node) for p in step.where):
                    extended.append(path + (node,))
        paths = extended
    paths.sort(key=lambda p: tuple(n.id for n in p))
    depth = 1 + len(query.expand)
    project = query.project or ("id",)
    rows = []
    for path in paths[: query.limit]:
        row = {}
        for spec in project:
            index, attr = _split_path(spec, depth)
            row[spec] = path[index].get(attr)
        rows.append(row)
    return rows


def matched_nodes(view: GraphView, query: GraphQuery) -> list[tuple[KgNode, ...]]:
    """Full node paths behind ``execute``; used to re-check predicates."""
    depth = 1 + len(query.expand)
    full = GraphQuery(query.start, query.expand, tuple(f"{i}.id" for i in range(depth)), query.limit)
    return [tuple(view.nodes[row[f"{i}.id"]] for i in range(depth)) for row in execute(view, full)]
