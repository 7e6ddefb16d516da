"""Knowledge-graph primitives: layers, nodes, edges and their canonical digest."""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

Scalar = str | int | float | bool | None


class LayerId(str, enum.Enum):
    DEVICE = "DEVICE"
    INTERFACES = "INTERFACES"
    IP_SETTINGS = "IP_SETTINGS"
    ROUTING = "ROUTING"
    ACL = "ACL"
    RAW_CONFIG = "RAW_CONFIG"
    METRICS = "METRICS"

    @classmethod
    def parse(cls, value: str | LayerId) -> LayerId:
        if isinstance(value, LayerId):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown layer {value!r}") from None


class EdgeKind(str, enum.Enum):
    OWN = "OWN"
    CONNECT = "CONNECT"


def node_id(layer: LayerId, device: str, kind: str, name: str) -> str:
    return f"{layer.value}:{device}:{kind}:{name}"


@dataclass(frozen=True)
class KgNode:
    id: str
    layer: LayerId
    device: str
    kind: str
    attrs: Mapping[str, Scalar] = field(default_factory=dict)

    def get(self, path: str) -> Any:
        """Resolve a projection path; built-ins shadow nothing in attrs."""
        if path in ("id", "layer", "device", "kind"):
            value = getattr(self, path)
            return value.value if isinstance(value, LayerId) else value
        return self.attrs.get(path)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "layer": self.layer.value,
            "device": self.device,
            "kind": self.kind,
            "attrs": dict(sorted(self.attrs.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> KgNode:
        return cls(
            id=data["id"],
            layer=LayerId.parse(data["layer"]),
            device=data["device"],
            kind=data["kind"],
            attrs=dict(data.get("attrs", {})),
        )

    def __hash__(self) -> int:
        return hash((self.id, self.layer, self.device, self.kind, tuple(sorted(self.attrs.items()))))


@dataclass(frozen=True)
class KgEdge:
    src: str
    dst: str
    kind: EdgeKind
    attrs: Mapping[str, Scalar] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "from": self.src,
            "to": self.dst,
            "kind": self.kind.value,
            "attrs": dict(sorted(self.attrs.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> KgEdge:
        return cls(
            src=data["from"],
            dst=data["to"],
            kind=EdgeKind(data["kind"]),
            attrs=dict(data.get("attrs", {})),
        )

    def key(self) -> tuple[str, str, str]:
        return (self.src, self.dst, self.kind.value)

    def __hash__(self) -> int:
        return hash((self.src, self.dst, self.kind, tuple(sorted(self.attrs.items()))))


# Canonical encoding: every value is a one-byte tag, an 8-byte big-endian
# length, then the payload.  Mappings are emitted sorted by key.


def _frame(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack(">Q", len(payload)) + payload


def encode(value: Any) -> bytes:
    if value is None:
        return _frame(b"n", b"")
    if isinstance(value, bool):
        return _frame(b"b", b"\x01" if value else b"\x00")
    if isinstance(value, enum.Enum):
        return encode(value.value)
    if isinstance(value, int):
        return _frame(b"i", str(value).encode())
    if isinstance(value, float):
        return _frame(b"f", repr(value).encode())
    if isinstance(value, str):
        return _frame(b"s", value.encode("utf-8"))
    if isinstance(value, Mapping):
        items = sorted(value.items(), key=lambda kv: str(kv[0]))
        return _frame(b"d", b"".join(encode(str(k)) + encode(v) for k, v in items))
    if isinstance(value, (list, tuple)):
        return _frame(b"l", b"".join(encode(v) for v in value))
    raise TypeError(f"cannot canonically encode {type(value).__name__}")


def encode_node(node: KgNode) -> bytes:
    return encode([node.id, node.layer.value, node.device, node.kind, dict(node.attrs)])


def encode_edge(edge: KgEdge) -> bytes:
    return encode([edge.src, edge.dst, edge.kind.value, dict(edge.attrs)])


def canonical_bytes(nodes: Iterable[KgNode], edges: Iterable[KgEdge]) -> bytes:
    node_blobs = [encode_node(n) for n in sorted(nodes, key=lambda n: n.id)]
    edge_blobs = sorted(encode_edge(e) for e in edges)
    return _frame(b"N", b"".join(node_blobs)) + _frame(b"E", b"".join(edge_blobs))


def layer_digest(nodes: Iterable[KgNode], edges: Iterable[KgEdge]) -> str:
    return hashlib.sha256(canonical_bytes(nodes, edges)).hexdigest()


@dataclass(frozen=True)
class LayerBlob:
    """Content of one (device, layer) cell, stored by digest."""

    nodes: tuple[KgNode, ...]
    edges: tuple[KgEdge, ...]

    @classmethod
    def build(cls, nodes: Iterable[KgNode], edges: Iterable[KgEdge]) -> LayerBlob:
        return cls(
            nodes=tuple(sorted(nodes, key=lambda n: n.id)),
            edges=tuple(sorted(edges, key=encode_edge)),
        )

    @property
    def digest(self) -> str:
        return layer_digest(self.nodes, self.edges)

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> LayerBlob:
        return cls.build(
            (KgNode.from_dict(n) for n in data["nodes"]),
            (KgEdge.from_dict(e) for e in data["edges"]),
        )
