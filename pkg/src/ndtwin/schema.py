"""The node-kind table that both validates graph queries and documents the KG.

Agents read the rendered descriptor; the query validator reads the same
``KINDS`` table, so the two cannot drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .errors import UnknownScope
from .layers import LayerId

# semantic attr types
STRING = "string"
INTEGER = "integer"
NUMBER = "number"
BOOLEAN = "boolean"

NUMERIC_TYPES = (INTEGER, NUMBER)
BUILTIN_ATTRS = {"id": STRING, "layer": STRING, "device": STRING, "kind": STRING}


@dataclass(frozen=True)
class AttrSpec:
    type: str
    description: str
    nullable: bool = False


@dataclass(frozen=True)
class KindSpec:
    layer: LayerId
    kind: str
    key: str
    description: str
    attrs: dict[str, AttrSpec]
    examples: list[dict[str, Any]] = field(default_factory=list)

    def attr_type(self, name: str) -> str | None:
        if name in BUILTIN_ATTRS:
            return BUILTIN_ATTRS[name]
        spec = self.attrs.get(name)
        return spec.type if spec else None


def _a(type_: str, description: str, nullable: bool = False) -> AttrSpec:
    return AttrSpec(type_, description, nullable)


def _example(layer: LayerId, kind: str, project: list[str], where=None, expand=None) -> dict[str, Any]:
    return {
        "start": {"layer": layer.value, "kind": kind, "where": where or []},
        "expand": expand or [],
        "project": project,
        "limit": 100,
    }


_SPECS = [
    KindSpec(
        LayerId.DEVICE,
        "device",
        "hostname",
        "A network device. Base layer; owns every other node through OWN edges.",
        {
            "hostname": _a(STRING, "Device hostname"),
            "interface_count": _a(INTEGER, "Number of configured interfaces"),
            "acl_count": _a(INTEGER, "Number of configured ACLs"),
            "igp_process_count": _a(INTEGER, "Number of IGP processes"),
        },
        [
            _example(LayerId.DEVICE, "device", ["hostname", "interface_count"]),
            _example(
                LayerId.DEVICE,
                "device",
                ["0.hostname", "name", "mtu"],
                expand=[{"edge": "OWN", "direction": "out", "layer": "INTERFACES", "kind": "interface", "where": []}],
            ),
        ],
    ),
    KindSpec(
        LayerId.INTERFACES,
        "interface",
        "name",
        "A configured interface. CONNECT edges join the two ends of a topology link.",
        {
            "name": _a(STRING, "Interface name, unique per device"),
            "mtu": _a(INTEGER, "MTU in bytes"),
            "enabled": _a(BOOLEAN, "Administrative state"),
            "linked": _a(BOOLEAN, "True when the interface terminates a topology link"),
        },
        [
            _example(LayerId.INTERFACES, "interface", ["device", "name", "mtu"]),
            _example(
                LayerId.INTERFACES,
                "interface",
                ["0.device", "0.name", "0.mtu", "device", "name", "mtu"],
                expand=[{"edge": "CONNECT", "direction": "out", "layer": "INTERFACES", "kind": "interface", "where": []}],
            ),
        ],
    ),
    KindSpec(
        LayerId.IP_SETTINGS,
        "ip-address",
        "name",
        "An interface address (one node per interface and address family).",
        {
            "name": _a(STRING, "<interface>/<family>"),
            "interface": _a(STRING, "Owning interface"),
            "family": _a(STRING, "v4 or v6"),
            "address": _a(STRING, "Host address"),
            "prefix_len": _a(INTEGER, "Prefix length"),
            "network": _a(STRING, "Connected network prefix"),
        },
        [
            _example(
                LayerId.IP_SETTINGS,
                "ip-address",
                ["device", "interface", "address"],
                where=[{"attr": "family", "op": "eq", "value": "v6"}],
            )
        ],
    ),
    KindSpec(
        LayerId.ACL,
        "acl-rule",
        "name",
        "One ACL rule; rules are evaluated first-match by ascending seq.",
        {
            "name": _a(STRING, "<acl>/<seq>"),
            "acl": _a(STRING, "ACL name"),
            "seq": _a(INTEGER, "Sequence number"),
            "action": _a(STRING, "permit or deny"),
            "protocol": _a(STRING, "any, tcp, udp or icmp"),
            "src_prefix": _a(STRING, "Source prefix or 'any'"),
            "dst_prefix": _a(STRING, "Destination prefix or 'any'"),
            "src_port_lo": _a(INTEGER, "Lowest matched source port"),
            "src_port_hi": _a(INTEGER, "Highest matched source port"),
            "dst_port_lo": _a(INTEGER, "Lowest matched destination port"),
            "dst_port_hi": _a(INTEGER, "Highest matched destination port"),
        },
        [
            _example(
                LayerId.ACL,
                "acl-rule",
                ["device", "acl", "seq", "action", "dst_prefix"],
                where=[{"attr": "action", "op": "eq", "value": "deny"}],
            )
        ],
    ),
    KindSpec(
        LayerId.ACL,
        "acl-binding",
        "name",
        "Application of an ACL to an interface in one direction.",
        {
            "name": _a(STRING, "<acl>@<interface>:<direction>"),
            "acl": _a(STRING, "ACL name"),
            "interface": _a(STRING, "Interface the ACL is applied to"),
            "direction": _a(STRING, "in or out"),
        },
        [_example(LayerId.ACL, "acl-binding", ["device", "acl", "interface", "direction"])],
    ),
    KindSpec(
        LayerId.ROUTING,
        "rib-entry",
        "name",
        "Best route for one prefix on one device. Built on demand by route computation. "
        "CONNECT edges point from an entry to the same prefix's entry on each next-hop device.",
        {
            "name": _a(STRING, "The prefix"),
            "prefix": _a(STRING, "Destination prefix"),
            "family": _a(STRING, "v4 or v6"),
            "protocol": _a(STRING, "CONNECTED, STATIC, IGP or SUMMARY_DISCARD"),
            "metric": _a(INTEGER, "Route metric"),
            "metric_type": _a(STRING, "internal or external"),
            "origin_process": _a(STRING, "Process the route was redistributed from, if preserved", nullable=True),
            "process": _a(STRING, "IGP process that installed the route", nullable=True),
            "admin_distance": _a(INTEGER, "Administrative distance"),
            "next_hops": _a(STRING, "Comma-separated <interface>><device> pairs"),
            "next_hop_count": _a(INTEGER, "ECMP width (0 for discard routes)"),
        },
        [
            _example(
                LayerId.ROUTING,
                "rib-entry",
                ["device", "prefix", "protocol", "next_hops"],
                where=[{"attr": "protocol", "op": "eq", "value": "SUMMARY_DISCARD"}],
            ),
            _example(
                LayerId.ROUTING,
                "rib-entry",
                ["device", "prefix", "next_hop_count"],
                where=[{"attr": "prefix", "op": "within", "value": "2001:db8::/32"}],
            ),
        ],
    ),
    KindSpec(
        LayerId.ROUTING,
        "igp-redistribution",
        "name",
        "A configured redistribution between two IGP processes on a device.",
        {
            "name": _a(STRING, "<process><-<from_process>"),
            "process": _a(STRING, "Receiving process"),
            "from_process": _a(STRING, "Source process"),
            "metric": _a(INTEGER, "Metric assigned to redistributed routes"),
            "metric_type": _a(STRING, "internal or external"),
        },
        [
            _example(
                LayerId.ROUTING,
                "igp-redistribution",
                ["device", "process", "from_process", "metric_type"],
                where=[{"attr": "metric_type", "op": "eq", "value": "internal"}],
            )
        ],
    ),
    KindSpec(
        LayerId.ROUTING,
        "summary",
        "name",
        "A configured summary prefix and whether it is currently active.",
        {
            "name": _a(STRING, "<process>:<prefix>"),
            "process": _a(STRING, "Process the summary is advertised into"),
            "prefix": _a(STRING, "Summary prefix"),
            "active": _a(BOOLEAN, "True when at least one contributing specific exists"),
            "contributors": _a(INTEGER, "Number of contributing more-specific routes"),
        },
        [_example(LayerId.ROUTING, "summary", ["device", "prefix", "active", "contributors"])],
    ),
    KindSpec(
        LayerId.RAW_CONFIG,
        "config",
        "name",
        "Canonical re-serialization of the device configuration.",
        {
            "name": _a(STRING, "Always 'running'"),
            "format": _a(STRING, "Serialization format"),
            "text": _a(STRING, "Canonical configuration document"),
        },
        [_example(LayerId.RAW_CONFIG, "config", ["device", "format"])],
    ),
    KindSpec(
        LayerId.METRICS,
        "link",
        "name",
        "A topology link, owned by its first endpoint's device.",
        {
            "name": _a(STRING, "<dev>:<if>--<dev>:<if>"),
            "interface": _a(STRING, "Local interface"),
            "peer_device": _a(STRING, "Remote device"),
            "peer_interface": _a(STRING, "Remote interface"),
            "capacity": _a(NUMBER, "Capacity in bits per second"),
            "prop_delay": _a(NUMBER, "Propagation delay in milliseconds"),
        },
        [
            _example(
                LayerId.METRICS,
                "link",
                ["name", "capacity", "prop_delay"],
                where=[{"attr": "capacity", "op": "lt", "value": 10_000_000_000}],
            )
        ],
    ),
    KindSpec(
        LayerId.METRICS,
        "flow-demand",
        "name",
        "A traffic demand with its SLA class thresholds, owned by the source device.",
        {
            "name": _a(STRING, "Flow id"),
            "src": _a(STRING, "Source device"),
            "dst_ip": _a(STRING, "Destination address"),
            "rate": _a(NUMBER, "Offered rate in bits per second"),
            "sla_class": _a(STRING, "SLA class name"),
            "max_delay": _a(NUMBER, "Class delay bound in milliseconds"),
            "max_loss": _a(NUMBER, "Class loss bound as a fraction"),
        },
        [_example(LayerId.METRICS, "flow-demand", ["name", "src", "dst_ip", "rate", "sla_class"])],
    ),
]

KINDS: dict[tuple[LayerId, str], KindSpec] = {(s.layer, s.kind): s for s in _SPECS}
KIND_LAYER: dict[str, LayerId] = {s.kind: s.layer for s in _SPECS}

EDGES = {
    "OWN": "DEVICE node -> node of any other layer on the same device (exactly one per owned node)",
    "CONNECT": "Same-layer nodes on different devices (link ends, next-hop route entries)",
}


def kinds_for(layer: LayerId) -> list[KindSpec]:
    return [s for s in _SPECS if s.layer == layer]


def _render(spec: KindSpec) -> dict[str, Any]:
    return {
        "kind": spec.kind,
        "key": spec.key,
        "description": spec.description,
        "attrs": {
            name: {"type": a.type, "description": a.description, "nullable": a.nullable}
            for name, a in spec.attrs.items()
        },
        "builtin_attrs": dict(BUILTIN_ATTRS),
        "examples": [dict(e) for e in spec.examples],
    }


def schema_describe(scope: str | LayerId | None = None) -> dict[str, Any]:
    """Render the schema, optionally restricted to a layer or ``LAYER/kind``."""
    layer_filter: LayerId | None = None
    kind_filter: str | None = None
    if scope is not None:
        text = scope.value if isinstance(scope, LayerId) else str(scope)
        layer_text, _, kind_text = text.partition("/")
        if kind_text or layer_text in KIND_LAYER:
            kind_filter = kind_text or layer_text
            if kind_filter not in KIND_LAYER:
                raise UnknownScope(f"unknown kind {kind_filter!r}")
            layer_filter = KIND_LAYER[kind_filter]
            if kind_text and layer_text.upper() != layer_filter.value:
                raise UnknownScope(f"kind {kind_filter!r} is not in layer {layer_text!r}")
        else:
            try:
                layer_filter = LayerId.parse(layer_text)
            except ValueError:
                raise UnknownScope(f"unknown scope {text!r}") from None

    layers: dict[str, Any] = {}
    for layer in LayerId:
        if layer_filter is not None and layer != layer_filter:
            continue
        kinds = {
            s.kind: _render(s) for s in kinds_for(layer) if kind_filter is None or s.kind == kind_filter
        }
        layers[layer.value] = {"kinds": kinds}
    return {
        "layers": layers,
        "edges": dict(EDGES),
        "query_ops": {
            "eq": "equals",
            "ne": "not equal",
            "prefix": "string starts with value",
            "within": "address or prefix lies inside the IP prefix given as value",
            "lt": "numeric <",
            "le": "numeric <=",
            "gt": "numeric >",
            "ge": "numeric >=",
        },
    }


def example_queries(descriptor: dict[str, Any]) -> list[dict[str, Any]]:
    out = []
    for layer in descriptor["layers"].values():
        for kind in layer["kinds"].values():
            out.extend(kind["examples"])
    return out
