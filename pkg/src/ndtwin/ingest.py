"""Source adapter for the JSON network dialect and the base-layer KG builder."""

from __future__ import annotations

import ipaddress
import json
from typing import Any, Iterable

import jsonschema

from .errors import ParseError, ValidationError
from .layers import EdgeKind, KgEdge, KgNode, LayerId, node_id
from .model import (
    DeviceConfig,
    Endpoint,
    Link,
    NetworkSpec,
    SlaClass,
    SlaPolicy,
    Topology,
    TrafficDemand,
)
from .snapshots import OpenSnapshot, Repository

BASE_LAYERS = (
    LayerId.DEVICE,
    LayerId.INTERFACES,
    LayerId.IP_SETTINGS,
    LayerId.ACL,
    LayerId.RAW_CONFIG,
    LayerId.METRICS,
)

_PORTS = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}
_NAME = {"type": "string", "pattern": r"^[A-Za-z0-9_.\-]+$"}

NETWORK_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "ndtwin network specification",
    "type": "object",
    "required": ["devices"],
    "additionalProperties": False,
    "properties": {
        "devices": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["hostname"],
                "additionalProperties": False,
                "properties": {
                    "hostname": _NAME,
                    "interfaces": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name"],
                            "additionalProperties": False,
                            "properties": {
                                "name": _NAME,
                                "mtu": {"type": "integer", "minimum": 68, "maximum": 65535},
                                "enabled": {"type": "boolean"},
                                "v4_addr": {"type": ["string", "null"]},
                                "v6_addr": {"type": ["string", "null"]},
                            },
                        },
                    },
                    "static_routes": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["prefix"],
                            "additionalProperties": False,
                            "properties": {
                                "prefix": {"type": "string"},
                                "next_hop": {"type": ["string", "null"]},
                                "out_interface": {"type": ["string", "null"]},
                                "metric": {"type": "integer", "minimum": 0},
                            },
                        },
                    },
                    "igp_processes": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["process_id"],
                            "additionalProperties": False,
                            "properties": {
                                "process_id": {"type": ["string", "integer"]},
                                "family": {"enum": ["v4", "v6"]},
                                "interfaces": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["name"],
                                        "additionalProperties": False,
                                        "properties": {
                                            "name": {"type": "string"},
                                            "metric": {"type": "integer", "minimum": 1},
                                        },
                                    },
                                },
                                "redistribute": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["from_process"],
                                        "additionalProperties": False,
                                        "properties": {
                                            "from_process": {"type": ["string", "integer"]},
                                            "metric": {"type": "integer", "minimum": 0},
                                            "metric_type": {"enum": ["internal", "external"]},
                                        },
                                    },
                                },
                                "summaries": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["prefix"],
                                        "additionalProperties": False,
                                        "properties": {"prefix": {"type": "string"}},
                                    },
                                },
                            },
                        },
                    },
                    "acls": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name"],
                            "additionalProperties": False,
                            "properties": {
                                "name": _NAME,
                                "rules": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["seq", "action"],
                                        "additionalProperties": False,
                                        "properties": {
                                            "seq": {"type": "integer", "minimum": 0},
                                            "action": {"enum": ["permit", "deny"]},
                                            "protocol": {"enum": ["any", "tcp", "udp", "icmp"]},
                                            "src_prefix": {"type": "string"},
                                            "dst_prefix": {"type": "string"},
                                            "src_ports": _PORTS,
                                            "dst_ports": _PORTS,
                                        },
                                    },
                                },
                                "applied": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["interface", "direction"],
                                        "additionalProperties": False,
                                        "properties": {
                                            "interface": {"type": "string"},
                                            "direction": {"enum": ["in", "out"]},
                                        },
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
        "topology": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "links": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["a", "b"],
                        "additionalProperties": False,
                        "properties": {
                            "a": {"$ref": "#/definitions/endpoint"},
                            "b": {"$ref": "#/definitions/endpoint"},
                            "capacity": {"type": "number", "exclusiveMinimum": 0},
                            "prop_delay": {"type": "number", "minimum": 0},
                        },
                    },
                }
            },
        },
        "demands": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["flow_id", "src", "dst_ip", "rate"],
                "additionalProperties": False,
                "properties": {
                    "flow_id": {"type": "string"},
                    "src": {"type": "string"},
                    "dst_ip": {"type": "string"},
                    "rate": {"type": "number", "exclusiveMinimum": 0},
                    "class": {"type": "string"},
                },
            },
        },
        "sla": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "classes": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "required": ["max_delay", "max_loss"],
                        "additionalProperties": False,
                        "properties": {
                            "max_delay": {"type": "number", "minimum": 0},
                            "max_loss": {"type": "number", "minimum": 0, "maximum": 1},
                        },
                    },
                }
            },
        },
    },
    "definitions": {
        "endpoint": {
            "type": "object",
            "required": ["device", "interface"],
            "additionalProperties": False,
            "properties": {"device": {"type": "string"}, "interface": {"type": "string"}},
        }
    },
}

_VALIDATOR = jsonschema.Draft7Validator(NETWORK_SCHEMA)


def _loc(path: Iterable[Any]) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "$"


def parse_network_spec(text: str) -> NetworkSpec:
    """Parse and fully validate a network document; raises with every diagnostic."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc)) from None
    return spec_from_data(data)


def spec_from_data(data: Any) -> NetworkSpec:
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ValidationError([f"{_loc(e.absolute_path)}: {e.message}" for e in errors])
    spec = NetworkSpec.from_dict(data)
    problems = validate_spec(spec)
    if problems:
        raise ValidationError(problems)
    return spec


def serialize_network_spec(spec: NetworkSpec) -> str:
    return json.dumps(spec.to_dict(), indent=2)


def canonical_device_text(device: DeviceConfig) -> str:
    """Order-independent serialization used for RAW_CONFIG."""
    data = device.to_dict()
    data["interfaces"].sort(key=lambda i: i["name"])
    data["static_routes"].sort(key=lambda r: json.dumps(r, sort_keys=True))
    for proc in data["igp_processes"]:
        proc["interfaces"].sort(key=lambda i: i["name"])
        proc["redistribute"].sort(key=lambda r: json.dumps(r, sort_keys=True))
        proc["summaries"].sort(key=lambda s: s["prefix"])
    data["igp_processes"].sort(key=lambda p: p["process_id"])
    for acl in data["acls"]:
        acl["rules"].sort(key=lambda r: r["seq"])
        acl["applied"].sort(key=lambda a: (a["interface"], a["direction"]))
    data["acls"].sort(key=lambda a: a["name"])
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def _net(text: str, strict: bool = True) -> ipaddress.IPv4Network | ipaddress.IPv6Network:
    return ipaddress.ip_network(text, strict=strict)


def _check_prefix(text: str, where: str, problems: list[str], allow_any: bool = False) -> int | None:
    if allow_any and text == "any":
        return None
    try:
        return _net(text).version
    except ValueError as exc:
        problems.append(f"{where}: invalid prefix {text!r} ({exc})")
        return None


def validate_spec(spec: NetworkSpec) -> list[str]:
    problems: list[str] = []
    if not spec.devices:
        problems.append("devices: at least one device required")
    hostnames: set[str] = set()
    for di, dev in enumerate(spec.devices):
        at = f"devices[{di}]"
        if dev.hostname in hostnames:
            problems.append(f"{at}.hostname: duplicate hostname {dev.hostname!r}")
        hostnames.add(dev.hostname)
        names: set[str] = set()
        for ii, iface in enumerate(dev.interfaces):
            where = f"{at}.interfaces[{ii}]"
            if iface.name in names:
                problems.append(f"{where}.name: duplicate interface {iface.name!r} on device {dev.hostname!r}")
            names.add(iface.name)
            for attr, version in (("v4_addr", 4), ("v6_addr", 6)):
                text = getattr(iface, attr)
                if text is None:
                    continue
                try:
                    addr = ipaddress.ip_interface(text)
                except ValueError:
                    problems.append(f"{where}.{attr}: invalid address {text!r}")
                    continue
                if addr.version != version:
                    problems.append(f"{where}.{attr}: expected IPv{version} address, got {text!r}")
        for ri, route in enumerate(dev.static_routes):
            where = f"{at}.static_routes[{ri}]"
            _check_prefix(route.prefix, f"{where}.prefix", problems)
            if (route.next_hop is None) == (route.out_interface is None):
                problems.append(f"{where}: exactly one of next_hop or out_interface required")
            if route.next_hop is not None:
                try:
                    ipaddress.ip_address(route.next_hop)
                except ValueError:
                    problems.append(f"{where}.next_hop: invalid address {route.next_hop!r}")
            if route.out_interface is not None and route.out_interface not in names:
                problems.append(f"{where}.out_interface: unknown interface {route.out_interface!r}")
        pids: set[str] = set()
        for pi, proc in enumerate(dev.igp_processes):
            where = f"{at}.igp_processes[{pi}]"
            if proc.process_id in pids:
                problems.append(f"{where}.process_id: duplicate process {proc.process_id!r}")
            pids.add(proc.process_id)
            seen_if: set[str] = set()
            for ii, pif in enumerate(proc.interfaces):
                if pif.name not in names:
                    problems.append(f"{where}.interfaces[{ii}]: unknown interface {pif.name!r} on {dev.hostname!r}")
                if pif.name in seen_if:
                    problems.append(f"{where}.interfaces[{ii}]: interface {pif.name!r} listed twice")
                seen_if.add(pif.name)
            for si, summary in enumerate(proc.summaries):
                version = _check_prefix(summary.prefix, f"{where}.summaries[{si}].prefix", problems)
                if version is None:
                    continue
                net = _net(summary.prefix)
                if net.prefixlen >= net.max_prefixlen:
                    problems.append(f"{where}.summaries[{si}].prefix: summary must be shorter than /{net.max_prefixlen}")
                if (version == 4) != (proc.family == "v4"):
                    problems.append(f"{where}.summaries[{si}].prefix: family does not match process family {proc.family}")
        for pi, proc in enumerate(dev.igp_processes):
            sources: set[str] = set()
            for ri, redist in enumerate(proc.redistribute):
                where = f"{at}.igp_processes[{pi}].redistribute[{ri}]"
                if redist.from_process in sources:
                    problems.append(f"{where}.from_process: {redist.from_process!r} redistributed twice")
                sources.add(redist.from_process)
                if redist.from_process not in pids:
                    problems.append(f"{where}.from_process: no process {redist.from_process!r} on {dev.hostname!r}")
                elif redist.from_process == proc.process_id:
                    problems.append(f"{where}.from_process: process cannot redistribute into itself")
        acl_names: set[str] = set()
        for ai, acl in enumerate(dev.acls):
            where = f"{at}.acls[{ai}]"
            if acl.name in acl_names:
                problems.append(f"{where}.name: duplicate ACL {acl.name!r}")
            acl_names.add(acl.name)
            seqs: set[int] = set()
            for ri, rule in enumerate(acl.rules):
                rw = f"{where}.rules[{ri}]"
                if rule.seq in seqs:
                    problems.append(f"{rw}.seq: duplicate seq {rule.seq} in ACL {acl.name!r}")
                seqs.add(rule.seq)
                _check_prefix(rule.src_prefix, f"{rw}.src_prefix", problems, allow_any=True)
                _check_prefix(rule.dst_prefix, f"{rw}.dst_prefix", problems, allow_any=True)
                for attr in ("src_ports", "dst_ports"):
                    lo, hi = getattr(rule, attr)
                    if not (0 <= lo <= hi <= 65535):
                        problems.append(f"{rw}.{attr}: invalid port range [{lo}, {hi}]")
            for bi, binding in enumerate(acl.applied):
                if binding.interface not in names:
                    problems.append(f"{where}.applied[{bi}]: unknown interface {binding.interface!r}")

    used: dict[Endpoint, int] = {}
    for li, link in enumerate(spec.topology.links):
        where = f"topology.links[{li}]"
        for side, end in (("a", link.a), ("b", link.b)):
            dev = spec.device(end.device)
            if dev is None:
                problems.append(f"{where}.{side}: dangling link endpoint, no device {end.device!r}")
            elif dev.interface(end.interface) is None:
                problems.append(f"{where}.{side}: dangling link endpoint, no interface {end}")
            if end in used:
                problems.append(f"{where}.{side}: {end} already used by topology.links[{used[end]}]")
            used[end] = li
        if link.a.device == link.b.device:
            problems.append(f"{where}: link joins {link.a.device!r} to itself")

    flow_ids: set[str] = set()
    for fi, demand in enumerate(spec.demands):
        where = f"demands[{fi}]"
        if demand.flow_id in flow_ids:
            problems.append(f"{where}.flow_id: duplicate flow {demand.flow_id!r}")
        flow_ids.add(demand.flow_id)
        if demand.src not in hostnames:
            problems.append(f"{where}.src: unknown device {demand.src!r}")
        try:
            ipaddress.ip_address(demand.dst_ip)
        except ValueError:
            problems.append(f"{where}.dst_ip: invalid address {demand.dst_ip!r}")
        if demand.sla_class not in spec.sla.classes:
            problems.append(f"{where}.class: unknown SLA class {demand.sla_class!r}")
    return problems


# --- KG builder ------------------------------------------------------------------


def _own(device: str, target: str) -> KgEdge:
    return KgEdge(node_id(LayerId.DEVICE, device, "device", device), target, EdgeKind.OWN)


def _owned(layer: LayerId, device: str, kind: str, name: str, attrs: dict[str, Any]) -> tuple[KgNode, KgEdge]:
    nid = node_id(layer, device, kind, name)
    return KgNode(nid, layer, device, kind, {"name": name, **attrs}), _own(device, nid)


def _ports(rng: tuple[int, int]) -> tuple[int, int]:
    return int(rng[0]), int(rng[1])


def layer_contents(spec: NetworkSpec) -> dict[LayerId, tuple[list[KgNode], list[KgEdge]]]:
    out: dict[LayerId, tuple[list[KgNode], list[KgEdge]]] = {layer: ([], []) for layer in BASE_LAYERS}

    def add(layer: LayerId, pair: tuple[KgNode, KgEdge]) -> None:
        out[layer][0].append(pair[0])
        out[layer][1].append(pair[1])

    linked = {str(end) for link in spec.topology.links for end in (link.a, link.b)}
    for dev in spec.devices:
        host = dev.hostname
        out[LayerId.DEVICE][0].append(
            KgNode(
                node_id(LayerId.DEVICE, host, "device", host),
                LayerId.DEVICE,
                host,
                "device",
                {
                    "hostname": host,
                    "interface_count": len(dev.interfaces),
                    "acl_count": len(dev.acls),
                    "igp_process_count": len(dev.igp_processes),
                },
            )
        )
        for iface in dev.interfaces:
            add(
                LayerId.INTERFACES,
                _owned(
                    LayerId.INTERFACES,
                    host,
                    "interface",
                    iface.name,
                    {"mtu": iface.mtu, "enabled": iface.enabled, "linked": f"{host}:{iface.name}" in linked},
                ),
            )
            for family in ("v4", "v6"):
                addr = iface.address(family)
                if addr is None:
                    continue
                add(
                    LayerId.IP_SETTINGS,
                    _owned(
                        LayerId.IP_SETTINGS,
                        host,
                        "ip-address",
                        f"{iface.name}/{family}",
                        {
                            "interface": iface.name,
                            "family": family,
                            "address": str(addr.ip),
                            "prefix_len": addr.network.prefixlen,
                            "network": str(addr.network),
                        },
                    ),
                )
        for acl in dev.acls:
            for rule in acl.rules:
                slo, shi = _ports(rule.src_ports)
                dlo, dhi = _ports(rule.dst_ports)
                add(
                    LayerId.ACL,
                    _owned(
                        LayerId.ACL,
                        host,
                        "acl-rule",
                        f"{acl.name}/{rule.seq}",
                        {
                            "acl": acl.name,
                            "seq": rule.seq,
                            "action": rule.action,
                            "protocol": rule.protocol,
                            "src_prefix": rule.src_prefix,
                            "dst_prefix": rule.dst_prefix,
                            "src_port_lo": slo,
                            "src_port_hi": shi,
                            "dst_port_lo": dlo,
                            "dst_port_hi": dhi,
                        },
                    ),
                )
            for binding in acl.applied:
                add(
                    LayerId.ACL,
                    _owned(
                        LayerId.ACL,
                        host,
                        "acl-binding",
                        f"{acl.name}@{binding.interface}:{binding.direction}",
                        {"acl": acl.name, "interface": binding.interface, "direction": binding.direction},
                    ),
                )
        add(
            LayerId.RAW_CONFIG,
            _owned(LayerId.RAW_CONFIG, host, "config", "running", {"format": "ndtwin-json", "text": canonical_device_text(dev)}),
        )

    for link in spec.topology.links:
        a = node_id(LayerId.INTERFACES, link.a.device, "interface", link.a.interface)
        b = node_id(LayerId.INTERFACES, link.b.device, "interface", link.b.interface)
        out[LayerId.INTERFACES][1].append(KgEdge(a, b, EdgeKind.CONNECT, {}))
        add(
            LayerId.METRICS,
            _owned(
                LayerId.METRICS,
                link.a.device,
                "link",
                link.name,
                {
                    "interface": link.a.interface,
                    "peer_device": link.b.device,
                    "peer_interface": link.b.interface,
                    "capacity": float(link.capacity),
                    "prop_delay": float(link.prop_delay),
                },
            ),
        )
    for demand in spec.demands:
        cls = spec.sla.classes[demand.sla_class]
        add(
            LayerId.METRICS,
            _owned(
                LayerId.METRICS,
                demand.src,
                "flow-demand",
                demand.flow_id,
                {
                    "src": demand.src,
                    "dst_ip": demand.dst_ip,
                    "rate": float(demand.rate),
                    "sla_class": demand.sla_class,
                    "max_delay": float(cls.max_delay),
                    "max_loss": float(cls.max_loss),
                },
            ),
        )
    return out


def build_base_layers(
    spec: NetworkSpec,
    handle: OpenSnapshot | None = None,
    repo: Repository | None = None,
    branch: str = "main",
) -> OpenSnapshot:
    """Populate every layer except ROUTING, which is built on demand.

    With an existing handle (a fork), all layers are rebuilt so cells of removed
    devices or emptied layers do not linger.
    """
    if handle is None:
        handle = (repo or Repository()).new_snapshot(branch)
    handle.drop(list(handle.cells))
    for layer, (nodes, edges) in layer_contents(spec).items():
        handle.upsert_layer(layer, nodes, edges)
    return handle


def spec_from_snapshot(repo: Repository, ref: str | OpenSnapshot) -> NetworkSpec:
    """Rebuild the NetworkSpec from the RAW_CONFIG and METRICS layers."""
    if isinstance(ref, OpenSnapshot):
        raw = list(ref.layer_nodes(LayerId.RAW_CONFIG).values())
        metrics = list(ref.layer_nodes(LayerId.METRICS).values())
    else:
        raw = repo.nodes(ref, LayerId.RAW_CONFIG)
        metrics = repo.nodes(ref, LayerId.METRICS)
    return spec_from_nodes(raw, metrics)


def spec_from_nodes(raw_config: Iterable[KgNode], metrics: Iterable[KgNode]) -> NetworkSpec:
    devices = [DeviceConfig.from_dict(json.loads(n.attrs["text"])) for n in sorted(raw_config, key=lambda n: n.device)]
    links: list[Link] = []
    demands: list[TrafficDemand] = []
    classes: dict[str, SlaClass] = {}
    for n in metrics:
        a = n.attrs
        if n.kind == "link":
            links.append(
                Link(
                    Endpoint(n.device, a["interface"]),
                    Endpoint(a["peer_device"], a["peer_interface"]),
                    a["capacity"],
                    a["prop_delay"],
                )
            )
        elif n.kind == "flow-demand":
            demands.append(TrafficDemand(a["name"], a["src"], a["dst_ip"], a["rate"], a["sla_class"]))
            classes[a["sla_class"]] = SlaClass(a["max_delay"], a["max_loss"])
    links.sort(key=lambda l: l.name)
    demands.sort(key=lambda d: d.flow_id)
    return NetworkSpec(devices, Topology(links), demands, SlaPolicy(classes))
