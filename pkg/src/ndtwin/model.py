"""Vendor-neutral network specification: devices, topology, demands, SLA policy."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Any, Mapping

PORT_ANY = (0, 65535)


@dataclass
class Interface:
    name: str
    mtu: int = 1500
    enabled: bool = True
    v4_addr: str | None = None
    v6_addr: str | None = None

    def addresses(self) -> list[ipaddress.IPv4Interface | ipaddress.IPv6Interface]:
        return [ipaddress.ip_interface(a) for a in (self.v4_addr, self.v6_addr) if a]

    def address(self, family: str) -> ipaddress.IPv4Interface | ipaddress.IPv6Interface | None:
        text = self.v4_addr if family == "v4" else self.v6_addr
        return ipaddress.ip_interface(text) if text else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "mtu": self.mtu,
            "enabled": self.enabled,
            "v4_addr": self.v4_addr,
            "v6_addr": self.v6_addr,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Interface:
        return cls(d["name"], d.get("mtu", 1500), d.get("enabled", True), d.get("v4_addr"), d.get("v6_addr"))


@dataclass
class StaticRoute:
    prefix: str
    next_hop: str | None = None
    out_interface: str | None = None
    metric: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {"prefix": self.prefix, "next_hop": self.next_hop, "out_interface": self.out_interface, "metric": self.metric}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> StaticRoute:
        return cls(d["prefix"], d.get("next_hop"), d.get("out_interface"), d.get("metric", 1))


@dataclass
class IgpInterface:
    name: str
    metric: int = 10

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "metric": self.metric}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> IgpInterface:
        return cls(d["name"], d.get("metric", 10))


@dataclass
class Redistribution:
    from_process: str
    metric: int = 1
    metric_type: str = "external"

    def to_dict(self) -> dict[str, Any]:
        return {"from_process": self.from_process, "metric": self.metric, "metric_type": self.metric_type}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Redistribution:
        return cls(d["from_process"], d.get("metric", 1), d.get("metric_type", "external"))


@dataclass
class Summary:
    prefix: str

    def to_dict(self) -> dict[str, Any]:
        return {"prefix": self.prefix}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Summary:
        return cls(d["prefix"])


@dataclass
class IgpProcess:
    process_id: str
    family: str = "v4"
    interfaces: list[IgpInterface] = field(default_factory=list)
    redistribute: list[Redistribution] = field(default_factory=list)
    summaries: list[Summary] = field(default_factory=list)

    def interface(self, name: str) -> IgpInterface | None:
        return next((i for i in self.interfaces if i.name == name), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "process_id": self.process_id,
            "family": self.family,
            "interfaces": [i.to_dict() for i in self.interfaces],
            "redistribute": [r.to_dict() for r in self.redistribute],
            "summaries": [s.to_dict() for s in self.summaries],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> IgpProcess:
        return cls(
            str(d["process_id"]),
            d.get("family", "v4"),
            [IgpInterface.from_dict(i) for i in d.get("interfaces", [])],
            [Redistribution.from_dict(r) for r in d.get("redistribute", [])],
            [Summary.from_dict(s) for s in d.get("summaries", [])],
        )


@dataclass
class AclRule:
    seq: int
    action: str
    protocol: str = "any"
    src_prefix: str = "any"
    dst_prefix: str = "any"
    src_ports: tuple[int, int] = PORT_ANY
    dst_ports: tuple[int, int] = PORT_ANY

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "action": self.action,
            "protocol": self.protocol,
            "src_prefix": self.src_prefix,
            "dst_prefix": self.dst_prefix,
            "src_ports": list(self.src_ports),
            "dst_ports": list(self.dst_ports),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> AclRule:
        return cls(
            d["seq"],
            d["action"],
            d.get("protocol", "any"),
            d.get("src_prefix", "any"),
            d.get("dst_prefix", "any"),
            tuple(d.get("src_ports", PORT_ANY)),
            tuple(d.get("dst_ports", PORT_ANY)),
        )


@dataclass
class AclBinding:
    interface: str
    direction: str

    def to_dict(self) -> dict[str, Any]:
        return {"interface": self.interface, "direction": self.direction}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> AclBinding:
        return cls(d["interface"], d["direction"])


@dataclass
class Acl:
    name: str
    rules: list[AclRule] = field(default_factory=list)
    applied: list[AclBinding] = field(default_factory=list)

    def ordered_rules(self) -> list[AclRule]:
        return sorted(self.rules, key=lambda r: r.seq)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "rules": [r.to_dict() for r in self.rules],
            "applied": [a.to_dict() for a in self.applied],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Acl:
        return cls(
            d["name"],
            [AclRule.from_dict(r) for r in d.get("rules", [])],
            [AclBinding.from_dict(a) for a in d.get("applied", [])],
        )


@dataclass
class DeviceConfig:
    hostname: str
    interfaces: list[Interface] = field(default_factory=list)
    static_routes: list[StaticRoute] = field(default_factory=list)
    igp_processes: list[IgpProcess] = field(default_factory=list)
    acls: list[Acl] = field(default_factory=list)

    def interface(self, name: str) -> Interface | None:
        return next((i for i in self.interfaces if i.name == name), None)

    def process(self, process_id: str) -> IgpProcess | None:
        return next((p for p in self.igp_processes if p.process_id == process_id), None)

    def acl(self, name: str) -> Acl | None:
        return next((a for a in self.acls if a.name == name), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "hostname": self.hostname,
            "interfaces": [i.to_dict() for i in self.interfaces],
            "static_routes": [r.to_dict() for r in self.static_routes],
            "igp_processes": [p.to_dict() for p in self.igp_processes],
            "acls": [a.to_dict() for a in self.acls],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> DeviceConfig:
        return cls(
            d["hostname"],
            [Interface.from_dict(i) for i in d.get("interfaces", [])],
            [StaticRoute.from_dict(r) for r in d.get("static_routes", [])],
            [IgpProcess.from_dict(p) for p in d.get("igp_processes", [])],
            [Acl.from_dict(a) for a in d.get("acls", [])],
        )


@dataclass(frozen=True)
class Endpoint:
    device: str
    interface: str

    def __str__(self) -> str:
        return f"{self.device}:{self.interface}"


@dataclass
class Link:
    a: Endpoint
    b: Endpoint
    capacity: float = 1e9
    prop_delay: float = 1.0

    @property
    def name(self) -> str:
        return f"{self.a}--{self.b}"

    def other(self, end: Endpoint) -> Endpoint:
        return self.b if end == self.a else self.a

    def to_dict(self) -> dict[str, Any]:
        return {
            "a": {"device": self.a.device, "interface": self.a.interface},
            "b": {"device": self.b.device, "interface": self.b.interface},
            "capacity": self.capacity,
            "prop_delay": self.prop_delay,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Link:
        return cls(
            Endpoint(d["a"]["device"], d["a"]["interface"]),
            Endpoint(d["b"]["device"], d["b"]["interface"]),
            d.get("capacity", 1e9),
            d.get("prop_delay", 1.0),
        )


@dataclass
class Topology:
    links: list[Link] = field(default_factory=list)

    def link_at(self, device: str, interface: str) -> Link | None:
        end = Endpoint(device, interface)
        return next((l for l in self.links if l.a == end or l.b == end), None)

    def peer(self, device: str, interface: str) -> Endpoint | None:
        link = self.link_at(device, interface)
        return link.other(Endpoint(device, interface)) if link else None

    def to_dict(self) -> dict[str, Any]:
        return {"links": [l.to_dict() for l in self.links]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Topology:
        return cls([Link.from_dict(l) for l in d.get("links", [])])


@dataclass
class TrafficDemand:
    flow_id: str
    src: str
    dst_ip: str
    rate: float
    sla_class: str = "default"

    def to_dict(self) -> dict[str, Any]:
        return {"flow_id": self.flow_id, "src": self.src, "dst_ip": self.dst_ip, "rate": self.rate, "class": self.sla_class}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TrafficDemand:
        return cls(d["flow_id"], d["src"], d["dst_ip"], d["rate"], d.get("class", "default"))


@dataclass
class SlaClass:
    max_delay: float
    max_loss: float

    def to_dict(self) -> dict[str, Any]:
        return {"max_delay": self.max_delay, "max_loss": self.max_loss}


@dataclass
class SlaPolicy:
    classes: dict[str, SlaClass] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"classes": {name: c.to_dict() for name, c in sorted(self.classes.items())}}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SlaPolicy:
        return cls({name: SlaClass(c["max_delay"], c["max_loss"]) for name, c in d.get("classes", {}).items()})


@dataclass
class NetworkSpec:
    devices: list[DeviceConfig]
    topology: Topology = field(default_factory=Topology)
    demands: list[TrafficDemand] = field(default_factory=list)
    sla: SlaPolicy = field(default_factory=SlaPolicy)

    def device(self, hostname: str) -> DeviceConfig | None:
        return next((d for d in self.devices if d.hostname == hostname), None)

    def hostnames(self) -> list[str]:
        return [d.hostname for d in self.devices]

    def to_dict(self) -> dict[str, Any]:
        return {
            "devices": [d.to_dict() for d in self.devices],
            "topology": self.topology.to_dict(),
            "demands": [d.to_dict() for d in self.demands],
            "sla": self.sla.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> NetworkSpec:
        return cls(
            [DeviceConfig.from_dict(x) for x in d.get("devices", [])],
            Topology.from_dict(d.get("topology", {})),
            [TrafficDemand.from_dict(x) for x in d.get("demands", [])],
            SlaPolicy.from_dict(d.get("sla", {})),
        )
