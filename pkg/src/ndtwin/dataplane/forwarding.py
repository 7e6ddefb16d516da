"""Packet forwarding over computed FIBs: traces, reachability, loops, differential probes."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping

import networkx as nx

from ..errors import UnknownAcl, UnknownDevice, UnknownIngressDevice
from ..model import Acl, NetworkSpec
from .acl import AclDecision, PacketFields, acl_eval
from .routing import Fib, NextHop, Protocol, RoutingResult, compute_fib

HOP_BUDGET = 64
DEFAULT_PROTOCOL = "tcp"
DEFAULT_SRC_PORT = 49152
DEFAULT_DST_PORT = 80


class Disposition(str, Enum):
    DELIVERED = "DELIVERED"
    NO_ROUTE = "NO_ROUTE"
    ACL_DENIED = "ACL_DENIED"
    LOOP = "LOOP"
    DISCARDED = "DISCARDED"


# strict aggregation of a multi-branch result: the most severe branch wins
SEVERITY = {
    Disposition.DELIVERED: 0,
    Disposition.NO_ROUTE: 1,
    Disposition.ACL_DENIED: 2,
    Disposition.DISCARDED: 3,
    Disposition.LOOP: 4,
}


@dataclass(frozen=True)
class PacketSpec:
    ingress: str
    dst_ip: str
    src_ip: str | None = None
    protocol: str = DEFAULT_PROTOCOL
    src_port: int = DEFAULT_SRC_PORT
    dst_port: int = DEFAULT_DST_PORT

    def to_dict(self) -> dict[str, Any]:
        return {
            "ingress": self.ingress,
            "dst_ip": self.dst_ip,
            "src_ip": self.src_ip,
            "protocol": self.protocol,
            "src_port": self.src_port,
            "dst_port": self.dst_port,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> PacketSpec:
        return cls(
            d["ingress"],
            d["dst_ip"],
            d.get("src_ip"),
            d.get("protocol", DEFAULT_PROTOCOL),
            d.get("src_port", DEFAULT_SRC_PORT),
            d.get("dst_port", DEFAULT_DST_PORT),
        )


@dataclass(frozen=True)
class AclCheck:
    acl: str
    interface: str
    direction: str
    action: str
    seq: int | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "acl": self.acl,
            "interface": self.interface,
            "direction": self.direction,
            **AclDecision(self.action, self.seq).to_dict(),
        }


@dataclass(frozen=True)
class Hop:
    device: str
    prefix: str | None = None
    out_interface: str | None = None
    acl: tuple[AclCheck, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "device": self.device,
            "prefix": self.prefix,
            "out_interface": self.out_interface,
            "acl": [a.to_dict() for a in self.acl],
        }


@dataclass(frozen=True)
class ForwardingTrace:
    hops: tuple[Hop, ...]
    disposition: Disposition
    share: Fraction = Fraction(1)

    def devices(self) -> list[str]:
        return [h.device for h in self.hops]

    def to_dict(self) -> dict[str, Any]:
        return {
            "hops": [h.to_dict() for h in self.hops],
            "disposition": self.disposition.value,
            "share": float(self.share),
        }

    def sort_key(self) -> tuple:
        return tuple((h.device, h.out_interface or "") for h in self.hops), self.disposition.value


def aggregate(traces: Iterable[ForwardingTrace]) -> Disposition:
    """Strict disposition: DELIVERED only if every branch delivered."""
    worst = Disposition.DELIVERED
    for t in traces:
        if SEVERITY[t.disposition] > SEVERITY[worst]:
            worst = t.disposition
    return worst


class Dataplane:
    """Computed forwarding state of one network plus the config needed to walk it."""

    def __init__(self, spec: NetworkSpec, routing: RoutingResult | None = None):
        self.spec = spec
        self.routing = routing or compute_fib(spec)
        self.fib: Fib = self.routing.fib
        self.devices = {d.hostname: d for d in spec.devices}
        self._links = {}
        for link in spec.topology.links:
            self._links[(link.a.device, link.a.interface)] = link
            self._links[(link.b.device, link.b.interface)] = link
        self._owned: dict[str, set[ipaddress._BaseAddress]] = {}
        self._stubs: dict[str, list[ipaddress._BaseNetwork]] = {}
        self._bindings: dict[tuple[str, str, str], list[Acl]] = {}
        for dev in spec.devices:
            owned, stubs = set(), []
            for iface in dev.interfaces:
                if not iface.enabled:
                    continue
                for addr in iface.addresses():
                    owned.add(addr.ip)
                    if (dev.hostname, iface.name) not in self._links:
                        stubs.append(addr.network)
            self._owned[dev.hostname] = owned
            self._stubs[dev.hostname] = stubs
            for acl in dev.acls:
                for b in acl.applied:
                    self._bindings.setdefault((dev.hostname, b.interface, b.direction), []).append(acl)

    @property
    def converged(self) -> bool:
        return self.routing.converged

    def owns(self, device: str, addr: ipaddress._BaseAddress) -> bool:
        if addr in self._owned.get(device, ()):
            return True
        return any(net.version == addr.version and addr in net for net in self._stubs.get(device, ()))

    def owner_addresses(self) -> dict[str, list[str]]:
        return {d: sorted((str(a) for a in owned), key=lambda s: (ipaddress.ip_address(s).version, int(ipaddress.ip_address(s)))) for d, owned in self._owned.items()}

    def peer(self, device: str, interface: str) -> tuple[str, str] | None:
        link = self._links.get((device, interface))
        if link is None:
            return None
        end = link.b if (link.a.device, link.a.interface) == (device, interface) else link.a
        return end.device, end.interface

    def peer_owns(self, device: str, interface: str, addr: ipaddress._BaseAddress) -> bool:
        peer = self.peer(device, interface)
        if peer is None:
            return False
        iface = self.devices[peer[0]].interface(peer[1])
        return bool(iface and iface.enabled and any(a.ip == addr for a in iface.addresses()))

    def acl(self, device: str, name: str) -> Acl:
        dev = self.devices.get(device)
        if dev is None:
            raise UnknownDevice(f"unknown device {device!r}")
        acl = dev.acl(name)
        if acl is None:
            raise UnknownAcl(f"no ACL {name!r} on {device}")
        return acl

    def check_acls(self, device: str, interface: str, direction: str, pkt: PacketFields) -> tuple[list[AclCheck], bool]:
        checks = []
        for acl in self._bindings.get((device, interface, direction), []):
            decision = acl_eval(acl, pkt)
            checks.append(AclCheck(acl.name, interface, direction, decision.action, decision.seq))
            if decision.action != "permit":
                return checks, False
        return checks, True

    def default_source(self, device: str, version: int) -> str:
        dev = self.devices[device]
        for iface in sorted(dev.interfaces, key=lambda i: i.name):
            for addr in iface.addresses():
                if iface.enabled and addr.version == version:
                    return str(addr.ip)
        return "0.0.0.0" if version == 4 else "::"

    def packet_fields(self, packet: PacketSpec) -> PacketFields:
        dst = ipaddress.ip_address(packet.dst_ip)
        src = packet.src_ip or self.default_source(packet.ingress, dst.version)
        return PacketFields(src, str(dst), packet.protocol, packet.src_port, packet.dst_port)


def forward(dp: Dataplane, packet: PacketSpec) -> list[ForwardingTrace]:
    """Explore every ECMP branch; one trace per branch, sorted canonically."""
    if packet.ingress not in dp.devices:
        raise UnknownIngressDevice(f"unknown ingress device {packet.ingress!r}")
    pkt = dp.packet_fields(packet)
    dst = ipaddress.ip_address(pkt.dst_ip)
    traces: list[ForwardingTrace] = []

    def walk(device: str, in_iface: str | None, hops: tuple[Hop, ...], visited: frozenset[str], share: Fraction) -> None:
        def finish(hop: Hop, disposition: Disposition) -> None:
            traces.append(ForwardingTrace(hops + (hop,), disposition, share))

        checks: list[AclCheck] = []
        if in_iface is not None:
            checks, ok = dp.check_acls(device, in_iface, "in", pkt)
            if not ok:
                return finish(Hop(device, acl=tuple(checks)), Disposition.ACL_DENIED)
        if dp.owns(device, dst):
            return finish(Hop(device, acl=tuple(checks)), Disposition.DELIVERED)
        if len(hops) + 1 >= HOP_BUDGET:
            return finish(Hop(device, acl=tuple(checks)), Disposition.LOOP)
        entry = dp.fib.lookup(device, dst)
        if entry is None:
            return finish(Hop(device, acl=tuple(checks)), Disposition.NO_ROUTE)
        if entry.protocol == Protocol.SUMMARY_DISCARD:
            return finish(Hop(device, entry.prefix, acl=tuple(checks)), Disposition.DISCARDED)
        branch_share = share / len(entry.next_hops)
        for nh in entry.next_hops:
            out_checks, ok = dp.check_acls(device, nh.interface, "out", pkt)
            hop = Hop(device, entry.prefix, nh.interface, tuple(checks + out_checks))
            if not ok:
                traces.append(ForwardingTrace(hops + (hop,), Disposition.ACL_DENIED, branch_share))
                continue
            if nh.device is None or (entry.protocol == Protocol.CONNECTED and not dp.peer_owns(device, nh.interface, dst)):
                traces.append(ForwardingTrace(hops + (hop,), Disposition.NO_ROUTE, branch_share))
                continue
            if nh.device in visited:
                traces.append(ForwardingTrace(hops + (hop, Hop(nh.device)), Disposition.LOOP, branch_share))
                continue
            peer = dp.peer(device, nh.interface)
            walk(nh.device, peer[1] if peer else None, hops + (hop,), visited | {nh.device}, branch_share)

    walk(packet.ingress, None, (), frozenset({packet.ingress}), Fraction(1))
    traces.sort(key=lambda t: t.sort_key())
    return traces


@dataclass
class ReachabilityResult:
    reachable: bool
    disposition: Disposition
    traces: list[ForwardingTrace] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "reachable": self.reachable,
            "disposition": self.disposition.value,
            "traces": [t.to_dict() for t in self.traces],
        }


def reachability(dp: Dataplane, src: str, dst_ip: str, headers: Mapping[str, Any] | None = None) -> ReachabilityResult:
    headers = dict(headers or {})
    packet = PacketSpec(
        src,
        dst_ip,
        headers.get("src_ip"),
        headers.get("protocol", DEFAULT_PROTOCOL),
        headers.get("src_port", DEFAULT_SRC_PORT),
        headers.get("dst_port", DEFAULT_DST_PORT),
    )
    traces = forward(dp, packet)
    disposition = aggregate(traces)
    return ReachabilityResult(disposition == Disposition.DELIVERED, disposition, traces)


@dataclass(frozen=True)
class LoopFinding:
    prefix: str
    cycle: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"prefix": self.prefix, "cycle": list(self.cycle)}


def _canonical_cycle(cycle: list[str]) -> tuple[str, ...]:
    start = cycle.index(min(cycle))
    return tuple(cycle[start:] + cycle[:start])


def next_hop_graph(dp: Dataplane, addr: ipaddress._BaseAddress) -> nx.DiGraph:
    """Device-level forwarding graph for one destination address (ACLs ignored)."""
    graph = nx.DiGraph()
    graph.add_nodes_from(dp.devices)
    for device in dp.devices:
        if dp.owns(device, addr):
            continue
        entry = dp.fib.lookup(device, addr)
        if entry is None or entry.protocol == Protocol.SUMMARY_DISCARD:
            continue
        for nh in entry.next_hops:
            if nh.device is None:
                continue
            if entry.protocol == Protocol.CONNECTED and not dp.peer_owns(device, nh.interface, addr):
                continue
            graph.add_edge(device, nh.device)
    return graph


def detect_loops(dp: Dataplane, prefixes: Iterable[str] | None = None) -> list[LoopFinding]:
    """Forwarding cycles per FIB prefix, each reported once in canonical rotation."""
    findings: set[LoopFinding] = set()
    for prefix in prefixes if prefixes is not None else dp.fib.prefixes():
        addr = ipaddress.ip_network(prefix, strict=False).network_address
        for cycle in nx.simple_cycles(next_hop_graph(dp, addr)):
            findings.add(LoopFinding(prefix, _canonical_cycle(list(cycle))))
    return sorted(findings, key=lambda f: (_prefix_key(f.prefix), f.cycle))


def _prefix_key(prefix: str) -> tuple[int, int, int]:
    net = ipaddress.ip_network(prefix)
    return (net.version, int(net.network_address), net.prefixlen)


@dataclass(frozen=True)
class ProbeDifference:
    probe: PacketSpec
    disposition_a: Disposition
    disposition_b: Disposition

    def to_dict(self) -> dict[str, Any]:
        return {
            "probe": self.probe.to_dict(),
            "disposition_a": self.disposition_a.value,
            "disposition_b": self.disposition_b.value,
        }


def _disposition(dp: Dataplane, probe: PacketSpec) -> Disposition:
    if probe.ingress not in dp.devices:
        return Disposition.NO_ROUTE
    return aggregate(forward(dp, probe))


def default_probes(*dps: Dataplane) -> list[PacketSpec]:
    """Every (device, owned address) pair known to any of the dataplanes."""
    devices = sorted(set().union(*(dp.devices for dp in dps)))
    targets = sorted(
        {(d, a) for dp in dps for d, addrs in dp.owner_addresses().items() for a in addrs},
        key=lambda x: (x[0], ipaddress.ip_address(x[1]).version, int(ipaddress.ip_address(x[1]))),
    )
    return [PacketSpec(src, addr) for src in devices for owner, addr in targets if owner != src]


def differential_reachability(a: Dataplane, b: Dataplane, probes: list[PacketSpec] | None = None) -> list[ProbeDifference]:
    probes = probes if probes is not None else default_probes(a, b)
    out = []
    for probe in probes:
        da, db = _disposition(a, probe), _disposition(b, probe)
        if da != db:
            out.append(ProbeDifference(probe, da, db))
    return out


__all__ = [
    "AclCheck",
    "Dataplane",
    "Disposition",
    "ForwardingTrace",
    "Hop",
    "LoopFinding",
    "NextHop",
    "PacketSpec",
    "ProbeDifference",
    "ReachabilityResult",
    "aggregate",
    "default_probes",
    "detect_loops",
    "differential_reachability",
    "forward",
    "next_hop_graph",
    "reachability",
]
