"""Route computation: connected, static, link-state IGP, redistribution, summaries.

The IGP is modelled as one single-level link-state domain per process id. Each
device advertises a set of prefixes into each of its processes; every device
runs SPF over the process adjacency graph and installs the cheapest
advertisement. Advertisements depend on the resulting routing tables
(redistribution, summary activation), so the whole computation is iterated to a
fixed point with a hard cap.
"""

from __future__ import annotations

import heapq
import ipaddress
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

from ..errors import NonConvergence
from ..model import DeviceConfig, Endpoint, NetworkSpec

log = logging.getLogger(__name__)

Network = ipaddress.IPv4Network | ipaddress.IPv6Network
Address = ipaddress.IPv4Address | ipaddress.IPv6Address

MAX_ITERATIONS = 32
INTERNAL = "internal"
EXTERNAL = "external"


class Protocol(str, Enum):
    CONNECTED = "CONNECTED"
    STATIC = "STATIC"
    SUMMARY_DISCARD = "SUMMARY_DISCARD"
    IGP = "IGP"


ADMIN_DISTANCE = {
    Protocol.CONNECTED: 0,
    Protocol.STATIC: 1,
    Protocol.SUMMARY_DISCARD: 5,
    Protocol.IGP: 115,
}


@dataclass(frozen=True, order=True)
class NextHop:
    interface: str
    device: str | None  # None: directly attached, no neighbour behind the interface

    def render(self) -> str:
        return f"{self.interface}>{self.device}" if self.device else self.interface


def _hop_order(hop: NextHop) -> tuple[str, str]:
    return (hop.device or "", hop.interface)


@dataclass(frozen=True)
class RibEntry:
    prefix: str
    protocol: Protocol
    next_hops: tuple[NextHop, ...]
    metric: int
    metric_type: str = INTERNAL
    origin_process: str | None = None
    process: str | None = None

    @property
    def admin_distance(self) -> int:
        return ADMIN_DISTANCE[self.protocol]

    @property
    def network(self) -> Network:
        return ipaddress.ip_network(self.prefix)

    def rank(self) -> tuple:
        return (self.admin_distance, self.metric_type != INTERNAL, self.metric, self.process or "")

    def to_dict(self) -> dict[str, Any]:
        return {
            "prefix": self.prefix,
            "protocol": self.protocol.value,
            "next_hops": [{"interface": h.interface, "device": h.device} for h in self.next_hops],
            "metric": self.metric,
            "metric_type": self.metric_type,
            "origin_process": self.origin_process,
            "process": self.process,
            "admin_distance": self.admin_distance,
        }


class Fib:
    """Per-device longest-prefix-match tables."""

    def __init__(self, tables: dict[str, dict[str, RibEntry]]):
        self.tables = {d: dict(sorted(t.items())) for d, t in sorted(tables.items())}
        self._lpm: dict[str, list[tuple[Network, RibEntry]]] = {
            d: sorted(((e.network, e) for e in t.values()), key=lambda x: (-x[0].prefixlen, x[1].prefix))
            for d, t in self.tables.items()
        }

    def devices(self) -> list[str]:
        return list(self.tables)

    def entries(self, device: str) -> list[RibEntry]:
        return list(self.tables.get(device, {}).values())

    def entry(self, device: str, prefix: str) -> RibEntry | None:
        return self.tables.get(device, {}).get(prefix)

    def lookup(self, device: str, addr: Address | str) -> RibEntry | None:
        addr = ipaddress.ip_address(addr)
        for net, entry in self._lpm.get(device, ()):
            if net.version == addr.version and addr in net:
                return entry
        return None

    def prefixes(self) -> list[str]:
        return sorted({p for t in self.tables.values() for p in t}, key=_prefix_order)

    def to_dict(self) -> dict[str, Any]:
        return {d: [e.to_dict() for e in t.values()] for d, t in self.tables.items()}


def _prefix_order(prefix: str) -> tuple[int, int, int]:
    net = ipaddress.ip_network(prefix)
    return (net.version, int(net.network_address), net.prefixlen)


@dataclass(frozen=True)
class SummaryState:
    device: str
    process: str
    prefix: str
    active: bool
    contributors: int


@dataclass
class RoutingResult:
    fib: Fib
    converged: bool
    iterations: int
    summaries: list[SummaryState] = field(default_factory=list)


# --- topology helpers ----------------------------------------------------------------


class _Topo:
    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.devices = {d.hostname: d for d in spec.devices}
        self.peer: dict[Endpoint, Endpoint] = {}
        for link in spec.topology.links:
            if self._enabled(link.a) and self._enabled(link.b):
                self.peer[link.a] = link.b
                self.peer[link.b] = link.a
        self.linked = {end for link in spec.topology.links for end in (link.a, link.b)}

    def _enabled(self, end: Endpoint) -> bool:
        dev = self.devices.get(end.device)
        iface = dev.interface(end.interface) if dev else None
        return bool(iface and iface.enabled)

    def link_up(self, device: str, interface: str) -> Endpoint | None:
        return self.peer.get(Endpoint(device, interface))

    def is_linked(self, device: str, interface: str) -> bool:
        return Endpoint(device, interface) in self.linked

    def peer_address(self, device: str, interface: str, version: int) -> Address | None:
        peer = self.link_up(device, interface)
        if peer is None:
            return None
        iface = self.devices[peer.device].interface(peer.interface)
        for addr in iface.addresses():
            if addr.version == version:
                return addr.ip
        return None


def _connected(dev: DeviceConfig, topo: _Topo) -> dict[str, RibEntry]:
    hops: dict[str, set[NextHop]] = defaultdict(set)
    for iface in dev.interfaces:
        if not iface.enabled:
            continue
        if topo.is_linked(dev.hostname, iface.name):
            peer = topo.link_up(dev.hostname, iface.name)
            if peer is None:
                continue
            hop = NextHop(iface.name, peer.device)
        else:
            hop = NextHop(iface.name, None)
        for addr in iface.addresses():
            hops[str(addr.network)].add(hop)
    return {p: RibEntry(p, Protocol.CONNECTED, tuple(sorted(h, key=_hop_order)), 0) for p, h in hops.items()}


def _static(dev: DeviceConfig, topo: _Topo) -> dict[str, RibEntry]:
    best: dict[str, tuple[int, set[NextHop]]] = {}
    for route in dev.static_routes:
        hop = _resolve_static(dev, route.next_hop, route.out_interface, topo)
        if hop is None:
            log.debug("static %s on %s unresolved", route.prefix, dev.hostname)
            continue
        prefix = str(ipaddress.ip_network(route.prefix))
        current = best.get(prefix)
        if current is None or route.metric < current[0]:
            best[prefix] = (route.metric, {hop})
        elif route.metric == current[0]:
            current[1].add(hop)
    return {
        p: RibEntry(p, Protocol.STATIC, tuple(sorted(h, key=_hop_order)), m) for p, (m, h) in best.items()
    }


def _resolve_static(dev: DeviceConfig, next_hop: str | None, out_interface: str | None, topo: _Topo) -> NextHop | None:
    if out_interface is not None:
        iface = dev.interface(out_interface)
        peer = topo.link_up(dev.hostname, out_interface) if iface and iface.enabled else None
        return NextHop(out_interface, peer.device) if peer else None
    nh = ipaddress.ip_address(next_hop)
    for iface in sorted(dev.interfaces, key=lambda i: i.name):
        if not iface.enabled:
            continue
        for addr in iface.addresses():
            if addr.version == nh.version and nh in addr.network and nh != addr.ip:
                if topo.peer_address(dev.hostname, iface.name, nh.version) == nh:
                    return NextHop(iface.name, topo.link_up(dev.hostname, iface.name).device)
    return None


# --- IGP ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Advert:
    metric: int
    metric_type: str
    origin: str | None

    def rank(self) -> tuple[bool, int]:
        return (self.metric_type != INTERNAL, self.metric)


@dataclass(frozen=True)
class ProcRoute:
    """Best route for a prefix inside one process on one device."""

    metric: int
    metric_type: str
    origin: str | None
    next_hops: tuple[NextHop, ...]
    native: bool = False


Adverts = dict[str, dict[str, dict[str, Advert]]]  # process -> device -> prefix -> advert


def _family_version(family: str) -> int:
    return 4 if family == "v4" else 6


class _Igp:
    def __init__(self, spec: NetworkSpec, topo: _Topo, connected: dict[str, dict[str, RibEntry]]):
        self.topo = topo
        self.members: dict[str, list[str]] = defaultdict(list)
        self.family: dict[tuple[str, str], int] = {}
        for dev in spec.devices:
            for proc in dev.igp_processes:
                self.members[proc.process_id].append(dev.hostname)
                self.family[(proc.process_id, dev.hostname)] = _family_version(proc.family)
        # directed adjacencies: process -> device -> [(cost, neighbour, local interface)]
        self.adj: dict[str, dict[str, list[tuple[int, str, str]]]] = defaultdict(lambda: defaultdict(list))
        for link in spec.topology.links:
            if topo.link_up(link.a.device, link.a.interface) is None:
                continue
            dev_a, dev_b = topo.devices[link.a.device], topo.devices[link.b.device]
            for pa in dev_a.igp_processes:
                pb = dev_b.process(pa.process_id)
                if pb is None or pa.family != pb.family:
                    continue
                ia, ib = pa.interface(link.a.interface), pb.interface(link.b.interface)
                if ia is None or ib is None:
                    continue
                self.adj[pa.process_id][link.a.device].append((ia.metric, link.b.device, link.a.interface))
                self.adj[pa.process_id][link.b.device].append((ib.metric, link.a.device, link.b.interface))
        self.natives: Adverts = defaultdict(dict)
        for dev in spec.devices:
            for proc in dev.igp_processes:
                version = _family_version(proc.family)
                ads: dict[str, Advert] = {}
                for pif in proc.interfaces:
                    iface = dev.interface(pif.name)
                    if iface is None or not iface.enabled:
                        continue
                    for addr in iface.addresses():
                        prefix = str(addr.network)
                        if addr.version == version and prefix in connected[dev.hostname]:
                            current = ads.get(prefix)
                            if current is None or pif.metric < current.metric:
                                ads[prefix] = Advert(pif.metric, INTERNAL, None)
                self.natives[proc.process_id][dev.hostname] = ads
        self.spf_cache: dict[tuple[str, str], tuple[dict[str, int], dict[str, frozenset[NextHop]]]] = {}

    def spf(self, process: str, source: str) -> tuple[dict[str, int], dict[str, frozenset[NextHop]]]:
        """Distances and ECMP first hops from ``source`` to every process member."""
        key = (process, source)
        if key in self.spf_cache:
            return self.spf_cache[key]
        adj = self.adj[process]
        dist = {source: 0}
        first: dict[str, set[NextHop]] = {source: set()}
        heap = [(0, source)]
        done: set[str] = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for cost, v, iface in sorted(adj.get(u, ()), key=lambda x: (x[1], x[2])):
                nd = d + cost
                hops = {NextHop(iface, v)} if u == source else first[u]
                if v not in dist or nd < dist[v]:
                    dist[v] = nd
                    first[v] = set(hops)
                    heapq.heappush(heap, (nd, v))
                elif nd == dist[v] and v not in done:
                    first[v] |= hops
        result = (dist, {k: frozenset(v) for k, v in first.items()})
        self.spf_cache[key] = result
        return result

    def process_ribs(self, adverts: Adverts) -> dict[tuple[str, str], dict[str, ProcRoute]]:
        """(process, device) -> prefix -> best in-process route (native or learned)."""
        ribs: dict[tuple[str, str], dict[str, ProcRoute]] = {}
        for process, members in sorted(self.members.items()):
            for source in members:
                version = self.family[(process, source)]
                dist, first = self.spf(process, source)
                candidates: dict[str, list[tuple[tuple[bool, int], str, Advert]]] = defaultdict(list)
                for target, ads in adverts.get(process, {}).items():
                    if target == source or target not in dist:
                        continue
                    for prefix, ad in ads.items():
                        if ipaddress.ip_network(prefix).version != version:
                            continue
                        total = dist[target] + ad.metric
                        candidates[prefix].append(((ad.metric_type != INTERNAL, total), target, ad))
                rib: dict[str, ProcRoute] = {}
                for prefix, cands in candidates.items():
                    best = min(c[0] for c in cands)
                    winners = sorted((c for c in cands if c[0] == best), key=lambda c: c[1])
                    hops: set[NextHop] = set()
                    for _, target, _ in winners:
                        hops |= first[target]
                    ad = winners[0][2]
                    rib[prefix] = ProcRoute(best[1], ad.metric_type, ad.origin, tuple(sorted(hops, key=_hop_order)))
                for prefix, ad in self.natives[process].get(source, {}).items():
                    rib[prefix] = ProcRoute(ad.metric, INTERNAL, None, (), native=True)
                ribs[(process, source)] = rib
        return ribs


def _contained(inner: Network, outer: Network) -> bool:
    return inner.version == outer.version and inner.prefixlen > outer.prefixlen and inner.subnet_of(outer)


def _select(candidates: Iterable[RibEntry]) -> RibEntry | None:
    best = None
    for entry in candidates:
        if best is None or entry.rank() < best.rank():
            best = entry
    return best


def compute_fib(spec: NetworkSpec, max_iterations: int = MAX_ITERATIONS, strict: bool = False) -> RoutingResult:
    """Fixed-point route computation over a validated NetworkSpec.

    When the cap is reached the tables of the last iteration are returned with
    ``converged=False``; ``strict=True`` raises NonConvergence instead.
    """
    topo = _Topo(spec)
    connected = {d.hostname: _connected(d, topo) for d in spec.devices}
    static = {d.hostname: _static(d, topo) for d in spec.devices}
    igp = _Igp(spec, topo, connected)

    adverts: Adverts = {p: {d: dict(a) for d, a in per.items()} for p, per in igp.natives.items()}
    converged = False
    iterations = 0
    tables: dict[str, dict[str, RibEntry]] = {}
    summaries: list[SummaryState] = []
    while iterations < max_iterations:
        iterations += 1
        ribs = igp.process_ribs(adverts)
        tables, summaries, active = _install(spec, connected, static, ribs)
        nxt = _advertise(spec, igp, ribs, tables, active)
        if nxt == adverts:
            converged = True
            break
        adverts = nxt
    result = RoutingResult(Fib(tables), converged, iterations, summaries)
    if not converged:
        log.warning("route computation stopped after %d iterations without a fixed point", iterations)
        if strict:
            raise NonConvergence(f"no fixed point after {iterations} iterations", result=result)
    return result


def _install(
    spec: NetworkSpec,
    connected: dict[str, dict[str, RibEntry]],
    static: dict[str, dict[str, RibEntry]],
    ribs: dict[tuple[str, str], dict[str, ProcRoute]],
) -> tuple[dict[str, dict[str, RibEntry]], list[SummaryState], dict[tuple[str, str], list[tuple[Network, int]]]]:
    tables: dict[str, dict[str, RibEntry]] = {}
    states: list[SummaryState] = []
    active: dict[tuple[str, str], list[tuple[Network, int]]] = {}
    for dev in spec.devices:
        host = dev.hostname
        cands: dict[str, list[RibEntry]] = defaultdict(list)
        for entry in list(connected[host].values()) + list(static[host].values()):
            cands[entry.prefix].append(entry)
        for proc in dev.igp_processes:
            for prefix, route in ribs.get((proc.process_id, host), {}).items():
                if route.native or not route.next_hops:
                    continue
                cands[prefix].append(
                    RibEntry(prefix, Protocol.IGP, route.next_hops, route.metric, route.metric_type, route.origin, proc.process_id)
                )
        base = {p: _select(c) for p, c in cands.items()}
        for proc in sorted(dev.igp_processes, key=lambda p: p.process_id):
            for summary in proc.summaries:
                net = ipaddress.ip_network(summary.prefix)
                contributors = [e for e in base.values() if _contained(e.network, net)]
                is_active = bool(contributors)
                states.append(SummaryState(host, proc.process_id, str(net), is_active, len(contributors)))
                if is_active:
                    metric = min(e.metric for e in contributors)
                    active.setdefault((proc.process_id, host), []).append((net, metric))
                    cands[str(net)].append(
                        RibEntry(str(net), Protocol.SUMMARY_DISCARD, (), metric, INTERNAL, None, proc.process_id)
                    )
        tables[host] = {p: _select(c) for p, c in cands.items()}
    return tables, states, active


def _advertise(
    spec: NetworkSpec,
    igp: _Igp,
    ribs: dict[tuple[str, str], dict[str, ProcRoute]],
    tables: dict[str, dict[str, RibEntry]],
    active: dict[tuple[str, str], list[tuple[Network, int]]],
) -> Adverts:
    out: Adverts = defaultdict(dict)
    for dev in spec.devices:
        host = dev.hostname
        for proc in dev.igp_processes:
            pid = proc.process_id
            version = _family_version(proc.family)
            ads: dict[str, Advert] = dict(igp.natives[pid].get(host, {}))

            def offer(prefix: str, ad: Advert) -> None:
                current = ads.get(prefix)
                if current is None or ad.rank() < current.rank():
                    ads[prefix] = ad

            for rule in proc.redistribute:
                for prefix, route in sorted(ribs.get((rule.from_process, host), {}).items()):
                    if route.origin == pid or ipaddress.ip_network(prefix).version != version:
                        continue
                    origin = (route.origin or rule.from_process) if rule.metric_type == EXTERNAL else None
                    offer(prefix, Advert(rule.metric, rule.metric_type, origin))
            for net, metric in active.get((pid, host), []):
                ads = {p: a for p, a in ads.items() if not _contained(ipaddress.ip_network(p), net)}
                offer(str(net), Advert(metric, INTERNAL, None))
            out[pid][host] = ads
    return {p: dict(v) for p, v in out.items()}


def routing_summary(result: RoutingResult) -> dict[str, Any]:
    return {
        "converged": result.converged,
        "iterations": result.iterations,
        "prefix_count": sum(len(t) for t in result.fib.tables.values()),
    }
