"""ACL evaluation, search and bounded-space comparison."""

from __future__ import annotations

import functools
import ipaddress
import itertools
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Sequence

from ..errors import HeaderSpaceTooLarge, InvalidParams
from ..model import Acl, AclRule

PROTOCOLS = ("tcp", "udp", "icmp")
PORT_MAX = 65535
DEFAULT_CAP = 2**20


@dataclass(frozen=True)
class PacketFields:
    src_ip: str
    dst_ip: str
    protocol: str = "tcp"
    src_port: int = 0
    dst_port: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "src_ip": self.src_ip,
            "dst_ip": self.dst_ip,
            "protocol": self.protocol,
            "src_port": self.src_port,
            "dst_port": self.dst_port,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> PacketFields:
        return cls(d["src_ip"], d["dst_ip"], d.get("protocol", "tcp"), d.get("src_port", 0), d.get("dst_port", 0))

    def sort_key(self) -> tuple:
        s = ipaddress.ip_address(self.src_ip)
        d = ipaddress.ip_address(self.dst_ip)
        return (s.version, int(s), d.version, int(d), self.protocol, self.src_port, self.dst_port)


@dataclass(frozen=True)
class AclDecision:
    action: str
    seq: int | None  # None = implicit deny

    def to_dict(self) -> dict[str, Any]:
        return {"action": self.action, "seq": self.seq if self.seq is not None else "implicit-deny"}


@functools.lru_cache(maxsize=4096)
def _range(prefix: str) -> tuple[int, int, int]:
    """(version, first, last) integer bounds of a prefix."""
    net = ipaddress.ip_network(prefix)
    return net.version, int(net.network_address), int(net.broadcast_address)


@functools.lru_cache(maxsize=65536)
def _addr_int(text: str) -> tuple[int, int]:
    addr = ipaddress.ip_address(text)
    return addr.version, int(addr)


def _prefix_match(prefix: str, addr: tuple[int, int]) -> bool:
    if prefix == "any":
        return True
    version, lo, hi = _range(prefix)
    return version == addr[0] and lo <= addr[1] <= hi


def _matches(rule: AclRule, pkt: PacketFields, src: tuple[int, int], dst: tuple[int, int]) -> bool:
    if rule.protocol != "any" and rule.protocol != pkt.protocol:
        return False
    if not _prefix_match(rule.src_prefix, src) or not _prefix_match(rule.dst_prefix, dst):
        return False
    sport, dport = (0, 0) if pkt.protocol == "icmp" else (pkt.src_port, pkt.dst_port)
    return rule.src_ports[0] <= sport <= rule.src_ports[1] and rule.dst_ports[0] <= dport <= rule.dst_ports[1]


def rule_matches(rule: AclRule, pkt: PacketFields) -> bool:
    return _matches(rule, pkt, _addr_int(pkt.src_ip), _addr_int(pkt.dst_ip))


def acl_eval(acl: Acl, pkt: PacketFields) -> AclDecision:
    """First match by ascending seq; implicit deny after the last rule."""
    src, dst = _addr_int(pkt.src_ip), _addr_int(pkt.dst_ip)
    for rule in acl.ordered_rules():
        if _matches(rule, pkt, src, dst):
            return AclDecision(rule.action, rule.seq)
    return AclDecision("deny", None)


# --- header spaces -----------------------------------------------------------------

Interval = tuple[int, int]


@dataclass(frozen=True)
class HeaderSpace:
    """Bounded packet domain: the product of the per-field value sets."""

    src_ips: tuple[str, ...]
    dst_ips: tuple[str, ...]
    protocols: tuple[str, ...] = PROTOCOLS
    src_ports: tuple[Interval, ...] = ((0, PORT_MAX),)
    dst_ports: tuple[Interval, ...] = ((0, PORT_MAX),)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> HeaderSpace:
        try:
            space = cls(
                tuple(str(p) for p in d["src_ips"]),
                tuple(str(p) for p in d["dst_ips"]),
                tuple(d.get("protocols", PROTOCOLS)),
                _port_intervals(d.get("src_ports", [[0, PORT_MAX]])),
                _port_intervals(d.get("dst_ports", [[0, PORT_MAX]])),
            )
            for prefix in space.src_ips + space.dst_ips:
                ipaddress.ip_network(prefix, strict=False)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParams(f"bad header space: {exc}") from None
        if not space.src_ips or not space.dst_ips:
            raise InvalidParams("bad header space: src_ips and dst_ips must be non-empty")
        unknown = set(space.protocols) - set(PROTOCOLS)
        if unknown:
            raise InvalidParams(f"bad header space: unknown protocols {sorted(unknown)}")
        return space

    def to_dict(self) -> dict[str, Any]:
        return {
            "src_ips": list(self.src_ips),
            "dst_ips": list(self.dst_ips),
            "protocols": list(self.protocols),
            "src_ports": [list(r) for r in self.src_ports],
            "dst_ports": [list(r) for r in self.dst_ports],
        }


def _port_intervals(items: Iterable[Any]) -> tuple[Interval, ...]:
    out = []
    for item in items:
        lo, hi = (item, item) if isinstance(item, int) else (int(item[0]), int(item[1]))
        if not 0 <= lo <= hi <= PORT_MAX:
            raise ValueError(f"invalid port range {item!r}")
        out.append((lo, hi))
    return tuple(_merge(out))


def _merge(intervals: Iterable[Interval]) -> list[Interval]:
    merged: list[list[int]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(a, b) for a, b in merged]


def _addr_intervals(prefixes: Iterable[str]) -> dict[int, list[Interval]]:
    by_family: dict[int, list[Interval]] = {}
    for text in prefixes:
        net = ipaddress.ip_network(text, strict=False)
        by_family.setdefault(net.version, []).append((int(net.network_address), int(net.broadcast_address)))
    return {v: _merge(iv) for v, iv in by_family.items()}


def _count(intervals: Iterable[Interval]) -> int:
    return sum(hi - lo + 1 for lo, hi in intervals)


def _split(intervals: Sequence[Interval], cuts: set[int]) -> list[Interval]:
    """Split intervals so that each cut value starts a new piece."""
    ordered = sorted(cuts)
    out = []
    for lo, hi in intervals:
        start = lo
        for c in ordered:
            if start < c <= hi:
                out.append((start, c - 1))
                start = c
        out.append((start, hi))
    return out


def _rule_nets(rules: Iterable[AclRule], attr: str) -> list[ipaddress.IPv4Network | ipaddress.IPv6Network]:
    return [ipaddress.ip_network(getattr(r, attr)) for r in rules if getattr(r, attr) != "any"]


def _addr_cuts(nets: Iterable[ipaddress.IPv4Network | ipaddress.IPv6Network], version: int) -> set[int]:
    cuts: set[int] = set()
    for net in nets:
        if net.version == version:
            cuts.add(int(net.network_address))
            cuts.add(int(net.broadcast_address) + 1)
    return cuts


def _port_cuts(rules: Iterable[AclRule], attr: str) -> set[int]:
    cuts: set[int] = set()
    for r in rules:
        lo, hi = getattr(r, attr)
        cuts.update({lo, hi + 1})
    return cuts


@dataclass(frozen=True)
class _Atoms:
    src: list[tuple[int, Interval]]
    dst: list[tuple[int, Interval]]
    protocols: tuple[str, ...]
    sport: list[Interval]
    dport: list[Interval]


def _atoms(space: HeaderSpace, rules: list[AclRule]) -> _Atoms:
    def addr_atoms(prefixes: Sequence[str], attr: str) -> list[tuple[int, Interval]]:
        nets = _rule_nets(rules, attr)
        out = []
        for version, intervals in sorted(_addr_intervals(prefixes).items()):
            out.extend((version, iv) for iv in _split(intervals, _addr_cuts(nets, version)))
        return out

    return _Atoms(
        addr_atoms(space.src_ips, "src_prefix"),
        addr_atoms(space.dst_ips, "dst_prefix"),
        tuple(sorted(set(space.protocols))),
        _split(space.src_ports, _port_cuts(rules, "src_ports")),
        _split(space.dst_ports, _port_cuts(rules, "dst_ports")),
    )


def header_space_size(space: HeaderSpace) -> int:
    src = sum(_count(iv) for iv in _addr_intervals(space.src_ips).values())
    dst = sum(_count(iv) for iv in _addr_intervals(space.dst_ips).values())
    return src * dst * len(set(space.protocols)) * _count(space.src_ports) * _count(space.dst_ports)


def _addr(version: int, value: int) -> str:
    return str(ipaddress.IPv4Address(value) if version == 4 else ipaddress.IPv6Address(value))


def _cells(atoms: _Atoms) -> Iterator[tuple[tuple[int, Interval], tuple[int, Interval], str, Interval, Interval]]:
    for proto in atoms.protocols:
        sports = atoms.sport if proto != "icmp" else [(0, 0)]
        dports = atoms.dport if proto != "icmp" else [(0, 0)]
        for src, dst, sp, dp in itertools.product(atoms.src, atoms.dst, sports, dports):
            yield src, dst, proto, sp, dp


def _expand(src, dst, proto, sp, dp, icmp_sp: Sequence[Interval], icmp_dp: Sequence[Interval]) -> Iterator[PacketFields]:
    (sv, (slo, shi)), (dv, (dlo, dhi)) = src, dst
    if proto == "icmp":
        # ports are irrelevant to icmp; every (sport, dport) in the space maps to the same decision
        sport_vals = [p for lo, hi in icmp_sp for p in range(lo, hi + 1)]
        dport_vals = [p for lo, hi in icmp_dp for p in range(lo, hi + 1)]
    else:
        sport_vals = range(sp[0], sp[1] + 1)
        dport_vals = range(dp[0], dp[1] + 1)
    for s in range(slo, shi + 1):
        for d in range(dlo, dhi + 1):
            for a in sport_vals:
                for b in dport_vals:
                    yield PacketFields(_addr(sv, s), _addr(dv, d), proto, a, b)


def _representative(src, dst, proto, sp, dp) -> PacketFields:
    return PacketFields(_addr(src[0], src[1][0]), _addr(dst[0], dst[1][0]), proto, sp[0], dp[0])


@dataclass(frozen=True)
class AclWitness:
    packet: PacketFields
    decision_a: AclDecision
    decision_b: AclDecision

    def to_dict(self) -> dict[str, Any]:
        return {"packet": self.packet.to_dict(), "decision_a": self.decision_a.to_dict(), "decision_b": self.decision_b.to_dict()}


def default_header_space(*acls: Acl) -> HeaderSpace:
    """One representative value per atom of the full field domains.

    Atoms are cut at every rule boundary of the given ACLs, so two ACLs agree on
    the full domain iff they agree on these representatives.
    """
    rules = [r for acl in acls for r in acl.rules]
    versions = {4} | {n.version for attr in ("src_prefix", "dst_prefix") for n in _rule_nets(rules, attr)}

    def reps(attr: str) -> tuple[str, ...]:
        nets = _rule_nets(rules, attr)
        out = []
        for v in sorted(versions):
            top = 2**32 - 1 if v == 4 else 2**128 - 1
            out.extend(f"{_addr(v, lo)}/{32 if v == 4 else 128}" for lo, _ in _split([(0, top)], _addr_cuts(nets, v)))
        return tuple(out)

    def port_reps(attr: str) -> tuple[Interval, ...]:
        return tuple((lo, lo) for lo, _ in _split([(0, PORT_MAX)], _port_cuts(rules, attr)))

    return HeaderSpace(reps("src_prefix"), reps("dst_prefix"), PROTOCOLS, port_reps("src_ports"), port_reps("dst_ports"))


def acl_compare(acl_a: Acl, acl_b: Acl, space: HeaderSpace | None = None, cap: int = DEFAULT_CAP) -> list[AclWitness]:
    """Every packet of the bounded space on which the two ACLs take different actions."""
    space = space or default_header_space(acl_a, acl_b)
    size = header_space_size(space)
    if size > cap:
        raise HeaderSpaceTooLarge(f"header space has {size} packets, cap is {cap}")
    atoms = _atoms(space, list(acl_a.rules) + list(acl_b.rules))
    out = []
    for cell in _cells(atoms):
        rep = _representative(*cell)
        da, db = acl_eval(acl_a, rep), acl_eval(acl_b, rep)
        if da.action != db.action:
            out.extend(
                AclWitness(p, acl_eval(acl_a, p), acl_eval(acl_b, p))
                for p in _expand(*cell, space.src_ports, space.dst_ports)
            )
    out.sort(key=lambda w: w.packet.sort_key())
    return out


def acl_search(acl: Acl, space: HeaderSpace, action: str, cap: int = DEFAULT_CAP, limit: int = 1000) -> tuple[int, list[PacketFields]]:
    """Count packets of ``space`` receiving ``action``; returns (count, first ``limit`` packets)."""
    size = header_space_size(space)
    if size > cap:
        raise HeaderSpaceTooLarge(f"header space has {size} packets, cap is {cap}")
    atoms = _atoms(space, list(acl.rules))
    total = 0
    sample: list[PacketFields] = []
    for cell in _cells(atoms):
        if acl_eval(acl, _representative(*cell)).action != action:
            continue
        src, dst, proto, sp, dp = cell
        ports = (_count(space.src_ports) * _count(space.dst_ports)) if proto == "icmp" else (sp[1] - sp[0] + 1) * (dp[1] - dp[0] + 1)
        total += (src[1][1] - src[1][0] + 1) * (dst[1][1] - dst[1][0] + 1) * ports
        if len(sample) < limit:
            sample.extend(itertools.islice(_expand(*cell, space.src_ports, space.dst_ports), limit - len(sample)))
    sample.sort(key=lambda p: p.sort_key())
    return total, sample
