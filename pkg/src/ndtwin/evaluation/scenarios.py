"""Built-in scenario library: eight change scenarios and two incident analogs.

Each scenario holds a base network, one GOOD and one BAD candidate delta, a
change-descriptor template and its ground-truth requirements. SLA thresholds
and demand rates are fixture choices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from ..model import NetworkSpec
from ..ingest import spec_from_data
from .delta import apply_delta

GOOD, BAD = "GOOD", "BAD"


@dataclass(frozen=True)
class Candidate:
    id: str
    label: str
    delta: tuple[Mapping[str, Any], ...]
    main_error_test: Mapping[str, Any] | None = None  # {capability, params}; BAD candidates only

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "label": self.label, "delta": [dict(e) for e in self.delta], "main_error_test": self.main_error_test}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Candidate:
        return cls(d["id"], d["label"], tuple(d.get("delta", [])), d.get("main_error_test"))


@dataclass(frozen=True)
class Requirement:
    requirement_id: str
    description: str
    predicate: Mapping[str, Any]  # {capability, params}: a test satisfies it when params contain these

    def satisfied_by(self, test: Mapping[str, Any]) -> bool:
        return matches_signature(test, self.predicate)

    def to_dict(self) -> dict[str, Any]:
        return {"requirement_id": self.requirement_id, "description": self.description, "predicate": dict(self.predicate)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Requirement:
        return cls(d["requirement_id"], d.get("description", ""), dict(d["predicate"]))


def _contains(actual: Any, expected: Any) -> bool:
    """Objects match recursively on the expected keys; everything else by equality."""
    if isinstance(expected, Mapping):
        return isinstance(actual, Mapping) and all(k in actual and _contains(actual[k], v) for k, v in expected.items())
    return actual == expected


def matches_signature(test: Mapping[str, Any], signature: Mapping[str, Any]) -> bool:
    return test.get("capability") == signature.get("capability") and _contains(test.get("params", {}), signature.get("params", {}))


@dataclass(frozen=True)
class Scenario:
    id: str
    title: str
    base: Mapping[str, Any]
    candidates: tuple[Candidate, ...]
    descriptor: Mapping[str, Any]  # intent, category, scope
    requirements: tuple[Requirement, ...]
    intent_variations: tuple[str, ...] = ()

    def base_spec(self) -> NetworkSpec:
        return spec_from_data(self.base)

    def candidate(self, cid: str) -> Candidate:
        return next(c for c in self.candidates if c.id == cid)

    def candidate_data(self, cid: str) -> dict[str, Any]:
        return apply_delta(self.base, self.candidate(cid).delta)

    def candidate_spec(self, cid: str) -> NetworkSpec:
        return spec_from_data(self.candidate_data(cid))

    def requirement_ids(self) -> set[str]:
        return {r.requirement_id for r in self.requirements}


# --- fixture builder -----------------------------------------------------------------


class Net:
    """Small helper for hand-written fixtures; ``connect`` numbers point-to-point subnets."""

    def __init__(self) -> None:
        self.devices: dict[str, dict[str, Any]] = {}
        self.links: list[dict[str, Any]] = []
        self.demands: list[dict[str, Any]] = []
        self.classes: dict[str, dict[str, float]] = {}

    def dev(self, host: str) -> dict[str, Any]:
        return self.devices.setdefault(host, {"hostname": host, "interfaces": []})

    def iface(self, host: str, name: str, v4: str | None = None, v6: str | None = None, mtu: int = 1500) -> str:
        entry: dict[str, Any] = {"name": name, "mtu": mtu}
        if v4:
            entry["v4_addr"] = v4
        if v6:
            entry["v6_addr"] = v6
        self.dev(host)["interfaces"].append(entry)
        return name

    def connect(self, a: str, b: str, net: int, v6: bool = False, capacity: float = 1000.0, prop_delay: float = 1.0) -> tuple[str, str]:
        ai, bi = f"to_{b}", f"to_{a}"
        if v6:
            self.iface(a, ai, v6=f"fd00:0:{net:x}::1/64")
            self.iface(b, bi, v6=f"fd00:0:{net:x}::2/64")
        else:
            self.iface(a, ai, v4=f"10.0.{net}.1/30")
            self.iface(b, bi, v4=f"10.0.{net}.2/30")
        self.links.append(
            {"a": {"device": a, "interface": ai}, "b": {"device": b, "interface": bi}, "capacity": capacity, "prop_delay": prop_delay}
        )
        return ai, bi

    def igp(self, host: str, pid: str, interfaces: Mapping[str, int], family: str = "v4", **extra: Any) -> None:
        proc = {"process_id": pid, "family": family, "interfaces": [{"name": n, "metric": m} for n, m in interfaces.items()]}
        proc.update(extra)
        self.dev(host).setdefault("igp_processes", []).append(proc)

    def static(self, host: str, prefix: str, next_hop: str, metric: int = 1) -> None:
        self.dev(host).setdefault("static_routes", []).append({"prefix": prefix, "next_hop": next_hop, "metric": metric})

    def acl(self, host: str, name: str, rules: list[dict[str, Any]], interface: str, direction: str) -> None:
        self.dev(host).setdefault("acls", []).append({"name": name, "rules": rules, "applied": [{"interface": interface, "direction": direction}]})

    def demand(self, flow_id: str, src: str, dst_ip: str, rate: float, cls: str) -> None:
        self.demands.append({"flow_id": flow_id, "src": src, "dst_ip": dst_ip, "rate": rate, "class": cls})

    def data(self) -> dict[str, Any]:
        out: dict[str, Any] = {"devices": list(self.devices.values()), "topology": {"links": self.links}}
        if self.demands:
            out["demands"] = self.demands
        if self.classes:
            out["sla"] = {"classes": self.classes}
        return out


def _req(rid: str, description: str, capability: str, **params: Any) -> Requirement:
    return Requirement(rid, description, {"capability": capability, "params": params})


def _set(path: str, value: Any) -> dict[str, Any]:
    return {"op": "set", "path": path, "value": value}


def _add(path: str, value: Any) -> dict[str, Any]:
    return {"op": "add", "path": path, "value": value}


def _rows(expect: str, device: str, kind: str, prefix: str | None = None) -> dict[str, Any]:
    where = [{"attr": "device", "op": "eq", "value": device}]
    if prefix is not None:
        where.append({"attr": "prefix", "op": "eq", "value": prefix})
    return {"query": {"start": {"layer": "ROUTING", "kind": kind, "where": where}}, "expect_rows": expect}


def _probe(ingress: str, dst_ip: str) -> dict[str, Any]:
    return {"ingress": ingress, "dst_ip": dst_ip}


def _reach_req(src: str, dst: str) -> Requirement:
    return _req(f"reach:{src}->{dst}", f"{src} reaches {dst} on every path", "REACHABILITY", src=src, dst_ip=dst, expect_reachable=True)


LOOP_FREE = _req("loop-free", "no forwarding loop for any prefix", "LOOP_DETECTION")
REGRESSION = _req("regression", "unrelated flows keep their forwarding outcome", "DIFFERENTIAL_REACHABILITY")


# --- S1: backup path ----------------------------------------------------------------------


def s1_backup_path() -> Scenario:
    n = Net()
    n.iface("r1", "lan", v4="10.10.0.1/24")
    n.iface("r4", "lan", v4="10.40.0.1/24")
    n.connect("r1", "r2", 12)
    n.connect("r2", "r4", 24)
    n.connect("r1", "r3", 13)
    n.connect("r3", "r4", 34)
    n.static("r1", "10.40.0.0/24", "10.0.12.2")
    n.static("r2", "10.40.0.0/24", "10.0.24.2")
    n.static("r3", "10.40.0.0/24", "10.0.34.2")
    n.static("r4", "10.10.0.0/24", "10.0.24.1")
    n.static("r2", "10.10.0.0/24", "10.0.12.1")
    n.static("r3", "10.10.0.0/24", "10.0.13.1")
    route = "devices[r1].static_routes[10.40.0.0/24].next_hop"
    down = _set("devices[r1].interfaces[to_r2].enabled", False)
    return Scenario(
        "S1",
        "Backup path cut-over",
        n.data(),
        (
            Candidate("good", GOOD, (down, _set(route, "10.0.13.2"))),
            Candidate("bad", BAD, (down, _set(route, "10.0.34.1")), {"capability": "REACHABILITY", "params": {"src": "r1", "dst_ip": "10.40.0.1"}}),
        ),
        {
            "intent": "Retire the r1-r2 circuit and send r1 traffic for 10.40.0.0/24 over the backup path through r3.",
            "category": "ROUTE_CHANGE",
            "scope": {
                "devices": ["r1", "r3"],
                "reach": [{"src": "r1", "dst_ip": "10.40.0.1"}],
                "regression_probes": [_probe("r2", "10.40.0.1"), _probe("r3", "10.40.0.1")],
            },
        },
        (_reach_req("r1", "10.40.0.1"), LOOP_FREE, REGRESSION),
        (
            "Move r1's route to the r4 LAN onto the r3 backup link and shut r1-r2.",
            "Decommission the r1 to r2 link; 10.40.0.0/24 must now go via r3.",
            "Cut r1 over to its secondary path for the server LAN behind r4.",
        ),
    )


# --- S2: firewall collateral -----------------------------------------------------------


def _edge_net() -> Net:
    n = Net()
    n.iface("isp", "partners", v4="203.0.112.1/24")
    n.iface("isp", "internet", v4="203.0.113.1/24")
    n.iface("srv", "lan", v4="10.20.0.1/24")
    n.iface("core", "lan", v4="10.30.0.1/24")
    n.iface("core", "lab", v4="10.31.0.1/24")
    links = [n.connect("isp", "fw", 1), n.connect("fw", "core", 2), n.connect("core", "srv", 3)]
    metrics = {h: {} for h in ("isp", "fw", "core", "srv")}
    for (a, b), (ai, bi) in zip((("isp", "fw"), ("fw", "core"), ("core", "srv")), links):
        metrics[a][ai] = 10
        metrics[b][bi] = 10
    metrics["isp"].update({"partners": 10, "internet": 10})
    metrics["srv"]["lan"] = 10
    metrics["core"].update({"lan": 10, "lab": 10})
    for host, ifaces in metrics.items():
        n.igp(host, "core", ifaces)
    return n


def _space(src: str, dst: str, proto: str, port: int) -> dict[str, Any]:
    return {"src_ips": [src], "dst_ips": [dst], "protocols": [proto], "src_ports": [49152], "dst_ports": [port]}


def s2_firewall_collateral() -> Scenario:
    n = _edge_net()
    n.acl("fw", "edge", [{"seq": 10, "action": "permit", "protocol": "tcp", "dst_prefix": "10.20.0.0/24", "dst_ports": [443, 443]}], "to_isp", "in")
    rules = "devices[fw].acls[edge].rules"
    block = {"label": "attacker", "header_space": _space("203.0.113.0/24", "10.20.0.0/24", "tcp", 443)}
    protect = {"label": "partner", "header_space": _space("203.0.112.0/24", "10.20.0.0/24", "tcp", 443)}
    return Scenario(
        "S2",
        "Firewall policy update",
        n.data(),
        (
            Candidate("good", GOOD, (_add(rules, {"seq": 5, "action": "deny", "src_prefix": "203.0.113.0/24"}),)),
            Candidate(
                "bad",
                BAD,
                (_add(rules, {"seq": 5, "action": "deny", "src_prefix": "203.0.112.0/23"}),),
                {"capability": "ACL_SEARCH", "params": {"device": "fw", "acl": "edge", "action": "deny"}},
            ),
        ),
        {
            "intent": "Block 203.0.113.0/24 at the edge firewall; partner traffic from 203.0.112.0/24 must keep working.",
            "category": "ACL_CHANGE",
            "scope": {
                "devices": ["fw"],
                "acls": [{"device": "fw", "acl": "edge"}],
                "block": [block],
                "protect": [protect],
                "regression_probes": [_probe("core", "10.20.0.1"), _probe("srv", "10.30.0.1")],
            },
        },
        (
            _req("acl-blocks:fw/edge:attacker", "attacker range cannot reach the servers", "ACL_SEARCH", device="fw", acl="edge", action="permit", header_space=block["header_space"]),
            _req("acl-preserves:fw/edge:partner", "partner range still reaches the servers", "ACL_SEARCH", device="fw", acl="edge", action="deny", header_space=protect["header_space"]),
            REGRESSION,
        ),
        (
            "Deny the hostile 203.0.113.0/24 range on fw's edge ACL without touching partners.",
            "Add a drop for 203.0.113.0/24 inbound from the ISP.",
            "Firewall request: block 203.0.113.0/24 while 203.0.112.0/24 stays allowed.",
        ),
    )


# --- S3: ACL refactor ---------------------------------------------------------------------


def s3_acl_refactor() -> Scenario:
    n = _edge_net()
    base_rules = [
        {"seq": 10, "action": "permit", "protocol": "tcp", "src_prefix": "10.30.0.0/24", "dst_prefix": "10.20.0.0/24", "dst_ports": [22, 22]},
        {"seq": 20, "action": "permit", "protocol": "tcp", "src_prefix": "10.30.1.0/24", "dst_prefix": "10.20.0.0/24", "dst_ports": [22, 22]},
        {"seq": 30, "action": "permit", "protocol": "udp", "dst_prefix": "10.20.0.53/32", "dst_ports": [53, 53]},
        {"seq": 40, "action": "permit", "protocol": "tcp", "dst_prefix": "10.20.0.0/24", "dst_ports": [443, 443]},
    ]
    n.acl("fw", "mgmt", base_rules, "to_core", "in")

    def refactor(src: str) -> tuple[dict[str, Any], ...]:
        merged = [
            {"seq": 10, "action": "permit", "protocol": "tcp", "src_prefix": src, "dst_prefix": "10.20.0.0/24", "dst_ports": [22, 22]},
            base_rules[2],
            base_rules[3],
        ]
        return (_set("devices[fw].acls[mgmt].rules", merged),)

    return Scenario(
        "S3",
        "ACL refactor",
        n.data(),
        (
            Candidate("good", GOOD, refactor("10.30.0.0/23")),
            Candidate("bad", BAD, refactor("10.30.0.0/24"), {"capability": "ACL_COMPARE", "params": {"device": "fw", "acl": "mgmt"}}),
        ),
        {
            "intent": "Collapse the two SSH permits in fw's mgmt ACL into one rule without changing behaviour.",
            "category": "ACL_CHANGE",
            "scope": {
                "devices": ["fw"],
                "acls": [{"device": "fw", "acl": "mgmt"}],
                "preserve_semantics": True,
                "regression_probes": [_probe("isp", "10.30.0.1"), _probe("srv", "10.30.0.1")],
            },
        },
        (_req("acl-equivalent:fw/mgmt", "refactored ACL is equivalent to the original", "ACL_COMPARE", device="fw", acl="mgmt"), REGRESSION),
        (
            "Tidy up fw mgmt ACL: merge the SSH permits, no functional change.",
            "Refactor the management filter on fw into fewer rules; same outcomes.",
            "Summarise the 10.30.0/10.30.1 SSH entries in the mgmt ACL.",
        ),
    )


# --- S4: MTU --------------------------------------------------------------------------------


def _chain(v6: bool = False) -> Net:
    n = Net()
    n.iface("r1", "lan", v4="10.10.0.1/24")
    n.iface("r3", "lan", v4="10.30.0.1/24")
    a = n.connect("r1", "r2", 12)
    b = n.connect("r2", "r3", 23)
    n.igp("r1", "core", {"lan": 10, a[0]: 10})
    n.igp("r2", "core", {a[1]: 10, b[0]: 10})
    n.igp("r3", "core", {b[1]: 10, "lan": 10})
    return n


def s4_mtu() -> Scenario:
    n = _chain()
    r1 = _set("devices[r1].interfaces[to_r2].mtu", 9000)
    r2 = _set("devices[r2].interfaces[to_r1].mtu", 9000)
    return Scenario(
        "S4",
        "Jumbo frames on r1-r2",
        n.data(),
        (Candidate("good", GOOD, (r1, r2)), Candidate("bad", BAD, (r1,), {"capability": "MTU_CONSISTENCY", "params": {}})),
        {
            "intent": "Enable 9000-byte MTU on the r1-r2 link.",
            "category": "MTU",
            "scope": {"devices": ["r1", "r2"], "regression_probes": [_probe("r1", "10.30.0.1"), _probe("r3", "10.10.0.1")]},
        },
        (_req("mtu-consistent", "both ends of every link share one MTU", "MTU_CONSISTENCY"), REGRESSION),
        (
            "Turn on jumbo frames between r1 and r2.",
            "Raise the MTU of the r1<->r2 circuit to 9000.",
            "Set link MTU 9000 on r1-r2 for the storage replication.",
        ),
    )


# --- S5: address migration ---------------------------------------------------------------


def s5_readdress() -> Scenario:
    n = Net()
    n.iface("r1", "lan", v4="10.10.0.1/24")
    n.iface("r3", "lan", v4="10.50.0.1/24")
    n.connect("r1", "r2", 12)
    n.connect("r2", "r3", 23)
    n.static("r1", "10.50.0.0/24", "10.0.12.2")
    n.static("r2", "10.50.0.0/24", "10.0.23.2")
    n.static("r3", "10.10.0.0/24", "10.0.23.1")
    n.static("r2", "10.10.0.0/24", "10.0.12.1")
    r2 = (
        _set("devices[r2].interfaces[to_r3].v4_addr", "10.9.23.1/30"),
        _set("devices[r2].static_routes[10.50.0.0/24].next_hop", "10.9.23.2"),
    )
    r3 = (
        _set("devices[r3].interfaces[to_r2].v4_addr", "10.9.23.2/30"),
        _set("devices[r3].static_routes[10.10.0.0/24].next_hop", "10.9.23.1"),
    )
    return Scenario(
        "S5",
        "Transit re-addressing",
        n.data(),
        (
            Candidate("good", GOOD, r2 + r3),
            Candidate("bad", BAD, r2, {"capability": "REACHABILITY", "params": {"src": "r1", "dst_ip": "10.50.0.1"}}),
        ),
        {
            "intent": "Move the r2-r3 transit from 10.0.23.0/30 to 10.9.23.0/30 on both routers.",
            "category": "VLAN",
            "scope": {
                "devices": ["r2", "r3"],
                "reach": [{"src": "r1", "dst_ip": "10.50.0.1"}],
                "regression_probes": [_probe("r1", "10.0.12.2"), _probe("r2", "10.10.0.1")],
            },
        },
        (_reach_req("r1", "10.50.0.1"), REGRESSION),
        (
            "Renumber the r2/r3 transit VLAN into 10.9.23.0/30.",
            "Migrate r2-r3 addressing to the new 10.9.23.0/30 block.",
            "Re-IP the link between r2 and r3; keep the 10.50 LAN reachable.",
        ),
    )


# --- S6: link migration ------------------------------------------------------------------


def s6_link_migration() -> Scenario:
    n = _chain()
    for link in n.links:
        link["prop_delay"] = 2.0
    n.demand("f1", "r1", "10.30.0.1", 400.0, "gold")
    n.classes["gold"] = {"max_delay": 50.0, "max_loss": 0.01}
    cap = "topology.links[1].capacity"
    delay = _set("topology.links[1].prop_delay", 3.0)
    return Scenario(
        "S6",
        "Circuit migration",
        n.data(),
        (
            Candidate("good", GOOD, (_set(cap, 1000.0), delay)),
            Candidate("bad", BAD, (_set(cap, 100.0), delay), {"capability": "SLA_VERIFY_SIM", "params": {}}),
        ),
        {
            "intent": "Move the r2-r3 link to the new carrier circuit.",
            "category": "LINK_MIGRATION",
            "scope": {
                "devices": ["r2", "r3"],
                "flows": ["f1"],
                "reach": [{"src": "r1", "dst_ip": "10.30.0.1"}],
                "regression_probes": [_probe("r2", "10.10.0.1")],
            },
        },
        (
            _req("sla", "gold flows keep their loss and delay bounds", "SLA_VERIFY_SIM", flows=["f1"]),
            _reach_req("r1", "10.30.0.1"),
            REGRESSION,
        ),
        (
            "Cut r2-r3 over to the replacement carrier link.",
            "Swap the r2<->r3 circuit for the new provider's.",
            "Migrate r2-r3 onto the new transport circuit; f1 must keep its SLA.",
        ),
    )


# --- redistribution fixtures ---------------------------------------------------------------


def redistribution_net(v6: bool = False, redistribute: str | None = None, metric: int = 1) -> Net:
    """Two IGP domains (P1: p1, P2: p2) joined by border routers b1 and b2 running both."""
    n = Net()
    if v6:
        lan1, lan2 = "2001:db8:10::1/64", "2001:db8:20::1/64"
        n.iface("p1", "lan", v6=lan1)
    else:
        lan1, lan2 = "10.1.0.1/24", "10.2.0.1/24"
        n.iface("p1", "lan", v4=lan1)
    fam = "v6" if v6 else "v4"
    p1b1 = n.connect("p1", "b1", 1, v6)
    p1b2 = n.connect("p1", "b2", 2, v6)
    b1b2 = n.connect("b1", "b2", 3, v6)
    b1p2 = n.connect("b1", "p2", 4, v6)
    b2p2 = n.connect("b2", "p2", 5, v6)
    if v6:
        n.iface("p2", "lan", v6=lan2)
    else:
        n.iface("p2", "lan", v4=lan2)
    extra = (lambda src: {"redistribute": [{"from_process": src, "metric": metric, "metric_type": redistribute}]}) if redistribute else (lambda src: {})
    n.igp("p1", "P1", {"lan": 10, p1b1[0]: 10, p1b2[0]: 10}, fam)
    n.igp("b1", "P1", {p1b1[1]: 10}, fam, **extra("P2"))
    n.igp("b1", "P2", {b1b2[0]: 1, b1p2[0]: 1}, fam, **extra("P1"))
    n.igp("b2", "P1", {p1b2[1]: 10}, fam, **extra("P2"))
    n.igp("b2", "P2", {b1b2[1]: 1, b2p2[0]: 1}, fam, **extra("P1"))
    n.igp("p2", "P2", {b1p2[1]: 1, b2p2[1]: 1, "lan": 1}, fam)
    return n


def _redistribution_scope(lan1: str, lan2: str, addr1: str, addr2: str) -> dict[str, Any]:
    return {
        "devices": ["b1", "b2"],
        "reach": [{"src": "p2", "dst_ip": lan1}, {"src": "p1", "dst_ip": lan2}],
        "redistribution_devices": ["b1", "b2"],
        "regression_probes": [_probe("p1", addr1), _probe("p2", addr2)],
    }


def _redistribution_reqs(lan1: str, lan2: str) -> tuple[Requirement, ...]:
    return (
        LOOP_FREE,
        _reach_req("p2", lan1),
        _reach_req("p1", lan2),
        _req("redistribution-active:b1", "b1 redistributes between the domains", "NDM_QUERY", **_rows("some", "b1", "igp-redistribution")),
        _req("redistribution-active:b2", "b2 redistributes between the domains", "NDM_QUERY", **_rows("some", "b2", "igp-redistribution")),
        REGRESSION,
    )


def _redistribute_edits(metric_type: str) -> tuple[dict[str, Any], ...]:
    return tuple(
        _add(f"devices[{b}].igp_processes[{p}].redistribute", {"from_process": q, "metric": 1, "metric_type": metric_type})
        for b in ("b1", "b2")
        for p, q in (("P1", "P2"), ("P2", "P1"))
    )


def s7_redistribution() -> Scenario:
    n = redistribution_net(v6=True)
    lan1, lan2 = "2001:db8:10::1", "2001:db8:20::1"
    return Scenario(
        "S7",
        "Mutual redistribution",
        n.data(),
        (
            Candidate("good", GOOD, _redistribute_edits("external")),
            Candidate("bad", BAD, _redistribute_edits("internal"), {"capability": "LOOP_DETECTION", "params": {}}),
        ),
        {
            "intent": "Redistribute between IGP domains P1 and P2 on both border routers.",
            "category": "REDISTRIBUTION",
            "scope": _redistribution_scope(lan1, lan2, "fd00:0:1::2", "fd00:0:4::1"),
        },
        _redistribution_reqs(lan1, lan2),
        (
            "Join the P1 and P2 domains with two-way redistribution on b1 and b2.",
            "Enable mutual route redistribution between P1 and P2 at both borders.",
            "Leak routes both ways between the two IGP instances on b1/b2.",
        ),
    )


def i1_redistribution_loop() -> Scenario:
    n = redistribution_net(v6=False, redistribute="external")
    lan1, lan2 = "10.1.0.1", "10.2.0.1"
    edits_bad = tuple(
        _set(f"devices[{b}].igp_processes[{p}].redistribute[{q}].metric_type", "internal")
        for b in ("b1", "b2")
        for p, q in (("P1", "P2"), ("P2", "P1"))
    )
    edits_good = tuple(
        _set(f"devices[{b}].igp_processes[{p}].redistribute[{q}].metric", 5) for b in ("b1", "b2") for p, q in (("P1", "P2"), ("P2", "P1"))
    )
    return Scenario(
        "I1",
        "Redistribution metric-type change",
        n.data(),
        (
            Candidate("good", GOOD, edits_good),
            Candidate("bad", BAD, edits_bad, {"capability": "LOOP_DETECTION", "params": {}}),
        ),
        {
            "intent": "Normalise the redistribution between P1 and P2 on the border routers.",
            "category": "REDISTRIBUTION",
            "scope": _redistribution_scope(lan1, lan2, "10.0.1.2", "10.0.4.1"),
        },
        _redistribution_reqs(lan1, lan2),
        (
            "Standardise redistribution settings between the two IGP domains.",
            "Update b1/b2 redistribution parameters for P1<->P2.",
            "Harmonise the P1/P2 redistribution config on both borders.",
        ),
    )


# --- summarization fixtures ----------------------------------------------------------------


def s8_summarization() -> Scenario:
    n = Net()
    n.iface("a1", "lan1", v4="10.10.1.1/24")
    n.iface("a1", "lan2", v4="10.10.2.1/24")
    n.iface("a2", "lan1", v4="10.20.1.1/24")
    c1a1 = n.connect("c1", "a1", 1)
    c1a2 = n.connect("c1", "a2", 2)
    n.igp("c1", "core", {c1a1[0]: 10, c1a2[0]: 10})
    n.igp("a1", "core", {c1a1[1]: 10, "lan1": 10, "lan2": 10})
    n.igp("a2", "core", {c1a2[1]: 10, "lan1": 10})

    def summaries(a1: str, a2: str) -> tuple[dict[str, Any], ...]:
        return (
            _add("devices[a1].igp_processes[core].summaries", {"prefix": a1}),
            _add("devices[a2].igp_processes[core].summaries", {"prefix": a2}),
        )

    specifics = ["10.10.1.0/24", "10.10.2.0/24", "10.20.1.0/24"]
    dsts = ["10.10.1.1", "10.10.2.1", "10.20.1.1"]
    return Scenario(
        "S8",
        "Aggregation summaries",
        n.data(),
        (
            Candidate("good", GOOD, summaries("10.10.0.0/16", "10.20.0.0/16")),
            Candidate("bad", BAD, summaries("10.0.0.0/8", "10.0.0.0/8"), {"capability": "REACHABILITY", "params": {"src": "c1", "dst_ip": "10.10.1.1"}}),
        ),
        {
            "intent": "Advertise one summary per aggregation router toward the core (10.10.0.0/16 on a1, 10.20.0.0/16 on a2).",
            "category": "SUMMARIZATION",
            "scope": {
                "devices": ["a1", "a2"],
                "summaries": ["10.10.0.0/16", "10.20.0.0/16"],
                "observers": ["c1"],
                "suppressed": specifics,
                "reach": [{"src": "c1", "dst_ip": d} for d in dsts],
                "regression_probes": [_probe("a1", "10.0.1.1"), _probe("a2", "10.0.2.1")],
            },
        },
        tuple(_reach_req("c1", d) for d in dsts)
        + tuple(
            _req(f"summary-advertised:{p}@c1", f"c1 learns summary {p}", "NDM_QUERY", **_rows("some", "c1", "rib-entry", p)) for p in ("10.10.0.0/16", "10.20.0.0/16")
        )
        + tuple(_req(f"specific-suppressed:{p}@c1", f"c1 no longer learns {p}", "NDM_QUERY", **_rows("none", "c1", "rib-entry", p)) for p in specifics)
        + (LOOP_FREE, REGRESSION),
        (
            "Summarise each aggregation site's LANs toward c1.",
            "Configure route summarization on a1 and a2 for their access prefixes.",
            "Reduce core table size: aggregate a1 and a2 LANs.",
        ),
    )


def summarization_v6_net() -> Net:
    """c1 with ECMP links to a1 and a2; a1 already summarises 2001:db8::/32."""
    n = Net()
    c1a1 = n.connect("c1", "a1", 1, v6=True)
    c1a2 = n.connect("c1", "a2", 2, v6=True)
    n.iface("a1", "lan", v6="2001:db8:1::1/48")
    n.iface("a2", "lan", v6="2001:db8:2::1/48")
    n.igp("c1", "core", {c1a1[0]: 10, c1a2[0]: 10}, "v6")
    n.igp("a1", "core", {c1a1[1]: 10, "lan": 10}, "v6", summaries=[{"prefix": "2001:db8::/32"}])
    n.igp("a2", "core", {c1a2[1]: 10, "lan": 10}, "v6")
    return n


def i2_summarization_blackhole() -> Scenario:
    n = summarization_v6_net()
    path = "devices[a2].igp_processes[core].summaries"
    dsts = ["2001:db8:1::1", "2001:db8:2::1"]
    return Scenario(
        "I2",
        "Summary on a new aggregation router",
        n.data(),
        (
            Candidate("good", GOOD, (_add(path, {"prefix": "2001:db8:2::/47"}),)),
            Candidate("bad", BAD, (_add(path, {"prefix": "2001:db8::/32"}),), {"capability": "REACHABILITY", "params": {"src": "c1", "dst_ip": "2001:db8:1::1"}}),
        ),
        {
            "intent": "Configure summarization on the new aggregation router a2 (2001:db8:2::/47).",
            "category": "SUMMARIZATION",
            "scope": {
                "devices": ["a2"],
                "summaries": ["2001:db8:2::/47"],
                "observers": ["c1"],
                "suppressed": ["2001:db8:2::/48"],
                "reach": [{"src": "c1", "dst_ip": d} for d in dsts],
                "regression_probes": [_probe("a1", "fd00:0:1::1"), _probe("a2", "fd00:0:2::1")],
            },
        },
        tuple(_reach_req("c1", d) for d in dsts)
        + (
            _req("summary-advertised:2001:db8:2::/47@c1", "c1 learns the new summary", "NDM_QUERY", **_rows("some", "c1", "rib-entry", "2001:db8:2::/47")),
            _req("specific-suppressed:2001:db8:2::/48@c1", "c1 no longer learns the suppressed specific", "NDM_QUERY", **_rows("none", "c1", "rib-entry", "2001:db8:2::/48")),
            LOOP_FREE,
            REGRESSION,
        ),
        (
            "Add the aggregate for a2's access block on a2.",
            "Summarise a2's prefixes toward the core like a1 does.",
            "Migrate prefix summarization for the new site onto a2.",
        ),
    )


def scenario_library() -> list[Scenario]:
    return [
        s1_backup_path(),
        s2_firewall_collateral(),
        s3_acl_refactor(),
        s4_mtu(),
        s5_readdress(),
        s6_link_migration(),
        s7_redistribution(),
        s8_summarization(),
        i1_redistribution_loop(),
        i2_summarization_blackhole(),
    ]
