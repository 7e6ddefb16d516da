"""Fluid flow-level simulation of loss and delay, and SLA threshold checks.

Each flow is split equally over ECMP next hops at every hop. Link load is the
sum of rate x share over traversing branches; a congested link drops the
excess proportionally; delay per link is propagation plus a queueing term
Q * u / (1 - u) with utilisation capped at U_CAP.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable

from .dataplane.forwarding import Dataplane, Disposition, PacketSpec, forward
from .errors import MissingTopologyLink
from .model import Link, SlaPolicy, TrafficDemand

QUEUE_MS = 1.0
U_CAP = 0.99


@dataclass(frozen=True)
class Branch:
    path: tuple[str, ...]
    links: tuple[str, ...]
    share: float
    disposition: str
    delivered: float = 0.0
    delay: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "path": list(self.path),
            "links": list(self.links),
            "share": self.share,
            "disposition": self.disposition,
            "delivered": self.delivered,
            "delay": self.delay,
        }


@dataclass
class FlowResult:
    flow_id: str
    sla_class: str
    branches: list[Branch]
    delivered_fraction: float
    delay: float | None  # None when nothing is delivered

    @property
    def lost_fraction(self) -> float:
        return 1.0 - self.delivered_fraction

    def to_dict(self) -> dict[str, Any]:
        return {
            "flow_id": self.flow_id,
            "class": self.sla_class,
            "branches": [b.to_dict() for b in self.branches],
            "delivered_fraction": self.delivered_fraction,
            "delay": self.delay,
        }


@dataclass
class SimulationResult:
    flows: list[FlowResult]
    link_load: dict[str, float] = field(default_factory=dict)
    link_loss: dict[str, float] = field(default_factory=dict)
    link_delay: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "flows": [f.to_dict() for f in self.flows],
            "link_load": dict(sorted(self.link_load.items())),
            "link_loss": dict(sorted(self.link_loss.items())),
            "link_delay": dict(sorted(self.link_delay.items())),
        }


def link_delay(link: Link, load: float) -> float:
    u = min(load / link.capacity, U_CAP)
    return link.prop_delay + QUEUE_MS * (u / (1.0 - u))


def simulate(dp: Dataplane, demands: Iterable[TrafficDemand] | None = None) -> SimulationResult:
    """Two passes: accumulate link loads over all branches, then per-flow metrics."""
    demands = list(demands if demands is not None else dp.spec.demands)
    links_at: dict[tuple[str, str], Link] = {}
    for link in dp.spec.topology.links:
        links_at[(link.a.device, link.a.interface)] = link
        links_at[(link.b.device, link.b.interface)] = link

    expanded: list[tuple[TrafficDemand, list[tuple[tuple[str, ...], tuple[Link, ...], Fraction, Disposition]]]] = []
    load: dict[str, float] = defaultdict(float)
    for demand in demands:
        branches = []
        for trace in forward(dp, PacketSpec(demand.src, demand.dst_ip)):
            # a dropped branch still loads every link it crossed before the drop point
            crossed = trace.hops if trace.disposition in (Disposition.DELIVERED, Disposition.LOOP) else trace.hops[:-1]
            used = []
            for hop in crossed:
                if hop.out_interface is None:
                    continue
                link = links_at.get((hop.device, hop.out_interface))
                if link is None:
                    raise MissingTopologyLink(f"no link record for {hop.device}:{hop.out_interface}")
                used.append(link)
            branches.append((tuple(trace.devices()), tuple(used), trace.share, trace.disposition))
            for link in used:
                load[link.name] += demand.rate * float(trace.share)
        expanded.append((demand, branches))

    by_name = {link.name: link for link in dp.spec.topology.links}
    loss = {name: (max(0.0, (value - by_name[name].capacity) / value) if value > 0 else 0.0) for name, value in load.items()}
    delays = {name: link_delay(by_name[name], load.get(name, 0.0)) for name in by_name}

    flows = []
    for demand, branches in expanded:
        out = []
        delivered_total = 0.0
        weighted_delay = 0.0
        for path, used, share, disposition in branches:
            if disposition == Disposition.DELIVERED:
                delivered = 1.0
                for link in used:
                    delivered *= 1.0 - loss.get(link.name, 0.0)
                delay = sum(delays[link.name] for link in used)
            else:
                delivered, delay = 0.0, None
            out.append(Branch(path, tuple(l.name for l in used), float(share), disposition.value, delivered, delay))
            mass = float(share) * delivered
            delivered_total += mass
            if delay is not None:
                weighted_delay += mass * delay
        flow_delay = weighted_delay / delivered_total if delivered_total > 0 else None
        flows.append(FlowResult(demand.flow_id, demand.sla_class, out, delivered_total, flow_delay))
    return SimulationResult(flows, dict(load), loss, delays)


@dataclass(frozen=True)
class SlaViolation:
    flow_id: str
    metric: str  # LOSS | DELAY
    observed: float | None
    threshold: float

    def to_dict(self) -> dict[str, Any]:
        return {"flow": self.flow_id, "metric": self.metric, "observed": self.observed, "threshold": self.threshold}


def check_sla(results: Iterable[FlowResult], policy: SlaPolicy) -> list[SlaViolation]:
    """A flow violates when loss or delay strictly exceed the class bound."""
    out = []
    for flow in results:
        cls = policy.classes[flow.sla_class]
        lost = 1.0 - flow.delivered_fraction
        if lost > cls.max_loss:
            out.append(SlaViolation(flow.flow_id, "LOSS", lost, cls.max_loss))
        if flow.delay is not None and flow.delay > cls.max_delay:
            out.append(SlaViolation(flow.flow_id, "DELAY", flow.delay, cls.max_delay))
    return out
