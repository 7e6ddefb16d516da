"""Snapshot-facing entry points: build routing state and materialise the ROUTING layer."""

from __future__ import annotations

from typing import Any

from ..errors import NonConvergence
from ..ingest import spec_from_snapshot
from ..layers import EdgeKind, KgEdge, KgNode, LayerId, node_id
from ..snapshots import OpenSnapshot, Repository
from .forwarding import Dataplane
from .routing import MAX_ITERATIONS, RoutingResult, compute_fib


def _own(device: str, target: str) -> KgEdge:
    return KgEdge(node_id(LayerId.DEVICE, device, "device", device), target, EdgeKind.OWN)


def routing_layer(dp: Dataplane) -> tuple[list[KgNode], list[KgEdge]]:
    """rib-entry, igp-redistribution and summary nodes with their OWN/CONNECT edges."""
    nodes: list[KgNode] = []
    edges: list[KgEdge] = []
    fib = dp.fib
    for device in fib.devices():
        for entry in fib.entries(device):
            nid = node_id(LayerId.ROUTING, device, "rib-entry", entry.prefix)
            attrs: dict[str, Any] = {
                "name": entry.prefix,
                "prefix": entry.prefix,
                "family": "v4" if entry.network.version == 4 else "v6",
                "protocol": entry.protocol.value,
                "metric": entry.metric,
                "metric_type": entry.metric_type,
                "origin_process": entry.origin_process,
                "process": entry.process,
                "admin_distance": entry.admin_distance,
                "next_hops": ",".join(h.render() for h in entry.next_hops),
                "next_hop_count": len(entry.next_hops),
            }
            nodes.append(KgNode(nid, LayerId.ROUTING, device, "rib-entry", attrs))
            edges.append(_own(device, nid))
            for peer in sorted({h.device for h in entry.next_hops if h.device}):
                if fib.entry(peer, entry.prefix) is not None:
                    edges.append(KgEdge(nid, node_id(LayerId.ROUTING, peer, "rib-entry", entry.prefix), EdgeKind.CONNECT))
    for dev in dp.spec.devices:
        for proc in dev.igp_processes:
            for rule in proc.redistribute:
                name = f"{proc.process_id}<-{rule.from_process}"
                nid = node_id(LayerId.ROUTING, dev.hostname, "igp-redistribution", name)
                nodes.append(
                    KgNode(
                        nid,
                        LayerId.ROUTING,
                        dev.hostname,
                        "igp-redistribution",
                        {
                            "name": name,
                            "process": proc.process_id,
                            "from_process": rule.from_process,
                            "metric": rule.metric,
                            "metric_type": rule.metric_type,
                        },
                    )
                )
                edges.append(_own(dev.hostname, nid))
    for state in dp.routing.summaries:
        name = f"{state.process}:{state.prefix}"
        nid = node_id(LayerId.ROUTING, state.device, "summary", name)
        nodes.append(
            KgNode(
                nid,
                LayerId.ROUTING,
                state.device,
                "summary",
                {
                    "name": name,
                    "process": state.process,
                    "prefix": state.prefix,
                    "active": state.active,
                    "contributors": state.contributors,
                },
            )
        )
        edges.append(_own(state.device, nid))
    return nodes, edges


def compute_routes(
    repo: Repository,
    ref: str | OpenSnapshot,
    max_iterations: int = MAX_ITERATIONS,
    strict: bool = False,
) -> Dataplane:
    """Compute FIBs for a snapshot and materialise its ROUTING layer.

    For a committed snapshot the layer is attached as a memoised derived layer;
    for an open handle it is upserted into the handle. With ``strict`` a missing
    fixed point raises NonConvergence after the layer has been materialised.
    """
    spec = spec_from_snapshot(repo, ref)
    routing: RoutingResult = compute_fib(spec, max_iterations=max_iterations)
    dp = Dataplane(spec, routing)
    nodes, edges = routing_layer(dp)
    if isinstance(ref, OpenSnapshot):
        ref.drop([c for c in ref.cells if c[1] == LayerId.ROUTING])
        ref.upsert_layer(LayerId.ROUTING, nodes, edges)
    else:
        repo.attach_derived(ref, LayerId.ROUTING, nodes, edges)
        if max_iterations == MAX_ITERATIONS:
            repo.memo[("dataplane", repo.resolve(ref))] = dp
    if strict and not routing.converged:
        raise NonConvergence(f"no fixed point after {routing.iterations} iterations", result=routing)
    return dp


def dataplane_for(repo: Repository, ref: str) -> Dataplane:
    """Cached dataplane of a committed snapshot; materialises ROUTING on first use."""
    sid = repo.resolve(ref)
    cached = repo.memo.get(("dataplane", sid))
    return cached if cached is not None else compute_routes(repo, sid)
