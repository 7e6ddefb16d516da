"""Native routing, forwarding and ACL analysis."""

from .acl import AclDecision, AclWitness, HeaderSpace, PacketFields, acl_compare, acl_eval, acl_search, default_header_space
from .forwarding import (
    Dataplane,
    Disposition,
    ForwardingTrace,
    Hop,
    LoopFinding,
    PacketSpec,
    ProbeDifference,
    ReachabilityResult,
    aggregate,
    default_probes,
    detect_loops,
    differential_reachability,
    forward,
    reachability,
)
from .routing import Fib, NextHop, Protocol, RibEntry, RoutingResult, compute_fib
from .service import compute_routes, dataplane_for, routing_layer

__all__ = [
    "AclDecision",
    "AclWitness",
    "Dataplane",
    "Disposition",
    "Fib",
    "ForwardingTrace",
    "HeaderSpace",
    "Hop",
    "LoopFinding",
    "NextHop",
    "PacketFields",
    "PacketSpec",
    "ProbeDifference",
    "Protocol",
    "ReachabilityResult",
    "RibEntry",
    "RoutingResult",
    "acl_compare",
    "acl_eval",
    "acl_search",
    "aggregate",
    "compute_fib",
    "compute_routes",
    "dataplane_for",
    "default_header_space",
    "default_probes",
    "detect_loops",
    "differential_reachability",
    "forward",
    "reachability",
    "routing_layer",
]
