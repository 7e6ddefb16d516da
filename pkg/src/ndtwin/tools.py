"""Verification tool registry: one uniform request/response surface over every capability."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping

import jsonschema

from .dataplane import (
    HeaderSpace,
    PacketSpec,
    acl_compare,
    acl_search,
    dataplane_for,
    detect_loops,
    differential_reachability,
    reachability,
)
from .dataplane.forwarding import Dataplane, Disposition
from .errors import InvalidParams, InvalidQuery, ToolError, TwinError, UnknownDevice, UnknownSnapshot
from .layers import EdgeKind, LayerId
from .query import ExpandStep, GraphQuery, StartClause, execute
from .sla import FlowResult, check_sla, simulate
from .snapshots import Repository


class Capability(str, Enum):
    MTU_CONSISTENCY = "MTU_CONSISTENCY"
    REACHABILITY = "REACHABILITY"
    DIFFERENTIAL_REACHABILITY = "DIFFERENTIAL_REACHABILITY"
    LOOP_DETECTION = "LOOP_DETECTION"
    TRACEROUTE = "TRACEROUTE"
    ACL_SEARCH = "ACL_SEARCH"
    ACL_COMPARE = "ACL_COMPARE"
    SLA_VERIFY_SIM = "SLA_VERIFY_SIM"
    SLA_VERIFY_PREDICTOR = "SLA_VERIFY_PREDICTOR"
    CONFIG_ANOMALY = "CONFIG_ANOMALY"


# graph-query assertion usable in test plans; not one of the listed capabilities
NDM_QUERY = "NDM_QUERY"

PASS, FAIL, ERROR = "PASS", "FAIL", "ERROR"


@dataclass
class VerificationRequest:
    capability: str
    snapshots: list[str]
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"capability": self.capability, "snapshots": list(self.snapshots), "params": self.params}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> VerificationRequest:
        if not isinstance(d, Mapping) or "capability" not in d:
            raise InvalidParams("request needs a 'capability'")
        snaps = d.get("snapshots", [])
        if isinstance(snaps, str):
            snaps = [snaps]
        params = d.get("params", {})
        if not isinstance(params, Mapping):
            raise InvalidParams("params must be an object")
        return cls(str(d["capability"]), [str(s) for s in snaps], dict(params))


@dataclass
class VerificationResult:
    status: str
    findings: list[dict[str, Any]] = field(default_factory=list)
    evidence: dict[str, Any] = field(default_factory=dict)
    diagnostic: str | None = None
    duration: float = field(default=0.0, compare=False)

    def to_dict(self, with_duration: bool = True) -> dict[str, Any]:
        out = {
            "status": self.status,
            "findings": self.findings,
            "evidence": self.evidence,
            "diagnostic": self.diagnostic,
        }
        if with_duration:
            out["duration"] = self.duration
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> VerificationResult:
        return cls(d["status"], list(d.get("findings", [])), dict(d.get("evidence", {})), d.get("diagnostic"), d.get("duration", 0.0))


# --- parameter schemas --------------------------------------------------------------

_HEADERS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "src_ip": {"type": "string"},
        "protocol": {"enum": ["tcp", "udp", "icmp"]},
        "src_port": {"type": "integer", "minimum": 0, "maximum": 65535},
        "dst_port": {"type": "integer", "minimum": 0, "maximum": 65535},
    },
}
_PORTS = {
    "type": "array",
    "items": {
        "oneOf": [
            {"type": "integer", "minimum": 0, "maximum": 65535},
            {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 65535}, "minItems": 2, "maxItems": 2},
        ]
    },
}
_HEADER_SPACE = {
    "type": "object",
    "required": ["src_ips", "dst_ips"],
    "additionalProperties": False,
    "properties": {
        "src_ips": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "dst_ips": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "protocols": {"type": "array", "items": {"enum": ["tcp", "udp", "icmp"]}, "minItems": 1},
        "src_ports": _PORTS,
        "dst_ports": _PORTS,
    },
}
_PROBE = {
    "type": "object",
    "required": ["ingress", "dst_ip"],
    "additionalProperties": False,
    "properties": {"ingress": {"type": "string"}, "dst_ip": {"type": "string"}, **_HEADERS["properties"]},
}
_DISPOSITIONS = [d.value for d in Disposition]


def _obj(properties: dict[str, Any], required: list[str] | None = None) -> dict[str, Any]:
    return {"type": "object", "additionalProperties": False, "properties": properties, "required": required or []}


@dataclass(frozen=True)
class ToolSpec:
    capability: str
    description: str
    snapshots: int
    schema: dict[str, Any]
    example: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "capability": self.capability,
            "description": self.description,
            "snapshots": self.snapshots,
            "param_schema": self.schema,
            "example_params": self.example,
        }


TOOL_SPECS: list[ToolSpec] = [
    ToolSpec(
        Capability.MTU_CONSISTENCY.value,
        "Check all network links have same MTU. KG-based: compares the MTU of the two interfaces of every link.",
        1,
        _obj({}),
        {},
    ),
    ToolSpec(
        Capability.REACHABILITY.value,
        "Check that a source can reach a destination IP address. Strict: every ECMP branch must be delivered. "
        "FAIL when the result contradicts expect_reachable.",
        1,
        _obj(
            {
                "src": {"type": "string"},
                "dst_ip": {"type": "string"},
                "headers": _HEADERS,
                "expect_reachable": {"type": "boolean"},
            },
            ["src", "dst_ip"],
        ),
        {"src": "r1", "dst_ip": "10.0.0.1", "expect_reachable": True},
    ),
    ToolSpec(
        Capability.DIFFERENTIAL_REACHABILITY.value,
        "Check if two snapshots have same reachability properties. Probes default to every (device, owned address) pair.",
        2,
        _obj({"probes": {"type": "array", "items": _PROBE}}),
        {"probes": [{"ingress": "r1", "dst_ip": "10.0.0.1"}]},
    ),
    ToolSpec(
        Capability.LOOP_DETECTION.value,
        "Check for loops in the network topology. Walks the next-hop graph of every FIB prefix.",
        1,
        _obj({"prefixes": {"type": "array", "items": {"type": "string"}}}),
        {},
    ),
    ToolSpec(
        Capability.TRACEROUTE.value,
        "Simulate a traceroute from a source to a destination. Returns every ECMP branch; "
        "FAIL only when expect_disposition is given and the strict disposition differs.",
        1,
        _obj(
            {
                "src": {"type": "string"},
                "dst_ip": {"type": "string"},
                "headers": _HEADERS,
                "expect_disposition": {"enum": _DISPOSITIONS},
            },
            ["src", "dst_ip"],
        ),
        {"src": "r1", "dst_ip": "10.0.0.1"},
    ),
    ToolSpec(
        Capability.ACL_SEARCH.value,
        "Search ACL filters and outcomes. Finds packets of a bounded header space that receive the given action.",
        1,
        _obj(
            {
                "device": {"type": "string"},
                "acl": {"type": "string"},
                "header_space": _HEADER_SPACE,
                "action": {"enum": ["permit", "deny"]},
                "expect": {"enum": ["none", "some"]},
            },
            ["device", "acl", "header_space", "action", "expect"],
        ),
        {
            "device": "fw1",
            "acl": "edge",
            "header_space": {"src_ips": ["192.0.2.1/32"], "dst_ips": ["10.0.0.0/30"], "protocols": ["tcp"], "dst_ports": [443]},
            "action": "deny",
            "expect": "none",
        },
    ),
    ToolSpec(
        Capability.ACL_COMPARE.value,
        "Compare two snapshots for ACL filters and outcomes. Exhaustive over a bounded header space; "
        "without one, over one representative packet per equivalence class.",
        2,
        _obj(
            {"device": {"type": "string"}, "acl": {"type": "string"}, "header_space": _HEADER_SPACE},
            ["device", "acl"],
        ),
        {"device": "fw1", "acl": "edge"},
    ),
    ToolSpec(
        Capability.SLA_VERIFY_SIM.value,
        "Check if SLA is respected given a traffic demand. Fluid flow-level simulation of loss and delay.",
        1,
        _obj({"flows": {"type": "array", "items": {"type": "string"}}}),
        {},
    ),
    ToolSpec(
        Capability.SLA_VERIFY_PREDICTOR.value,
        "Check if SLA is respected given a traffic demand. Delegates to a registered learned predictor.",
        1,
        _obj({"flows": {"type": "array", "items": {"type": "string"}}}),
        {},
    ),
    ToolSpec(
        Capability.CONFIG_ANOMALY.value,
        "Check if configuration files exhibit anomalies. Simplified template rule: per role group, flag a device "
        "whose changed field deviates from the value the rest of its group shares.",
        2,
        _obj({"roles": {"type": "object", "additionalProperties": {"type": "string"}}}, ["roles"]),
        {"roles": {"r1": "core", "r2": "core", "r3": "core"}},
    ),
]

NDM_QUERY_SPEC = ToolSpec(
    NDM_QUERY,
    "Run a graph query and assert on the number of rows.",
    1,
    _obj(
        {
            "query": {"type": "object"},
            "expect_rows": {"oneOf": [{"enum": ["none", "some"]}, {"type": "integer", "minimum": 0}]},
        },
        ["query", "expect_rows"],
    ),
    {
        "query": {"start": {"layer": "DEVICE", "kind": "device", "where": []}, "expand": [], "project": ["hostname"], "limit": 10},
        "expect_rows": "some",
    },
)

_SPECS = {s.capability: s for s in TOOL_SPECS + [NDM_QUERY_SPEC]}


def list_tools() -> list[dict[str, Any]]:
    return [s.to_dict() for s in TOOL_SPECS]


def tool_spec(capability: str) -> ToolSpec:
    spec = _SPECS.get(normalize_capability(capability))
    if spec is None:
        raise InvalidParams(f"unknown capability {capability!r}")
    return spec


def normalize_capability(name: str) -> str:
    return str(name).strip().upper().replace("-", "_")


def validate_request(req: VerificationRequest) -> ToolSpec:
    spec = tool_spec(req.capability)
    if len(req.snapshots) != spec.snapshots:
        raise InvalidParams(f"{spec.capability} needs exactly {spec.snapshots} snapshot(s), got {len(req.snapshots)}")
    errors = sorted(jsonschema.Draft7Validator(spec.schema).iter_errors(req.params), key=lambda e: list(map(str, e.path)))
    if errors:
        raise InvalidParams("; ".join(f"{'/'.join(map(str, e.path)) or 'params'}: {e.message}" for e in errors))
    return spec


# --- predictor plug-in ----------------------------------------------------------------

Predictor = Callable[[Dataplane], list[FlowResult]]
_predictor: Predictor | None = None


def register_predictor(predictor: Predictor | None) -> None:
    """Install (or with None remove) the learned SLA predictor backend."""
    global _predictor
    _predictor = predictor


# --- capability implementations --------------------------------------------------------


def mtu_consistency(repo: Repository, ref: str) -> list[dict[str, Any]]:
    """CONNECT-ed interface pairs whose MTUs differ; answered from the KG alone."""
    q = GraphQuery(
        StartClause(LayerId.INTERFACES, "interface"),
        (ExpandStep(EdgeKind.CONNECT, "out", LayerId.INTERFACES, "interface"),),
        ("0.device", "0.name", "0.mtu", "1.device", "1.name", "1.mtu"),
        limit=1_000_000,
    )
    findings = []
    for row in execute(repo.view(ref), q):
        if row["0.mtu"] != row["1.mtu"]:
            findings.append(
                {
                    "kind": "mtu_mismatch",
                    "a": {"device": row["0.device"], "interface": row["0.name"], "mtu": row["0.mtu"]},
                    "b": {"device": row["1.device"], "interface": row["1.name"], "mtu": row["1.mtu"]},
                }
            )
    return findings


def _flatten(value: Any, path: str, out: dict[str, Any]) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(v, f"{path}.{k}" if path else k, out)
    elif isinstance(value, list):
        for i, item in enumerate(value):
            _flatten(item, f"{path}[{_list_key(item, i)}]", out)
    else:
        out[path] = value


def _list_key(item: Any, index: int) -> str:
    if isinstance(item, dict):
        for key in ("name", "process_id", "seq", "prefix", "from_process"):
            if key in item:
                return str(item[key])
        if "interface" in item and "direction" in item:
            return f"{item['interface']}:{item['direction']}"
    return str(index)


def config_fields(repo: Repository, ref: str) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for node in repo.nodes(ref, LayerId.RAW_CONFIG):
        flat: dict[str, Any] = {}
        data = json.loads(node.attrs["text"])
        data.pop("hostname", None)
        _flatten(data, "", flat)
        out[node.device] = flat
    return out


_MISSING = object()


def config_anomaly(repo: Repository, ref_a: str, ref_b: str, roles: Mapping[str, str]) -> tuple[list[dict[str, Any]], list[str]]:
    """Template/outlier rule over RAW_CONFIG field paths; returns (findings, notices)."""
    fields_a = config_fields(repo, ref_a)
    fields_b = config_fields(repo, ref_b)
    unknown = sorted(d for d in roles if d not in fields_a and d not in fields_b)
    if unknown:
        raise UnknownDevice(f"unknown device(s) in role map: {', '.join(unknown)}")
    groups: dict[str, list[str]] = {}
    for device, role in sorted(roles.items()):
        groups.setdefault(role, []).append(device)
    findings, notices = [], []
    for role, members in sorted(groups.items()):
        if len(members) < 3:
            notices.append(f"role {role!r} has {len(members)} device(s); at least 3 needed, skipped")
            continue
        paths = sorted(set().union(*(fields_a.get(d, {}).keys() for d in members)))
        for path in paths:
            values = [fields_a.get(d, {}).get(path, _MISSING) for d in members]
            template = _template(values, len(members) - 1)
            if template is _MISSING:
                continue
            for device in members:
                before = fields_a.get(device, {}).get(path, _MISSING)
                after = fields_b.get(device, {}).get(path, _MISSING)
                if after == template or after == before:
                    continue
                others = [fields_b.get(o, {}).get(path, _MISSING) for o in members if o != device]
                if all(v == template for v in others):
                    findings.append(
                        {
                            "kind": "config_outlier",
                            "role": role,
                            "device": device,
                            "path": path,
                            "template": template,
                            "observed": None if after is _MISSING else after,
                        }
                    )
    return findings, notices


def _template(values: list[Any], quorum: int) -> Any:
    counts: dict[str, tuple[int, Any]] = {}
    for v in values:
        if v is _MISSING:
            continue
        key = json.dumps(v, sort_keys=True)
        n, _ = counts.get(key, (0, v))
        counts[key] = (n + 1, v)
    for n, v in counts.values():
        if n >= quorum:
            return v
    return _MISSING


def graph_query(repo: Repository, ref: str, query: GraphQuery | Mapping[str, Any]) -> list[dict[str, Any]]:
    """Run a query, materialising the derived ROUTING layer first when the query touches it."""
    if not isinstance(query, GraphQuery):
        query = GraphQuery.from_dict(query)
    if query.start.layer == LayerId.ROUTING or any(s.layer == LayerId.ROUTING for s in query.expand):
        dataplane_for(repo, ref)
    return execute(repo.view(ref), query)


def _headers(params: Mapping[str, Any]) -> dict[str, Any]:
    return dict(params.get("headers", {}))


def _trace_finding(kind: str, src: str, dst: str, trace) -> dict[str, Any]:
    return {"kind": kind, "src": src, "dst_ip": dst, "disposition": trace.disposition.value, "path": trace.devices()}


def _run(repo: Repository, spec: ToolSpec, snaps: list[str], params: dict[str, Any]) -> VerificationResult:
    cap = spec.capability
    if cap == Capability.MTU_CONSISTENCY.value:
        findings = mtu_consistency(repo, snaps[0])
        return VerificationResult(FAIL if findings else PASS, findings, {"mismatches": len(findings)})

    if cap == NDM_QUERY:
        try:
            rows = graph_query(repo, snaps[0], params["query"])
        except InvalidQuery as exc:
            raise InvalidParams(str(exc)) from None
        expect = params["expect_rows"]
        ok = (expect == "none" and not rows) or (expect == "some" and bool(rows)) or (isinstance(expect, int) and not isinstance(expect, bool) and len(rows) == expect)
        findings = [] if ok else [{"kind": "row_count", "expected": expect, "observed": len(rows)}]
        return VerificationResult(PASS if ok else FAIL, findings, {"rows": rows})

    if cap in (Capability.REACHABILITY.value, Capability.TRACEROUTE.value):
        dp = dataplane_for(repo, snaps[0])
        if params["src"] not in dp.devices:
            raise UnknownDevice(f"unknown device {params['src']!r}")
        result = reachability(dp, params["src"], params["dst_ip"], _headers(params))
        evidence = result.to_dict()
        if cap == Capability.TRACEROUTE.value:
            expected = params.get("expect_disposition")
            if expected is None or expected == result.disposition.value:
                return VerificationResult(PASS, [], evidence)
            findings = [
                {"kind": "disposition", "expected": expected, "observed": result.disposition.value, "src": params["src"], "dst_ip": params["dst_ip"]}
            ]
            return VerificationResult(FAIL, findings, evidence)
        expect = params.get("expect_reachable", True)
        if result.reachable == expect:
            return VerificationResult(PASS, [], evidence)
        if expect:
            findings = [
                _trace_finding("unreachable_branch", params["src"], params["dst_ip"], t)
                for t in result.traces
                if t.disposition != Disposition.DELIVERED
            ]
        else:
            findings = [{"kind": "unexpectedly_reachable", "src": params["src"], "dst_ip": params["dst_ip"], "paths": [t.devices() for t in result.traces]}]
        return VerificationResult(FAIL, findings, evidence)

    if cap == Capability.DIFFERENTIAL_REACHABILITY.value:
        a, b = dataplane_for(repo, snaps[0]), dataplane_for(repo, snaps[1])
        probes = [PacketSpec.from_dict(p) for p in params["probes"]] if "probes" in params else None
        diffs = differential_reachability(a, b, probes)
        findings = [{"kind": "reachability_change", **d.to_dict()} for d in diffs]
        probe_count = len(probes) if probes is not None else None
        return VerificationResult(FAIL if findings else PASS, findings, {"differences": len(findings), "probes": probe_count})

    if cap == Capability.LOOP_DETECTION.value:
        dp = dataplane_for(repo, snaps[0])
        loops = detect_loops(dp, params.get("prefixes"))
        findings = [{"kind": "forwarding_loop", **l.to_dict()} for l in loops]
        return VerificationResult(FAIL if findings else PASS, findings, {"converged": dp.converged, "loops": len(findings)})

    if cap == Capability.ACL_SEARCH.value:
        dp = dataplane_for(repo, snaps[0])
        acl = dp.acl(params["device"], params["acl"])
        space = HeaderSpace.from_dict(params["header_space"])
        count, sample = acl_search(acl, space, params["action"])
        evidence = {"matches": count, "sample": [p.to_dict() for p in sample]}
        if params["expect"] == "none" and count:
            findings = [{"kind": "acl_match", "action": params["action"], "packet": p.to_dict()} for p in sample]
            return VerificationResult(FAIL, findings, evidence)
        if params["expect"] == "some" and not count:
            return VerificationResult(FAIL, [{"kind": "acl_no_match", "action": params["action"]}], evidence)
        return VerificationResult(PASS, [], evidence)

    if cap == Capability.ACL_COMPARE.value:
        a, b = dataplane_for(repo, snaps[0]), dataplane_for(repo, snaps[1])
        acl_a, acl_b = a.acl(params["device"], params["acl"]), b.acl(params["device"], params["acl"])
        space = HeaderSpace.from_dict(params["header_space"]) if "header_space" in params else None
        witnesses = acl_compare(acl_a, acl_b, space)
        findings = [{"kind": "acl_difference", **w.to_dict()} for w in witnesses]
        return VerificationResult(FAIL if findings else PASS, findings, {"witnesses": len(findings), "exhaustive": space is not None})

    if cap in (Capability.SLA_VERIFY_SIM.value, Capability.SLA_VERIFY_PREDICTOR.value):
        dp = dataplane_for(repo, snaps[0])
        demands = dp.spec.demands
        if "flows" in params:
            wanted = set(params["flows"])
            demands = [d for d in demands if d.flow_id in wanted]
        if cap == Capability.SLA_VERIFY_PREDICTOR.value:
            if _predictor is None:
                return VerificationResult(ERROR, [], {}, "predictor not registered")
            flows = [f for f in _predictor(dp) if f.flow_id in {d.flow_id for d in demands}]
        else:
            flows = simulate(dp, demands).flows
        violations = check_sla(flows, dp.spec.sla)
        findings = [{"kind": "sla_violation", **v.to_dict()} for v in violations]
        return VerificationResult(FAIL if findings else PASS, findings, {"flows": [f.to_dict() for f in flows]})

    if cap == Capability.CONFIG_ANOMALY.value:
        findings, notices = config_anomaly(repo, snaps[0], snaps[1], params["roles"])
        return VerificationResult(FAIL if findings else PASS, findings, {"notices": notices})

    raise InvalidParams(f"unknown capability {cap!r}")


def call_tool(repo: Repository, req: VerificationRequest | Mapping[str, Any]) -> VerificationResult:
    """Validate and dispatch one request.

    InvalidParams and UnknownSnapshot propagate; failures inside a capability are
    wrapped as ToolError.
    """
    if not isinstance(req, VerificationRequest):
        req = VerificationRequest.from_dict(req)
    spec = validate_request(req)
    snaps = [repo.resolve(s) for s in req.snapshots]
    started = time.perf_counter()
    try:
        result = _run(repo, spec, snaps, req.params)
    except (InvalidParams, UnknownSnapshot):
        raise
    except TwinError as exc:
        raise ToolError(f"{spec.capability}: {exc}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise ToolError(f"{spec.capability}: {type(exc).__name__}: {exc}") from exc
    result.duration = time.perf_counter() - started
    return result


def error_result(exc: Exception) -> VerificationResult:
    return VerificationResult(ERROR, [], {}, f"{type(exc).__name__}: {exc}")


__all__ = [
    "Capability",
    "NDM_QUERY",
    "ToolSpec",
    "VerificationRequest",
    "VerificationResult",
    "call_tool",
    "config_anomaly",
    "error_result",
    "graph_query",
    "list_tools",
    "mtu_consistency",
    "register_predictor",
    "tool_spec",
    "validate_request",
]
