"""Test specs, the expectation mini-grammar, and category plan templates.

Scope keys consumed by the templates (all optional unless a category needs them):

    reach                  [{src, dst_ip, expect_reachable?}]
    regression_probes      [{ingress, dst_ip, ...}] for DIFFERENTIAL_REACHABILITY
    acls                   [{device, acl}]
    preserve_semantics     bool, adds ACL_COMPARE per ACL
    block / protect        [{label, header_space}]: space that must not be permitted / denied
    redistribution_devices [device]
    summaries              [prefix]; observers [device]; suppressed [prefix]
    flows                  [flow_id] for SLA_VERIFY_SIM
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from ..errors import InvalidParams, UnknownCategory
from ..tools import NDM_QUERY, VerificationRequest, tool_spec, validate_request

CATEGORIES = (
    "ACL_CHANGE",
    "ROUTE_CHANGE",
    "REDISTRIBUTION",
    "SUMMARIZATION",
    "MTU",
    "MIGRATION",
    "VLAN",
    "LINK_MIGRATION",
)

DEFAULT_EXPECTATION = "status == PASS"


@dataclass(frozen=True)
class TestSpec:
    __test__ = False  # not a pytest class

    id: str
    requirement_id: str
    capability: str
    params: Mapping[str, Any] = field(default_factory=dict)
    expectation: str = DEFAULT_EXPECTATION

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "requirement_id": self.requirement_id,
            "capability": self.capability,
            "params": dict(self.params),
            "expectation": self.expectation,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TestSpec:
        return cls(
            str(d["id"]),
            str(d.get("requirement_id", "none")),
            str(d["capability"]),
            dict(d.get("params", {})),
            str(d.get("expectation", DEFAULT_EXPECTATION)),
        )


TestPlan = list[TestSpec]


def validate_plan(plan: TestPlan) -> None:
    """Every spec must pass its tool schema and carry a parseable expectation; ids unique."""
    ids = [t.id for t in plan]
    if len(set(ids)) != len(ids):
        raise InvalidParams("duplicate test ids in plan")
    for test in plan:
        spec = tool_spec(test.capability)
        validate_request(VerificationRequest(spec.capability, ["_"] * spec.snapshots, dict(test.params)))
        parse_expectation(test.expectation)


# --- expectations ----------------------------------------------------------------------
#
# expectation := clause ("and" clause)*
# clause      := field op literal        op in == != >= <= > <
# field       := "status" | "findings" (count) | an evidence key (lists compare by length)
# literal     := true | false | null | integer | number | bare word

_CLAUSE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*(==|!=|>=|<=|>|<)\s*(\S+)\s*$")


@dataclass(frozen=True)
class Clause:
    field: str
    op: str
    value: Any


def _literal(text: str) -> Any:
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("null", "none"):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_expectation(text: str) -> list[Clause]:
    clauses = []
    for part in re.split(r"\s+and\s+", text.strip()):
        m = _CLAUSE.match(part)
        if m is None:
            raise InvalidParams(f"bad expectation clause {part!r}")
        clauses.append(Clause(m.group(1), m.group(2), _literal(m.group(3))))
    return clauses


def _field(result: Mapping[str, Any], name: str) -> Any:
    if name == "status":
        return result.get("status")
    if name == "findings":
        return len(result.get("findings", []))
    value = result.get("evidence", {}).get(name)
    return len(value) if isinstance(value, list) else value


_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
}


def expectation_holds(text: str, result: Mapping[str, Any]) -> bool:
    for clause in parse_expectation(text):
        actual = _field(result, clause.field)
        try:
            if not _OPS[clause.op](actual, clause.value):
                return False
        except TypeError:
            return False
    return True


# --- templates ---------------------------------------------------------------------------


def _query(layer: str, kind: str, where: list[dict[str, Any]], project: list[str]) -> dict[str, Any]:
    return {"start": {"layer": layer, "kind": kind, "where": where}, "expand": [], "project": project, "limit": 1000}


def _eq(attr: str, value: Any) -> dict[str, Any]:
    return {"attr": attr, "op": "eq", "value": value}


class _Builder:
    def __init__(self) -> None:
        self.tests: list[TestSpec] = []

    def add(self, requirement: str, capability: str, params: Mapping[str, Any], expectation: str = DEFAULT_EXPECTATION) -> None:
        self.tests.append(TestSpec(f"T{len(self.tests) + 1}", requirement, capability, dict(params), expectation))


def _reach(b: _Builder, scope: Mapping[str, Any]) -> None:
    for item in scope.get("reach", []):
        expect = bool(item.get("expect_reachable", True))
        b.add(
            f"reach:{item['src']}->{item['dst_ip']}",
            "REACHABILITY",
            {"src": item["src"], "dst_ip": item["dst_ip"], "expect_reachable": expect},
        )


def _loops(b: _Builder, scope: Mapping[str, Any]) -> None:
    b.add("loop-free", "LOOP_DETECTION", {})


def _regression(b: _Builder, scope: Mapping[str, Any]) -> None:
    probes = scope.get("regression_probes")
    b.add("regression", "DIFFERENTIAL_REACHABILITY", {"probes": list(probes)} if probes is not None else {})


def _acl(b: _Builder, scope: Mapping[str, Any]) -> None:
    for ref in scope.get("acls", []):
        dev, acl = ref["device"], ref["acl"]
        if scope.get("preserve_semantics"):
            b.add(f"acl-equivalent:{dev}/{acl}", "ACL_COMPARE", {"device": dev, "acl": acl})
        for item in scope.get("block", []):
            b.add(
                f"acl-blocks:{dev}/{acl}:{item['label']}",
                "ACL_SEARCH",
                {"device": dev, "acl": acl, "header_space": item["header_space"], "action": "permit", "expect": "none"},
            )
        for item in scope.get("protect", []):
            b.add(
                f"acl-preserves:{dev}/{acl}:{item['label']}",
                "ACL_SEARCH",
                {"device": dev, "acl": acl, "header_space": item["header_space"], "action": "deny", "expect": "none"},
            )


def _redistribution(b: _Builder, scope: Mapping[str, Any]) -> None:
    for dev in scope.get("redistribution_devices", []):
        b.add(
            f"redistribution-active:{dev}",
            NDM_QUERY,
            {"query": _query("ROUTING", "igp-redistribution", [_eq("device", dev)], ["device", "name", "metric_type"]), "expect_rows": "some"},
        )


def _summaries(b: _Builder, scope: Mapping[str, Any]) -> None:
    project = ["device", "prefix", "protocol"]
    for obs in scope.get("observers", []):
        for prefix in scope.get("summaries", []):
            b.add(
                f"summary-advertised:{prefix}@{obs}",
                NDM_QUERY,
                {"query": _query("ROUTING", "rib-entry", [_eq("device", obs), _eq("prefix", prefix)], project), "expect_rows": "some"},
            )
        for prefix in scope.get("suppressed", []):
            b.add(
                f"specific-suppressed:{prefix}@{obs}",
                NDM_QUERY,
                {"query": _query("ROUTING", "rib-entry", [_eq("device", obs), _eq("prefix", prefix)], project), "expect_rows": "none"},
            )


def _mtu(b: _Builder, scope: Mapping[str, Any]) -> None:
    b.add("mtu-consistent", "MTU_CONSISTENCY", {})


def _sla(b: _Builder, scope: Mapping[str, Any]) -> None:
    flows = scope.get("flows")
    b.add("sla", "SLA_VERIFY_SIM", {"flows": list(flows)} if flows is not None else {})


TEMPLATES: dict[str, tuple[Callable[[_Builder, Mapping[str, Any]], None], ...]] = {
    "ACL_CHANGE": (_acl, _reach, _regression),
    "ROUTE_CHANGE": (_reach, _loops, _regression),
    "REDISTRIBUTION": (_loops, _reach, _redistribution, _regression),
    "SUMMARIZATION": (_reach, _summaries, _loops, _regression),
    "MTU": (_mtu, _regression),
    "MIGRATION": (_reach, _loops, _regression),
    "VLAN": (_reach, _regression),
    "LINK_MIGRATION": (_sla, _reach, _regression),
}

RISK_NOTES: dict[str, str] = {
    "ACL_CHANGE": "filter edits can change which flows reach routed destinations",
    "ROUTE_CHANGE": "next-hop edits can blackhole or loop traffic for the prefix",
    "REDISTRIBUTION": "mutual redistribution can re-import routes into their origin domain",
    "SUMMARIZATION": "a summary without backing specifics discards traffic",
    "MTU": "mismatched link MTU silently drops large frames",
    "MIGRATION": "partially applied re-addressing breaks next-hop resolution",
    "VLAN": "partially applied re-addressing breaks next-hop resolution",
    "LINK_MIGRATION": "lower capacity on a shared path can violate flow SLAs",
}


def template_plan(category: str, scope: Mapping[str, Any]) -> TestPlan:
    steps = TEMPLATES.get(category)
    if steps is None:
        raise UnknownCategory(f"no test template for category {category!r}")
    b = _Builder()
    for step in steps:
        step(b, scope)
    return b.tests
