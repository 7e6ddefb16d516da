"""Reasoning policies: a deterministic rule table and a remote chat-completion client."""

from __future__ import annotations

import configparser
import json
import logging
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from ..tools import tool_spec
from .core import ROLE_TOOLS, Action, AgentRole, ReactState, is_error
from .plans import RISK_NOTES, template_plan

log = logging.getLogger(__name__)


def _mtu_not(args: Mapping[str, Any]) -> dict[str, Any]:
    return {
        "start": {"layer": "INTERFACES", "kind": "interface", "where": [{"attr": "mtu", "op": "ne", "value": args["value"]}]},
        "project": ["device", "name", "mtu"],
        "limit": 1000,
    }


def _devices(args: Mapping[str, Any]) -> dict[str, Any]:
    return {"start": {"layer": "DEVICE", "kind": "device", "where": []}, "project": ["hostname"], "limit": 1000}


def _rib(args: Mapping[str, Any]) -> dict[str, Any]:
    where = [{"attr": "device", "op": "eq", "value": args["device"]}]
    if "prefix" in args:
        where.append({"attr": "prefix", "op": "eq", "value": args["prefix"]})
    return {
        "start": {"layer": "ROUTING", "kind": "rib-entry", "where": where},
        "project": ["device", "prefix", "protocol", "next_hops"],
        "limit": 1000,
    }


def _acl_rules(args: Mapping[str, Any]) -> dict[str, Any]:
    where = [{"attr": "device", "op": "eq", "value": args["device"]}, {"attr": "acl", "op": "eq", "value": args["acl"]}]
    return {
        "start": {"layer": "ACL", "kind": "acl-rule", "where": where},
        "project": ["seq", "action", "protocol", "src_prefix", "dst_prefix", "dst_port_lo", "dst_port_hi"],
        "limit": 1000,
    }


# question template -> GraphQuery builder
QUESTION_TEMPLATES = {
    "interfaces_mtu_not": _mtu_not,
    "devices": _devices,
    "rib_entries": _rib,
    "acl_rules": _acl_rules,
}


class ScriptedPolicy:
    """Pure rule table over (role, state); consumes structured inputs only."""

    def next_action(self, role: AgentRole, state: ReactState) -> Action:
        return getattr(self, f"_{role.value.lower()}")(state)

    def _ndm_query(self, state: ReactState) -> Action:
        obs = state.observations()
        if not obs:
            inputs = state.inputs
            if "query" in inputs:
                query = inputs["query"]
            else:
                builder = QUESTION_TEMPLATES.get(str(inputs.get("template")))
                if builder is None:
                    return Action.final({"error": f"no rule for question template {inputs.get('template')!r}"})
                query = builder(inputs)
            snapshot = inputs.get("snapshot", state.context.get("snapshot"))
            return Action.call("graph_query", {"snapshot": snapshot, "query": query}, "answer with one graph query")
        if is_error(obs[-1]):
            return Action.final({"error": obs[-1]})
        return Action.final({"rows": obs[-1]["rows"]})

    def _impact(self, state: ReactState) -> Action:
        obs = state.observations()
        if not obs:
            params = {"production": state.context["production"], "candidate": state.context["candidate"]}
            return Action.call("impact_helper", params, "diff the candidate against production")
        if is_error(obs[-1]):
            return Action.final({"error": obs[-1]})
        category = state.inputs["descriptor"]["category"]
        notes = [RISK_NOTES[category]] if obs[-1]["changed"] and category in RISK_NOTES else []
        return Action.final({**obs[-1], "risk_notes": notes})

    def _test_planner(self, state: ReactState) -> Action:
        descriptor = state.inputs["descriptor"]
        plan = template_plan(descriptor["category"], descriptor.get("scope", {}))
        obs = state.observations()
        if not obs:
            query = QUESTION_TEMPLATES["devices"]({})
            return Action.call("graph_query", {"snapshot": state.context["production"], "query": query}, "ground scope in inventory")
        if is_error(obs[-1]):
            return Action.final({"error": obs[-1]})
        return Action.final({"plan": [t.to_dict() for t in plan]})

    def _test_executor(self, state: ReactState) -> Action:
        plan = state.inputs["plan"]
        obs = state.observations()
        if len(obs) < len(plan):
            test = plan[len(obs)]
            spec = tool_spec(test["capability"])
            snaps = [state.context["production"], state.context["candidate"]] if spec.snapshots == 2 else [state.context["candidate"]]
            return Action.call(spec.capability, {"snapshots": snaps, "params": test["params"]}, f"run {test['id']}")
        return Action.final({"results": [{"test": t["id"], "observation": o} for t, o in zip(plan, obs)]})

    def _assistant(self, state: ReactState) -> Action:
        obs = state.observations()
        stages = ("agent_impact", "agent_test_planner", "agent_test_executor")
        if obs and is_error(obs[-1]):
            return Action.final({"error": stages[len(obs) - 1], "diagnostic": obs[-1]})
        descriptor = state.inputs["descriptor"]
        if len(obs) == 0:
            return Action.call("agent_impact", {"descriptor": descriptor}, "assess impact")
        if len(obs) == 1:
            return Action.call("agent_test_planner", {"descriptor": descriptor, "impact": obs[0]}, "plan tests")
        if len(obs) == 2:
            return Action.call("agent_test_executor", {"plan": obs[1]["plan"]}, "execute plan")
        return Action.final({"impact": obs[0], "plan": obs[1]["plan"], "results": obs[2]["results"]})


# --- remote policy -----------------------------------------------------------------------

CONFIG_DEFAULTS = {"url": "http://127.0.0.1:8000/v1/chat", "timeout": "30", "retries": "2"}


@dataclass(frozen=True)
class RemoteConfig:
    url: str
    timeout: float = 30.0
    retries: int = 2

    @classmethod
    def load(cls, path: str | Path | None = None, section: str = "remote") -> RemoteConfig:
        parser = configparser.ConfigParser()
        parser.read_dict({section: CONFIG_DEFAULTS})
        if path is not None:
            parser.read(path, encoding="utf-8")
        s = parser[section]
        return cls(s.get("url"), s.getfloat("timeout"), s.getint("retries"))


def render_messages(role: AgentRole, state: ReactState) -> list[dict[str, str]]:
    system = (
        f"You are the {role.value} agent of a network change validation workflow. "
        f"Tools: {', '.join(sorted(ROLE_TOOLS[role]))}. Reply with one JSON object: "
        '{"kind": "TOOL_CALL", "tool": ..., "params": {...}, "thought": ...} or {"kind": "FINAL", "answer": ...}.'
    )
    messages = [
        {"role": "system", "content": system},
        {"role": "user", "content": json.dumps({"goal": state.goal, "context": state.context, "inputs": state.inputs}, sort_keys=True)},
    ]
    for step in state.steps:
        messages.append({"role": "assistant", "content": json.dumps({**step.action.to_dict(), "thought": step.thought}, sort_keys=True)})
        messages.append({"role": "user", "content": "Observation: " + json.dumps(step.observation, sort_keys=True)})
    return messages


def parse_completion(text: str) -> Action:
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end < start:
        raise ValueError("completion contains no JSON object")
    return Action.from_dict(json.loads(text[start : end + 1]))


class RemotePolicy:
    """Sends the transcript as an ordered message list and parses one completion."""

    def __init__(self, config: RemoteConfig):
        self.config = config

    def complete(self, messages: list[dict[str, str]]) -> str:
        body = json.dumps({"messages": messages}).encode("utf-8")
        last: Exception | None = None
        for attempt in range(self.config.retries + 1):
            req = urllib.request.Request(self.config.url, body, {"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=self.config.timeout) as resp:
                    raw = resp.read().decode("utf-8")
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                last = exc
                log.warning("remote policy attempt %d failed: %s", attempt + 1, exc)
                time.sleep(min(0.1 * 2**attempt, 2.0))
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError:
                return raw
            return data.get("content", raw) if isinstance(data, dict) else raw
        raise ConnectionError(f"remote policy unreachable after {self.config.retries + 1} attempts: {last}")

    def next_action(self, role: AgentRole, state: ReactState) -> Action:
        return parse_completion(self.complete(render_messages(role, state)))


def make_policy(name: str, config_path: str | Path | None = None) -> ScriptedPolicy | RemotePolicy:
    if name == "scripted":
        return ScriptedPolicy()
    if name == "remote":
        return RemotePolicy(RemoteConfig.load(config_path))
    raise ValueError(f"unknown policy {name!r}")
