"""ReAct loop: roles, actions, transcripts and the tool dispatch table."""

from __future__ import annotations

import copy
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Protocol

from ..errors import BudgetExhausted, UnknownTool
from ..tools import NDM_QUERY, Capability

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 16


class AgentRole(str, Enum):
    ASSISTANT = "ASSISTANT"
    NDM_QUERY = "NDM_QUERY"
    IMPACT = "IMPACT"
    TEST_PLANNER = "TEST_PLANNER"
    TEST_EXECUTOR = "TEST_EXECUTOR"


VERIFY_TOOLS = frozenset({c.value for c in Capability} | {NDM_QUERY})

ROLE_TOOLS: dict[AgentRole, frozenset[str]] = {
    AgentRole.ASSISTANT: frozenset(
        {"ticket_store", "change_repo", "agent_ndm_query", "agent_impact", "agent_test_planner", "agent_test_executor"}
    ),
    AgentRole.NDM_QUERY: frozenset({"graph_query", "kg_schema"}),
    AgentRole.IMPACT: frozenset({"graph_query", "impact_helper"}),
    AgentRole.TEST_PLANNER: frozenset({"graph_query"}),
    AgentRole.TEST_EXECUTOR: frozenset({"graph_query"}) | VERIFY_TOOLS,
}


@dataclass(frozen=True)
class Action:
    kind: str  # TOOL_CALL | FINAL
    tool: str | None = None
    params: Mapping[str, Any] = field(default_factory=dict)
    answer: Any = None
    thought: str = ""

    @classmethod
    def call(cls, tool: str, params: Mapping[str, Any], thought: str = "") -> Action:
        return cls("TOOL_CALL", tool, dict(params), None, thought)

    @classmethod
    def final(cls, answer: Any, thought: str = "") -> Action:
        return cls("FINAL", None, {}, answer, thought)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "FINAL":
            return {"kind": "FINAL", "answer": self.answer}
        return {"kind": "TOOL_CALL", "tool": self.tool, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Action:
        kind = str(d.get("kind", d.get("action", ""))).upper()
        if kind == "FINAL":
            return cls.final(d.get("answer"), d.get("thought", ""))
        if kind == "TOOL_CALL":
            return cls.call(str(d.get("tool")), d.get("params", {}) or {}, d.get("thought", ""))
        raise ValueError(f"unknown action kind {kind!r}")


@dataclass
class ReactStep:
    thought: str
    action: Action
    observation: Any = None

    def to_dict(self) -> dict[str, Any]:
        return {"thought": self.thought, "action": self.action.to_dict(), "observation": self.observation}


@dataclass
class ReactState:
    role: AgentRole
    goal: str
    context: dict[str, Any]
    inputs: dict[str, Any]
    steps: list[ReactStep] = field(default_factory=list)
    budget: int = DEFAULT_BUDGET

    def observations(self) -> list[Any]:
        return [s.observation for s in self.steps if s.action.kind == "TOOL_CALL"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "role": self.role.value,
            "goal": self.goal,
            "context": self.context,
            "inputs": self.inputs,
            "steps": [s.to_dict() for s in self.steps],
            "budget": self.budget,
        }


class Policy(Protocol):
    def next_action(self, role: AgentRole, state: ReactState) -> Action: ...


Tool = Callable[[Mapping[str, Any]], Any]


class WorkingMemory:
    """Shared transcript store keyed by ticket id."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._items: dict[str, list[dict[str, Any]]] = {}

    def record(self, ticket: str, state: ReactState) -> None:
        with self._lock:
            self._items.setdefault(ticket, []).append(state.to_dict())

    def transcripts(self, ticket: str) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._items.get(ticket, []))


@dataclass
class AgentRun:
    answer: Any
    state: ReactState


def error_text(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


def is_error(observation: Any) -> bool:
    return isinstance(observation, str)


def run_agent(
    role: AgentRole,
    payload: Mapping[str, Any],
    policy: Policy,
    context: Mapping[str, Any],
    tools: Mapping[str, Tool],
    budget: int = DEFAULT_BUDGET,
    goal: str = "",
    memory: WorkingMemory | None = None,
) -> AgentRun:
    """Drive ``policy`` until it emits FINAL.

    Tool failures and calls outside the role's tool set become text observations;
    running out of budget raises BudgetExhausted carrying the transcript in ``state``.
    """
    state = ReactState(role, goal or role.value.lower(), dict(context), copy.deepcopy(dict(payload)), [], budget)
    allowed = ROLE_TOOLS[role]
    ticket = str(context.get("ticket", ""))
    try:
        while len(state.steps) < budget:
            action = policy.next_action(role, state)
            if action.kind == "FINAL":
                state.steps.append(ReactStep(action.thought, action, None))
                return AgentRun(action.answer, state)
            if action.tool not in allowed or action.tool not in tools:
                observation: Any = error_text(UnknownTool(f"{action.tool!r} is not available to {role.value}"))
            else:
                try:
                    observation = tools[action.tool](action.params)
                except Exception as exc:  # the observation carries the failure back to the policy
                    observation = error_text(exc)
            log.debug("%s step %d %s", role.value, len(state.steps), action.tool)
            state.steps.append(ReactStep(action.thought, action, observation))
        exc = BudgetExhausted(f"{role.value} used all {budget} steps without a final answer")
        exc.state = state  # type: ignore[attr-defined]
        raise exc
    finally:
        if memory is not None and ticket:
            memory.record(ticket, state)
