"""Change-validation workflow: impact, planning, execution and the verdict gate."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..errors import ToolError, TwinError
from ..schema import schema_describe
from ..snapshots import Repository, cell_key, dependency_closure, sort_cells
from ..tools import ERROR, call_tool, graph_query
from .core import VERIFY_TOOLS, AgentRole, Policy, Tool, WorkingMemory, error_text, run_agent
from .plans import TestPlan, TestSpec, expectation_holds, validate_plan
from .policy import ScriptedPolicy
from .tickets import TicketStore

log = logging.getLogger(__name__)

APPROVED = "APPROVED_FOR_REVIEW"
BLOCKED = "BLOCKED"
PASSED, FAILED = "PASSED", "FAILED"


@dataclass
class ChangeDescriptor:
    ticket: str
    intent: str
    category: str
    scope: dict[str, Any] = field(default_factory=dict)
    candidate: str | None = None
    production: str = "main"

    def to_dict(self) -> dict[str, Any]:
        return {
            "ticket": self.ticket,
            "intent": self.intent,
            "category": self.category,
            "scope": self.scope,
            "candidate": self.candidate,
            "production": self.production,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ChangeDescriptor:
        return cls(
            str(d["ticket"]),
            str(d.get("intent", "")),
            str(d["category"]),
            dict(d.get("scope", {})),
            d.get("candidate"),
            str(d.get("production", "main")),
        )


@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    test: str
    requirement_id: str
    capability: str
    outcome: str  # PASSED | FAILED | ERROR
    status: str | None
    findings: list[dict[str, Any]] = field(default_factory=list)
    diagnostic: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "test": self.test,
            "requirement_id": self.requirement_id,
            "capability": self.capability,
            "outcome": self.outcome,
            "status": self.status,
            "findings": self.findings,
            "diagnostic": self.diagnostic,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TestResult:
        return cls(
            d["test"],
            d.get("requirement_id", "none"),
            d["capability"],
            d["outcome"],
            d.get("status"),
            list(d.get("findings", [])),
            d.get("diagnostic"),
        )


def verdict_for(results: list[TestResult]) -> str:
    return BLOCKED if any(r.outcome != PASSED for r in results) else APPROVED


@dataclass
class ValidationReport:
    ticket: str
    impact: dict[str, Any]
    plan: list[dict[str, Any]]
    results: list[TestResult]
    verdict: str
    diagnostic: str | None = None
    timings: dict[str, float] = field(default_factory=dict, compare=False)

    def to_dict(self, with_timings: bool = True) -> dict[str, Any]:
        out = {
            "ticket": self.ticket,
            "impact": self.impact,
            "plan": self.plan,
            "results": [r.to_dict() for r in self.results],
            "verdict": self.verdict,
            "diagnostic": self.diagnostic,
        }
        if with_timings:
            out["timings"] = dict(self.timings)
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ValidationReport:
        return cls(
            d["ticket"],
            dict(d.get("impact", {})),
            list(d.get("plan", [])),
            [TestResult.from_dict(r) for r in d.get("results", [])],
            d["verdict"],
            d.get("diagnostic"),
            dict(d.get("timings", {})),
        )


# --- tool table ------------------------------------------------------------------------


def impact_helper(repo: Repository, production: str, candidate: str) -> dict[str, Any]:
    """Changed (device, layer) cells and their dependency closure."""
    changed = sort_cells(repo.changed_cells(production, candidate))
    affected = sort_cells(dependency_closure(changed))
    return {
        "changed": [cell_key(c) for c in changed],
        "affected": [cell_key(c) for c in affected],
        "devices": sorted({d for d, _ in changed}),
        "layers": sorted({layer.value for _, layer in affected}),
    }


class Workflow:
    """Binds a repository, a policy and the stores that agents share."""

    def __init__(
        self,
        repo: Repository,
        policy: Policy | None = None,
        tickets: TicketStore | None = None,
        memory: WorkingMemory | None = None,
        budget: int = 16,
    ):
        self.repo = repo
        self.policy = policy or ScriptedPolicy()
        self.tickets = tickets or TicketStore()
        self.memory = memory or WorkingMemory()
        self.budget = budget
        self.timings: dict[str, float] = {}

    def _timed(self, role: AgentRole, fn, *args):
        started = time.perf_counter()
        try:
            return fn(*args)
        finally:
            self.timings[role.value] = self.timings.get(role.value, 0.0) + time.perf_counter() - started

    def tools(self, context: Mapping[str, Any]) -> dict[str, Tool]:
        repo = self.repo
        table: dict[str, Tool] = {
            "graph_query": lambda p: {"rows": graph_query(repo, repo.resolve(p["snapshot"]), p["query"])},
            "kg_schema": lambda p: schema_describe(p.get("scope")),
            "impact_helper": lambda p: impact_helper(repo, repo.resolve(p["production"]), repo.resolve(p["candidate"])),
            "ticket_store": lambda p: self.tickets.document(p.get("ticket", context.get("ticket"))),
            "change_repo": lambda p: repo.diff(p["a"], p["b"]).to_dict() if "b" in p else repo.get(p["ref"]).to_dict(),
            "agent_ndm_query": lambda p: self.ndm_query(p, p.get("snapshot", context.get("production"))),
            "agent_impact": lambda p: self.impact_assess(ChangeDescriptor.from_dict(p["descriptor"]), context),
            "agent_test_planner": lambda p: {
                "plan": [t.to_dict() for t in self.plan_tests(ChangeDescriptor.from_dict(p["descriptor"]), p["impact"], context)]
            },
            "agent_test_executor": lambda p: {
                "results": [r.to_dict() for r in self.execute_plan([TestSpec.from_dict(t) for t in p["plan"]], context)]
            },
        }
        for name in VERIFY_TOOLS:
            table[name] = self._verify_tool(name)
        return table

    def _verify_tool(self, capability: str) -> Tool:
        def run(params: Mapping[str, Any]) -> dict[str, Any]:
            req = {"capability": capability, "snapshots": list(params["snapshots"]), "params": dict(params.get("params", {}))}
            return call_tool(self.repo, req).to_dict(with_duration=False)

        return run

    def _run(self, role: AgentRole, payload: Mapping[str, Any], context: Mapping[str, Any], budget: int | None = None) -> Any:
        run = run_agent(role, payload, self.policy, context, self.tools(context), budget or self.budget, memory=self.memory)
        answer = run.answer
        if isinstance(answer, Mapping) and "error" in answer and role != AgentRole.ASSISTANT:
            raise ToolError(f"{role.value}: {answer['error']}")
        return answer

    # -- agents ---------------------------------------------------------------------

    def ndm_query(self, inputs: Mapping[str, Any], snapshot: str) -> dict[str, Any]:
        context = {"snapshot": snapshot}
        return self._timed(AgentRole.NDM_QUERY, self._run, AgentRole.NDM_QUERY, inputs, context)

    def impact_assess(self, descriptor: ChangeDescriptor, context: Mapping[str, Any]) -> dict[str, Any]:
        return self._timed(AgentRole.IMPACT, self._run, AgentRole.IMPACT, {"descriptor": descriptor.to_dict()}, context)

    def plan_tests(self, descriptor: ChangeDescriptor, impact: Mapping[str, Any], context: Mapping[str, Any]) -> TestPlan:
        payload = {"descriptor": descriptor.to_dict(), "impact": dict(impact)}
        answer = self._timed(AgentRole.TEST_PLANNER, self._run, AgentRole.TEST_PLANNER, payload, context)
        plan = [TestSpec.from_dict(t) for t in answer["plan"]]
        validate_plan(plan)
        return plan

    def execute_plan(self, plan: TestPlan, context: Mapping[str, Any]) -> list[TestResult]:
        payload = {"plan": [t.to_dict() for t in plan]}
        budget = max(self.budget, len(plan) + 1)
        answer = self._timed(AgentRole.TEST_EXECUTOR, self._run, AgentRole.TEST_EXECUTOR, payload, context, budget)
        observed = {item["test"]: item["observation"] for item in answer["results"]}
        return [judge(test, observed.get(test.id, "missing result")) for test in plan]

    # -- orchestration --------------------------------------------------------------

    def validate_change(self, descriptor: ChangeDescriptor) -> ValidationReport:
        """Impact, plan, execute, gate; the report is appended to the ticket."""
        self.timings = {}
        self.tickets.append(descriptor.ticket, "submitted", {"descriptor": descriptor.to_dict()})
        report = self._validate(descriptor)
        report.timings = dict(self.timings)
        self.tickets.append(descriptor.ticket, "report", {"report": report.to_dict()})
        return report

    def _validate(self, descriptor: ChangeDescriptor) -> ValidationReport:
        if not descriptor.candidate:
            return ValidationReport(descriptor.ticket, {}, [], [], BLOCKED, "no candidate")
        try:
            context = {
                "ticket": descriptor.ticket,
                "production": self.repo.resolve(descriptor.production),
                "candidate": self.repo.resolve(descriptor.candidate),
            }
        except TwinError as exc:
            return ValidationReport(descriptor.ticket, {}, [], [], BLOCKED, error_text(exc))
        try:
            answer = self._timed(AgentRole.ASSISTANT, self._run, AgentRole.ASSISTANT, {"descriptor": descriptor.to_dict()}, context)
        except (TwinError, ConnectionError, ValueError) as exc:
            # budget exhaustion, tool failures and an unreachable or garbled policy all fail safe
            return ValidationReport(descriptor.ticket, {}, [], [], BLOCKED, error_text(exc))
        if not isinstance(answer, Mapping):
            return ValidationReport(descriptor.ticket, {}, [], [], BLOCKED, f"malformed assistant answer: {answer!r}")
        if "error" in answer:
            return ValidationReport(descriptor.ticket, {}, [], [], BLOCKED, f"{answer['error']}: {answer.get('diagnostic')}")
        try:
            results = [TestResult.from_dict(r) for r in answer["results"]]
            return ValidationReport(descriptor.ticket, answer["impact"], answer["plan"], results, verdict_for(results))
        except (KeyError, TypeError) as exc:
            return ValidationReport(descriptor.ticket, {}, [], [], BLOCKED, f"malformed assistant answer: {error_text(exc)}")

    def approve(self, ticket: str, by: str = "operator") -> dict[str, Any]:
        """Human sign-off; only an APPROVED_FOR_REVIEW report can be approved."""
        doc = self.tickets.document(ticket)
        report = doc.get("report")
        if report is None or report["verdict"] != APPROVED:
            return doc
        self.tickets.append(ticket, "approved", {"by": by})
        return self.tickets.document(ticket)


def judge(test: TestSpec, observation: Any) -> TestResult:
    """A test fails iff its result contradicts the expectation; tool errors count as ERROR."""
    if isinstance(observation, str):
        return TestResult(test.id, test.requirement_id, test.capability, ERROR, None, [], observation)
    if observation.get("status") == ERROR:
        return TestResult(test.id, test.requirement_id, test.capability, ERROR, ERROR, [], observation.get("diagnostic"))
    outcome = PASSED if expectation_holds(test.expectation, observation) else FAILED
    return TestResult(test.id, test.requirement_id, test.capability, outcome, observation["status"], list(observation.get("findings", [])))


def validate_change(
    repo: Repository,
    descriptor: ChangeDescriptor | Mapping[str, Any],
    policy: Policy | None = None,
    tickets: TicketStore | None = None,
) -> ValidationReport:
    if not isinstance(descriptor, ChangeDescriptor):
        descriptor = ChangeDescriptor.from_dict(descriptor)
    return Workflow(repo, policy, tickets).validate_change(descriptor)


def impact_assess(repo: Repository, descriptor: ChangeDescriptor, policy: Policy | None = None) -> dict[str, Any]:
    wf = Workflow(repo, policy)
    context = {"ticket": descriptor.ticket, "production": repo.resolve(descriptor.production), "candidate": repo.resolve(descriptor.candidate or "")}
    return wf.impact_assess(descriptor, context)


def plan_tests(repo: Repository, descriptor: ChangeDescriptor, impact: Mapping[str, Any], policy: Policy | None = None) -> TestPlan:
    wf = Workflow(repo, policy)
    context = {"ticket": descriptor.ticket, "production": repo.resolve(descriptor.production), "candidate": descriptor.candidate}
    return wf.plan_tests(descriptor, impact, context)


def execute_plan(repo: Repository, plan: TestPlan, candidate: str, production: str, policy: Policy | None = None) -> tuple[list[TestResult], str]:
    wf = Workflow(repo, policy)
    results = wf.execute_plan(plan, {"production": repo.resolve(production), "candidate": repo.resolve(candidate)})
    return results, verdict_for(results)
