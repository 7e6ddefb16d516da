"""Validation agents: ReAct loop, policies, plan templates and the workflow gate."""

from .core import ROLE_TOOLS, Action, AgentRole, AgentRun, ReactState, ReactStep, WorkingMemory, run_agent
from .plans import CATEGORIES, TEMPLATES, TestPlan, TestSpec, expectation_holds, parse_expectation, template_plan, validate_plan
from .policy import QUESTION_TEMPLATES, RemoteConfig, RemotePolicy, ScriptedPolicy, make_policy
from .tickets import TicketStore
from .workflow import (
    APPROVED,
    BLOCKED,
    ChangeDescriptor,
    TestResult,
    ValidationReport,
    Workflow,
    execute_plan,
    impact_assess,
    impact_helper,
    judge,
    plan_tests,
    validate_change,
    verdict_for,
)

__all__ = [
    "APPROVED",
    "BLOCKED",
    "CATEGORIES",
    "QUESTION_TEMPLATES",
    "ROLE_TOOLS",
    "TEMPLATES",
    "Action",
    "AgentRole",
    "AgentRun",
    "ChangeDescriptor",
    "ReactState",
    "ReactStep",
    "RemoteConfig",
    "RemotePolicy",
    "ScriptedPolicy",
    "TestPlan",
    "TestResult",
    "TestSpec",
    "TicketStore",
    "ValidationReport",
    "WorkingMemory",
    "Workflow",
    "execute_plan",
    "expectation_holds",
    "impact_assess",
    "impact_helper",
    "judge",
    "make_policy",
    "parse_expectation",
    "plan_tests",
    "run_agent",
    "template_plan",
    "validate_change",
    "validate_plan",
    "verdict_for",
]
