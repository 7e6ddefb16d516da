"""Scenario runner: fork, apply candidate delta, commit, validate, record."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from ..agents import BLOCKED, ChangeDescriptor, TicketStore, Workflow
from ..agents.core import Policy
from ..errors import TwinError
from ..ingest import build_base_layers, spec_from_data
from ..snapshots import Repository
from .delta import apply_delta
from .scenarios import Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunRecord:
    scenario: str
    candidate: str
    label: str
    run: int
    plan: tuple[Mapping[str, Any], ...]
    results: tuple[Mapping[str, Any], ...]
    verdict: str
    wall_time: float = field(default=0.0, compare=False)
    variation: int = 0
    diagnostic: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "candidate": self.candidate,
            "label": self.label,
            "run": self.run,
            "variation": self.variation,
            "plan": [dict(t) for t in self.plan],
            "results": [dict(r) for r in self.results],
            "verdict": self.verdict,
            "diagnostic": self.diagnostic,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunRecord:
        return cls(
            d["scenario"],
            d["candidate"],
            d["label"],
            int(d["run"]),
            tuple(d.get("plan", [])),
            tuple(d.get("results", [])),
            d["verdict"],
            float(d.get("wall_time", 0.0)),
            int(d.get("variation", 0)),
            d.get("diagnostic"),
        )


def commit_base(repo: Repository, scenario: Scenario) -> str:
    handle = repo.new_snapshot(f"base/{scenario.id}")
    build_base_layers(spec_from_data(scenario.base), handle)
    return repo.commit(handle)


def commit_candidate(repo: Repository, scenario: Scenario, cid: str, base: str, branch: str) -> str:
    """Raises DeltaError / ValidationError when the candidate does not apply or parse."""
    spec = spec_from_data(apply_delta(scenario.base, scenario.candidate(cid).delta))
    handle = repo.fork(base, branch)
    build_base_layers(spec, handle)
    return repo.commit(handle)


def run_scenario(
    scenario: Scenario,
    policy: Policy | None = None,
    n_runs: int = 1,
    repo: Repository | None = None,
    tickets: TicketStore | None = None,
    variations: Iterable[int] = (0,),
) -> list[RunRecord]:
    """One RunRecord per candidate x variation x run, each on its own branch."""
    repo = repo or Repository()
    base = commit_base(repo, scenario)
    workflow = Workflow(repo, policy, tickets)
    records = []
    for variation in variations:
        intent = scenario.descriptor["intent"] if variation == 0 else scenario.intent_variations[variation - 1]
        for run in range(n_runs):
            for cand in scenario.candidates:
                ticket = f"{scenario.id}-{cand.id}-v{variation}-r{run}"
                started = time.perf_counter()
                try:
                    sid = commit_candidate(repo, scenario, cand.id, base, f"cand/{ticket}")
                except TwinError as exc:
                    records.append(
                        RunRecord(scenario.id, cand.id, cand.label, run, (), (), BLOCKED, time.perf_counter() - started, variation, f"{type(exc).__name__}: {exc}")
                    )
                    continue
                descriptor = ChangeDescriptor(
                    ticket, intent, scenario.descriptor["category"], dict(scenario.descriptor.get("scope", {})), sid, base
                )
                report = workflow.validate_change(descriptor)
                records.append(
                    RunRecord(
                        scenario.id,
                        cand.id,
                        cand.label,
                        run,
                        tuple(report.plan),
                        tuple(r.to_dict() for r in report.results),
                        report.verdict,
                        time.perf_counter() - started,
                        variation,
                        report.diagnostic,
                    )
                )
    return records


def write_records(records: Iterable[RunRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[RunRecord]:
    with open(path, encoding="utf-8") as fh:
        return [RunRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
