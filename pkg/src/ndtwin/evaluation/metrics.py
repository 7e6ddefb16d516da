"""Evaluation metrics over run records.

TP/FP/FN/TN label BAD-blocked / GOOD-blocked / BAD-approved / GOOD-approved runs.
Coverage, efficiency and redundancy are pooled over all runs. Robustness and
consistency are 1 - sigma/mu (population sigma) of the per-run structural score,
grouped over intent variations and over repeated runs respectively, then
averaged over groups. A metric whose denominator is zero is None ("undefined").
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from ..agents.workflow import APPROVED, BLOCKED, PASSED
from ..errors import EmptyRecordSet
from .harness import RunRecord
from .scenarios import BAD, GOOD, Scenario, matches_signature

UNDEFINED = "undefined"
MAIN_ERROR_RULE = (
    "BAD runs count as TP only when a test matching the candidate's main_error_test did not pass; "
    "GOOD runs count as FP when blocked; value = TP/(TP+FP)"
)

Scorer = Callable[[RunRecord, Scenario], float]


def covered_requirements(record: RunRecord, scenario: Scenario) -> set[str]:
    return {r.requirement_id for r in scenario.requirements if any(r.satisfied_by(t) for t in record.plan)}


def relevant_tests(record: RunRecord, scenario: Scenario) -> list[Mapping[str, Any]]:
    by_id = {r.requirement_id: r for r in scenario.requirements}
    out = []
    for test in record.plan:
        req = by_id.get(test.get("requirement_id", "none"))
        if req is not None and req.satisfied_by(test):
            out.append(test)
    return out


def structural_score(record: RunRecord, scenario: Scenario) -> float:
    """Fraction of ground-truth requirements covered by the run's plan."""
    if not scenario.requirements:
        return 0.0
    return len(covered_requirements(record, scenario)) / len(scenario.requirements)


def main_error_caught(record: RunRecord, scenario: Scenario) -> bool:
    signature = scenario.candidate(record.candidate).main_error_test
    if signature is None:
        return False
    plan = {t["id"]: t for t in record.plan}
    for result in record.results:
        test = plan.get(result["test"])
        if test is not None and result["outcome"] != PASSED and matches_signature(test, signature):
            return True
    return False


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None


def _stability(groups: Mapping[Any, list[float]]) -> float | None:
    values = []
    for scores in groups.values():
        if len(scores) < 2:
            continue
        mu = statistics.fmean(scores)
        if mu == 0:
            continue
        values.append(1.0 - statistics.pstdev(scores) / mu)
    return statistics.fmean(values) if values else None


@dataclass
class MetricsReport:
    precision: float | None = None
    main_error_precision: float | None = None
    error_detection: float | None = None
    coverage: float | None = None
    efficiency: float | None = None
    redundancy: float | None = None
    robustness: float | None = None
    consistency: float | None = None
    time_to_answer: float | None = None
    counts: dict[str, int] = field(default_factory=dict)

    RATES = ("precision", "main_error_precision", "error_detection", "coverage", "efficiency", "redundancy", "robustness", "consistency")
    ROWS = (
        ("Precision", "precision"),
        ("Main Error Precision", "main_error_precision"),
        ("Error Detection", "error_detection"),
        ("Time to Answer", "time_to_answer"),
        ("Coverage", "coverage"),
        ("Efficiency", "efficiency"),
        ("Redundancy", "redundancy"),
        ("Robustness", "robustness"),
        ("Consistency", "consistency"),
    )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name, value in asdict(self).items():
            out[name] = UNDEFINED if value is None else value
        out["notes"] = {"main_error_precision": MAIN_ERROR_RULE}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> MetricsReport:
        kwargs = {k: (None if d.get(k) == UNDEFINED else d.get(k)) for k in cls.RATES + ("time_to_answer",)}
        return cls(**kwargs, counts=dict(d.get("counts", {})))

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        return cls.from_dict(json.loads(text))

    @staticmethod
    def format_value(attr: str, value: float | None, percent: bool = False) -> str:
        """Rates as 0.94 (or 94% with ``percent``); time as 223 (or 223s)."""
        if value is None:
            return UNDEFINED
        if attr == "time_to_answer":
            return f"{round(value, 2):g}" + ("s" if percent else "")
        if percent:
            return f"{round(value * 100, 1):g}%"
        return f"{value:.2f}"

    def summary_table(self, percent: bool = False) -> str:
        lines = ["| Metric | Value |", "|---|---|"]
        for label, attr in self.ROWS:
            lines.append(f"| {label} | {self.format_value(attr, getattr(self, attr), percent)} |")
        return "\n".join(lines)

    def headline(self) -> str:
        """Error Detection / Precision - Main Error Precision / Time to Answer."""
        f = self.format_value
        return (
            f"{f('error_detection', self.error_detection)} / {f('precision', self.precision)} - "
            f"{f('main_error_precision', self.main_error_precision)} / {f('time_to_answer', self.time_to_answer)}"
        )


def compute_metrics(
    records: Sequence[RunRecord],
    scenarios: Iterable[Scenario] | Mapping[str, Scenario],
    scorer: Scorer = structural_score,
) -> MetricsReport:
    if not records:
        raise EmptyRecordSet("no run records")
    by_id = dict(scenarios) if isinstance(scenarios, Mapping) else {s.id: s for s in scenarios}
    tp = fp = fn = tn = main_tp = 0
    r_cov = r_gt = t_rel = t_gen = 0
    variations: dict[tuple, list[float]] = {}
    runs: dict[tuple, list[float]] = {}
    for rec in records:
        scenario = by_id[rec.scenario]
        blocked = rec.verdict == BLOCKED
        if rec.label == BAD:
            tp += blocked
            fn += not blocked
            main_tp += blocked and main_error_caught(rec, scenario)
        elif rec.label == GOOD:
            fp += blocked
            tn += rec.verdict == APPROVED
        r_cov += len(covered_requirements(rec, scenario))
        r_gt += len(scenario.requirements)
        t_rel += len(relevant_tests(rec, scenario))
        t_gen += len(rec.plan)
        score = scorer(rec, scenario)
        variations.setdefault((rec.scenario, rec.candidate, rec.run), []).append(score)
        runs.setdefault((rec.scenario, rec.candidate, rec.variation), []).append(score)
    cov_rel = _ratio(r_cov, t_rel)
    return MetricsReport(
        precision=_ratio(tp, tp + fp),
        main_error_precision=_ratio(main_tp, main_tp + fp),
        error_detection=_ratio(tp, tp + fn),
        coverage=_ratio(r_cov, r_gt),
        efficiency=_ratio(t_rel, t_gen),
        redundancy=None if cov_rel is None else 1.0 - cov_rel,
        robustness=_stability(variations),
        consistency=_stability(runs),
        time_to_answer=statistics.fmean(r.wall_time for r in records),
        counts={"TP": tp, "FP": fp, "FN": fn, "TN": tn, "main_error_TP": main_tp, "runs": len(records)},
    )
