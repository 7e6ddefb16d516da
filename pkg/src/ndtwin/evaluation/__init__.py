"""Scenario library, harness and metrics for evaluating the validation gate."""

from .bundle import dump_bundle, dump_library, load_bundle, load_library
from .delta import apply_delta, apply_edit, parse_path
from .harness import RunRecord, commit_base, commit_candidate, read_records, run_scenario, write_records
from .metrics import MetricsReport, compute_metrics, covered_requirements, main_error_caught, relevant_tests, structural_score
from .scenarios import BAD, GOOD, Candidate, Requirement, Scenario, matches_signature, scenario_library

__all__ = [
    "BAD",
    "GOOD",
    "Candidate",
    "MetricsReport",
    "Requirement",
    "RunRecord",
    "Scenario",
    "apply_delta",
    "apply_edit",
    "commit_base",
    "commit_candidate",
    "compute_metrics",
    "covered_requirements",
    "dump_bundle",
    "dump_library",
    "load_bundle",
    "load_library",
    "main_error_caught",
    "matches_signature",
    "parse_path",
    "read_records",
    "relevant_tests",
    "run_scenario",
    "scenario_library",
    "structural_score",
    "write_records",
]
