from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass, field
from typing import Any

import pytest

from ndtwin.ingest import build_base_layers, spec_from_data
from ndtwin.snapshots import ConflictReport, Repository
from oracles import closure_oracle, random_edit, random_network


def mtu_pair(m1: int = 1500, m2: int = 9000) -> dict[str, Any]:
    """Two routers joined by eth0<->eth0 with the given MTUs."""
    return {
        "devices": [
            {"hostname": "r1", "interfaces": [{"name": "eth0", "mtu": m1, "v4_addr": "10.0.0.1/30"}]},
            {"hostname": "r2", "interfaces": [{"name": "eth0", "mtu": m2, "v4_addr": "10.0.0.2/30"}]},
        ],
        "topology": {"links": [{"a": {"device": "r1", "interface": "eth0"}, "b": {"device": "r2", "interface": "eth0"}}]},
    }


def commit_spec(repo: Repository, data: dict[str, Any], branch: str = "main") -> str:
    handle = repo.checkout(branch) if repo.has_branch(branch) else repo.new_snapshot(branch)
    return repo.commit(build_base_layers(spec_from_data(data), handle))


@pytest.fixture
def repo() -> Repository:
    return Repository()


def cell_content(repo: Repository, digests: dict, cell) -> str | None:
    """Canonical JSON of a cell's stored nodes and edges, or None when absent."""
    if cell not in digests:
        return None
    blob = repo.blob(digests[cell]).to_dict()
    nodes = sorted((json.dumps(n, sort_keys=True) for n in blob["nodes"]))
    edges = sorted((json.dumps(e, sort_keys=True) for e in blob["edges"]))
    return json.dumps([nodes, edges])


@dataclass
class AlgebraOutcome:
    problems: list[str] = field(default_factory=list)
    conflicts: int = 0
    merges: int = 0
    unchanged_cells: int = 0


def check_snapshot_algebra(seed: int) -> AlgebraOutcome:
    """One random two-sided edit sequence, checked against content and closure oracles."""
    rng = random.Random(seed)
    out = AlgebraOutcome()
    base = random_network(rng, max_devices=4, max_prefixes=6)
    repo = Repository()
    base_id = commit_spec(repo, base)
    feature = copy.deepcopy(base)
    main = copy.deepcopy(base)
    shared_edit = rng.random() < 0.2
    for _ in range(rng.randint(1, 3)):
        random_edit(rng, feature)
    if shared_edit:
        main = copy.deepcopy(feature)  # identical edits on both sides
    for _ in range(rng.randint(0, 2)):
        random_edit(rng, main)
    handle = repo.fork(base_id, "feature")
    feature_id = repo.commit(build_base_layers(spec_from_data(feature), handle))
    main_id = commit_spec(repo, main) if main != base else base_id

    digests = {name: repo.get(sid).digests for name, sid in (("base", base_id), ("feature", feature_id), ("main", main_id))}
    content = {name: {} for name in digests}
    cells = set().union(*(d.keys() for d in digests.values()))
    for name, d in digests.items():
        for cell in cells:
            content[name][cell] = cell_content(repo, d, cell)

    # digest changes iff canonical content changes
    for side in ("feature", "main"):
        for cell in cells:
            digest_changed = digests["base"].get(cell) != digests[side].get(cell)
            content_changed = content["base"][cell] != content[side][cell]
            if digest_changed != content_changed:
                out.problems.append(f"seed {seed}: {side} {cell} digest/content disagree")
            out.unchanged_cells += not content_changed

    changed_f = {c for c in cells if content["base"][c] != content["feature"][c]}
    changed_m = {c for c in cells if content["base"][c] != content["main"][c]}
    expected_conflicts = sorted(
        (c for c in changed_f & changed_m if content["feature"][c] != content["main"][c]), key=lambda c: (c[0], c[1].value)
    )
    as_names = lambda cs: {(d, layer.value) for d, layer in cs}  # noqa: E731

    rebased = repo.rebase("feature", "main")
    if as_names(rebased.revalidation) != closure_oracle(as_names(changed_f | changed_m)):
        out.problems.append(f"seed {seed}: revalidation set differs from closure")

    result = repo.merge("feature", "main")
    if isinstance(result, ConflictReport):
        out.conflicts += 1
        if result.conflicts != expected_conflicts:
            out.problems.append(f"seed {seed}: conflicts {result.conflicts} != {expected_conflicts}")
        if as_names(result.revalidation) != closure_oracle(as_names(changed_f | changed_m)):
            out.problems.append(f"seed {seed}: conflict revalidation differs from closure")
    else:
        out.merges += 1
        if expected_conflicts:
            out.problems.append(f"seed {seed}: merge committed despite conflicts {expected_conflicts}")
        merged = repo.get(result)
        if set(merged.parents) != {main_id, feature_id}:
            out.problems.append(f"seed {seed}: merge parents {merged.parents}")
        for cell in cells:
            expected = content["feature"][cell] if cell in changed_f else content["main"][cell]
            if cell_content(repo, merged.digests, cell) != expected:
                out.problems.append(f"seed {seed}: merged {cell} is not the changed side")
    return out
