"""Git-like snapshot repository over per-(device, layer) content-addressed blobs.

On-disk layout of a repository directory::

    blobs/<d[:2]>/<digest>.json   one LayerBlob per digest
    snapshots.idx                 append-only JSON lines (snapshots, derived layers)
    branches.json                 {"branches": {name: head}, "tags": {name: id}}
    .lock                         advisory writer lock

Derived layers (ROUTING) are memoised computations attached to a committed
snapshot after the fact; they are recorded in the index but never change the
snapshot's committed digests.
"""

from __future__ import annotations

import fcntl
import json
import logging
import os
import threading
import time
import uuid
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .errors import (
    BranchExists,
    ClosedSnapshot,
    EmptySnapshot,
    NoCommonAncestor,
    SchemaViolation,
    StaleHead,
    UnknownBranch,
    UnknownNodeReference,
    UnknownSnapshot,
)
from .layers import EdgeKind, KgEdge, KgNode, LayerBlob, LayerId, layer_digest
from .query import GraphQuery, GraphView, execute
from .schema import BOOLEAN, INTEGER, KINDS, NUMBER, STRING

log = logging.getLogger(__name__)

Cell = tuple[str, LayerId]
MAIN = "main"

# parent layer -> layers that must be re-evaluated when it changes
LAYER_DEPENDENCIES: dict[LayerId, frozenset[LayerId]] = {
    LayerId.RAW_CONFIG: frozenset({LayerId.INTERFACES, LayerId.IP_SETTINGS, LayerId.ACL}),
    LayerId.INTERFACES: frozenset({LayerId.ROUTING}),
    LayerId.IP_SETTINGS: frozenset({LayerId.ROUTING}),
    LayerId.ACL: frozenset({LayerId.ROUTING}),
}
DERIVED_LAYERS = frozenset({LayerId.ROUTING})


def dependent_layers(layer: LayerId) -> set[LayerId]:
    """Reflexive-transitive successors of ``layer``."""
    seen = {layer}
    stack = [layer]
    while stack:
        for child in LAYER_DEPENDENCIES.get(stack.pop(), ()):
            if child not in seen:
                seen.add(child)
                stack.append(child)
    return seen


def dependency_closure(cells: Iterable[Cell]) -> set[Cell]:
    return {(device, dep) for device, layer in cells for dep in dependent_layers(layer)}


def cell_key(cell: Cell) -> str:
    return f"{cell[0]}/{cell[1].value}"


def parse_cell_key(key: str) -> Cell:
    device, _, layer = key.rpartition("/")
    return device, LayerId.parse(layer)


def sort_cells(cells: Iterable[Cell]) -> list[Cell]:
    return sorted(cells, key=lambda c: (c[0], c[1].value))


@dataclass(frozen=True)
class Snapshot:
    id: str
    parents: tuple[str, ...]
    branch: str
    digests: Mapping[Cell, str]
    created: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "snapshot",
            "id": self.id,
            "parents": list(self.parents),
            "branch": self.branch,
            "digests": {cell_key(c): d for c, d in sorted(self.digests.items(), key=lambda kv: cell_key(kv[0]))},
            "created": self.created,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Snapshot:
        return cls(
            id=data["id"],
            parents=tuple(data["parents"]),
            branch=data["branch"],
            digests={parse_cell_key(k): v for k, v in data["digests"].items()},
            created=data.get("created", 0.0),
        )

    def layers(self) -> set[LayerId]:
        return {layer for _, layer in self.digests}

    def devices(self) -> set[str]:
        return {device for device, _ in self.digests}


@dataclass(frozen=True)
class Branch:
    name: str
    head: str


@dataclass
class ConflictReport:
    conflicts: list[Cell]
    revalidation: set[Cell]

    def to_dict(self) -> dict[str, Any]:
        return {
            "conflicts": [cell_key(c) for c in self.conflicts],
            "revalidation": [cell_key(c) for c in sort_cells(self.revalidation)],
        }


@dataclass
class LayerChange:
    added: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)
    modified: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, list[str]]:
        return {"added": self.added, "removed": self.removed, "modified": self.modified}


@dataclass
class SnapshotDiff:
    changed: list[Cell]
    nodes: dict[Cell, LayerChange]

    def to_dict(self) -> dict[str, Any]:
        return {
            "changed": [cell_key(c) for c in self.changed],
            "nodes": {cell_key(c): ch.to_dict() for c, ch in self.nodes.items()},
        }

    def devices(self) -> list[str]:
        return sorted({d for d, _ in self.changed})


@dataclass
class RebaseResult:
    handle: OpenSnapshot
    revalidation: set[Cell]
    feature_changes: set[Cell]
    base_changes: set[Cell]


class OpenSnapshot:
    """A mutable, single-writer snapshot under construction."""

    def __init__(
        self,
        repo: Repository,
        branch: str,
        parents: tuple[str, ...],
        expected_head: str | None,
        cells: dict[Cell, str] | None = None,
    ):
        self.repo = repo
        self.branch = branch
        self.parents = parents
        self.expected_head = expected_head
        self.cells: dict[Cell, str] = dict(cells or {})
        self.closed = False
        self._lock = threading.Lock()

    def _check_open(self) -> None:
        if self.closed:
            raise ClosedSnapshot("snapshot handle already committed")

    def layer_nodes(self, layer: LayerId) -> dict[str, KgNode]:
        out: dict[str, KgNode] = {}
        for (device, cell_layer), digest in self.cells.items():
            if cell_layer == layer:
                for n in self.repo.blob(digest).nodes:
                    out[n.id] = n
        return out

    def view(self) -> GraphView:
        return self.repo._view_of(self.cells)

    def upsert_layer(self, layer: LayerId, nodes: Iterable[KgNode], edges: Iterable[KgEdge]) -> str:
        """Replace ``layer`` for every device present in ``nodes``; returns the layer digest."""
        layer = LayerId.parse(layer)
        nodes = list(nodes)
        edges = list(edges)
        with self._lock:
            self._check_open()
            _validate_layer(layer, nodes, edges, self.layer_nodes(layer), self.layer_nodes(LayerId.DEVICE))
            devices = sorted({n.device for n in nodes})
            device_of: dict[str, str] = {n.id: n.device for n in nodes}
            if layer != LayerId.DEVICE:
                device_of.update({nid: n.device for nid, n in self.layer_nodes(LayerId.DEVICE).items()})
            for device in devices:
                blob = LayerBlob.build(
                    (n for n in nodes if n.device == device),
                    (e for e in edges if device_of.get(e.src) == device),
                )
                self.cells[(device, layer)] = self.repo.put_blob(blob)
            return layer_digest(nodes, edges)

    def drop(self, cells: Iterable[Cell]) -> None:
        with self._lock:
            self._check_open()
            for cell in cells:
                self.cells.pop(cell, None)

    def drop_devices(self, keep: Iterable[str]) -> None:
        keep = set(keep)
        self.drop([c for c in self.cells if c[0] not in keep])


def _type_ok(type_name: str, value: Any) -> bool:
    if type_name == STRING:
        return isinstance(value, str)
    if type_name == BOOLEAN:
        return isinstance(value, bool)
    if type_name == INTEGER:
        return isinstance(value, int) and not isinstance(value, bool)
    if type_name == NUMBER:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return False


def _validate_layer(
    layer: LayerId,
    nodes: list[KgNode],
    edges: list[KgEdge],
    existing_layer: Mapping[str, KgNode],
    existing_devices: Mapping[str, KgNode],
) -> None:
    provided: dict[str, KgNode] = {}
    keys: set[tuple[str, str, Any]] = set()
    for n in nodes:
        if n.layer != layer:
            raise SchemaViolation(f"node {n.id} belongs to {n.layer.value}, not {layer.value}")
        spec = KINDS.get((layer, n.kind))
        if spec is None:
            raise SchemaViolation(f"kind {n.kind!r} is not part of layer {layer.value}")
        for attr, value in n.attrs.items():
            attr_spec = spec.attrs.get(attr)
            if attr_spec is None:
                raise SchemaViolation(f"attribute {attr!r} is not in the schema of {n.kind!r}")
            if value is None:
                if not attr_spec.nullable:
                    raise SchemaViolation(f"attribute {attr!r} of {n.kind!r} is not nullable")
            elif not _type_ok(attr_spec.type, value):
                raise SchemaViolation(f"attribute {attr!r} of {n.kind!r} must be {attr_spec.type}")
        if n.id in provided:
            raise SchemaViolation(f"duplicate node id {n.id}")
        key = (n.device, n.kind, n.attrs.get(spec.key))
        if key in keys:
            raise SchemaViolation(f"duplicate {n.kind} {key[2]!r} on {n.device}")
        keys.add(key)
        provided[n.id] = n

    devices = dict(existing_devices)
    if layer == LayerId.DEVICE:
        devices.update(provided)
    same_layer = {**existing_layer, **provided}
    owners: dict[str, int] = {nid: 0 for nid, n in provided.items() if n.layer != LayerId.DEVICE}
    seen_edges: set[tuple[str, str, str]] = set()
    for e in edges:
        if e.key() in seen_edges:
            raise SchemaViolation(f"duplicate edge {e.key()}")
        seen_edges.add(e.key())
        if e.kind == EdgeKind.OWN:
            src = devices.get(e.src)
            if src is None:
                if e.src in same_layer or e.src in provided:
                    raise SchemaViolation(f"OWN edge must start at a DEVICE node, {e.src} is {layer.value}")
                raise UnknownNodeReference(f"OWN edge source {e.src} does not exist")
            dst = provided.get(e.dst)
            if dst is None:
                raise UnknownNodeReference(f"OWN edge target {e.dst} is not part of this upsert")
            if dst.layer == LayerId.DEVICE:
                raise SchemaViolation("OWN edges cannot target DEVICE nodes")
            if dst.device != src.device:
                raise SchemaViolation(f"OWN edge crosses devices: {src.device} -> {dst.device}")
            owners[e.dst] += 1
        else:
            src = provided.get(e.src)
            if src is None:
                if e.src in devices or e.src in existing_layer:
                    raise SchemaViolation(f"CONNECT edge source {e.src} must be part of this upsert")
                raise UnknownNodeReference(f"CONNECT edge source {e.src} does not exist")
            dst = same_layer.get(e.dst)
            if dst is None:
                if e.dst in devices:
                    raise SchemaViolation("CONNECT edges join nodes of the same layer")
                raise UnknownNodeReference(f"CONNECT edge target {e.dst} does not exist")
            if dst.device == src.device:
                raise SchemaViolation(f"CONNECT edge {e.src} -> {e.dst} stays on one device")
    unowned = sorted(nid for nid, count in owners.items() if count != 1)
    if unowned:
        raise SchemaViolation(f"nodes without exactly one OWN edge: {', '.join(unowned[:5])}")


class Repository:
    """Snapshot store; in-memory when ``root`` is None, otherwise file-backed."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self._blobs: dict[str, LayerBlob] = {}
        self._snapshots: dict[str, Snapshot] = {}
        self._order: list[str] = []
        self._derived: dict[str, dict[Cell, str]] = {}
        self._branches: dict[str, str] = {}
        self._tags: dict[str, str] = {}
        self._views: dict[str, GraphView] = {}
        # per-snapshot computed artefacts (e.g. dataplanes); valid because snapshots are immutable
        self.memo: dict[tuple[str, str], Any] = {}
        self._lock = threading.RLock()
        if self.root is not None:
            (self.root / "blobs").mkdir(parents=True, exist_ok=True)
            self._load()

    # -- persistence ---------------------------------------------------------

    def _load(self) -> None:
        assert self.root is not None
        index = self.root / "snapshots.idx"
        if index.exists():
            for line in index.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec["type"] == "snapshot":
                    snap = Snapshot.from_dict(rec)
                    self._snapshots[snap.id] = snap
                    self._order.append(snap.id)
                elif rec["type"] == "derived":
                    cells = {parse_cell_key(k): v for k, v in rec["cells"].items()}
                    self._derived.setdefault(rec["snapshot"], {}).update(cells)
        refs = self.root / "branches.json"
        if refs.exists():
            data = json.loads(refs.read_text(encoding="utf-8"))
            self._branches = dict(data.get("branches", {}))
            self._tags = dict(data.get("tags", {}))

    @contextmanager
    def _writer(self) -> Iterator[None]:
        with self._lock:
            if self.root is None:
                yield
                return
            with open(self.root / ".lock", "a+") as fh:
                fcntl.flock(fh, fcntl.LOCK_EX)
                try:
                    yield
                finally:
                    fcntl.flock(fh, fcntl.LOCK_UN)

    def _append_index(self, record: dict[str, Any]) -> None:
        if self.root is None:
            return
        with open(self.root / "snapshots.idx", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _write_refs(self) -> None:
        if self.root is None:
            return
        tmp = self.root / "branches.json.tmp"
        tmp.write_text(
            json.dumps({"branches": self._branches, "tags": self._tags}, indent=2, sort_keys=True),
            encoding="utf-8",
        )
        os.replace(tmp, self.root / "branches.json")

    def put_blob(self, blob: LayerBlob) -> str:
        digest = blob.digest
        with self._lock:
            if digest not in self._blobs:
                self._blobs[digest] = blob
                if self.root is not None:
                    path = self.root / "blobs" / digest[:2] / f"{digest}.json"
                    if not path.exists():
                        path.parent.mkdir(parents=True, exist_ok=True)
                        tmp = path.with_suffix(".tmp")
                        tmp.write_text(json.dumps(blob.to_dict(), sort_keys=True), encoding="utf-8")
                        os.replace(tmp, path)
        return digest

    def blob(self, digest: str) -> LayerBlob:
        cached = self._blobs.get(digest)
        if cached is not None:
            return cached
        if self.root is not None:
            path = self.root / "blobs" / digest[:2] / f"{digest}.json"
            if path.exists():
                blob = LayerBlob.from_dict(json.loads(path.read_text(encoding="utf-8")))
                self._blobs[digest] = blob
                return blob
        raise KeyError(f"missing blob {digest}")

    # -- lookup --------------------------------------------------------------

    def resolve(self, ref: str) -> str:
        """Accept a snapshot id, a unique id prefix, a branch name or a tag."""
        if ref in self._snapshots:
            return ref
        if ref in self._branches:
            return self._branches[ref]
        if ref in self._tags:
            return self._tags[ref]
        matches = [sid for sid in self._snapshots if sid.startswith(ref)] if len(ref) >= 6 else []
        if len(matches) == 1:
            return matches[0]
        raise UnknownSnapshot(f"unknown snapshot {ref!r}")

    def get(self, ref: str) -> Snapshot:
        return self._snapshots[self.resolve(ref)]

    def snapshots(self) -> list[Snapshot]:
        return [self._snapshots[sid] for sid in self._order]

    def branches(self) -> list[Branch]:
        return [Branch(name, head) for name, head in sorted(self._branches.items())]

    def head(self, branch: str) -> str:
        try:
            return self._branches[branch]
        except KeyError:
            raise UnknownBranch(f"unknown branch {branch!r}") from None

    def has_branch(self, branch: str) -> bool:
        return branch in self._branches

    def tags(self) -> dict[str, str]:
        return dict(self._tags)

    def tag(self, name: str, ref: str) -> None:
        with self._writer():
            self._tags[name] = self.resolve(ref)
            self._write_refs()

    def layer_digests(self, ref: str) -> dict[Cell, str]:
        """Committed digests plus any derived layers attached since."""
        sid = self.resolve(ref)
        cells = dict(self._snapshots[sid].digests)
        cells.update(self._derived.get(sid, {}))
        return cells

    def has_layer(self, ref: str, layer: LayerId) -> bool:
        return any(cell_layer == layer for _, cell_layer in self.layer_digests(ref))

    def _view_of(self, cells: Mapping[Cell, str]) -> GraphView:
        nodes: list[KgNode] = []
        edges: list[KgEdge] = []
        for digest in cells.values():
            blob = self.blob(digest)
            nodes.extend(blob.nodes)
            edges.extend(blob.edges)
        return GraphView(nodes, edges)

    def view(self, ref: str) -> GraphView:
        sid = self.resolve(ref)
        with self._lock:
            cached = self._views.get(sid)
            if cached is None:
                cached = self._view_of(self.layer_digests(sid))
                self._views[sid] = cached
            return cached

    def nodes(self, ref: str, layer: LayerId, device: str | None = None) -> list[KgNode]:
        out: list[KgNode] = []
        for (cell_device, cell_layer), digest in sorted(self.layer_digests(ref).items(), key=lambda kv: cell_key(kv[0])):
            if cell_layer == layer and (device is None or cell_device == device):
                out.extend(self.blob(digest).nodes)
        return out

    def query(self, ref: str, q: GraphQuery | Mapping[str, Any]) -> list[dict[str, Any]]:
        if not isinstance(q, GraphQuery):
            q = GraphQuery.from_dict(q)
        return execute(self.view(ref), q)

    # -- derived layers ------------------------------------------------------

    def attach_derived(self, ref: str, layer: LayerId, nodes: list[KgNode], edges: list[KgEdge]) -> str:
        """Materialise an on-demand layer on a committed snapshot (memoisation, not mutation)."""
        sid = self.resolve(ref)
        staging = OpenSnapshot(self, "", (), None, self.layer_digests(sid))
        staging.drop([c for c in staging.cells if c[1] == layer])
        digest = staging.upsert_layer(layer, nodes, edges)
        cells = {c: d for c, d in staging.cells.items() if c[1] == layer}
        with self._writer():
            self._derived.setdefault(sid, {})
            for c in [c for c in self._derived[sid] if c[1] == layer]:
                del self._derived[sid][c]
            self._derived[sid].update(cells)
            self._views.pop(sid, None)
            self._append_index({"type": "derived", "snapshot": sid, "cells": {cell_key(c): d for c, d in cells.items()}})
        return digest

    # -- git-like workflow ---------------------------------------------------

    def new_snapshot(self, branch: str = MAIN) -> OpenSnapshot:
        """Open an empty snapshot; on an existing branch it must commit on top of the head."""
        head = self._branches.get(branch)
        return OpenSnapshot(self, branch, (head,) if head else (), head)

    def checkout(self, branch: str) -> OpenSnapshot:
        head = self.head(branch)
        return OpenSnapshot(self, branch, (head,), head, self._snapshots[head].digests)

    def fork(self, base: str, branch: str) -> OpenSnapshot:
        base_id = self.resolve(base)
        with self._writer():
            if branch in self._branches:
                raise BranchExists(f"branch {branch!r} already exists")
            self._branches[branch] = base_id
            self._write_refs()
        return OpenSnapshot(self, branch, (base_id,), base_id, self._snapshots[base_id].digests)

    def commit(self, handle: OpenSnapshot, branch: str | None = None, parents: Iterable[str] | None = None) -> str:
        branch = branch or handle.branch
        parent_ids = tuple(self.resolve(p) for p in parents) if parents is not None else handle.parents
        with handle._lock, self._writer():
            handle._check_open()
            if not handle.cells:
                raise EmptySnapshot("snapshot has no layers")
            current = self._branches.get(branch)
            expected = handle.expected_head if branch == handle.branch else current
            if current != expected:
                raise StaleHead(f"branch {branch!r} advanced to {current}; rebase required")
            snap = Snapshot(
                id=str(uuid.uuid4()),
                parents=parent_ids,
                branch=branch,
                digests=dict(handle.cells),
                created=time.time(),
            )
            self._snapshots[snap.id] = snap
            self._order.append(snap.id)
            self._append_index(snap.to_dict())
            self._branches[branch] = snap.id
            self._write_refs()
            handle.closed = True
        log.debug("committed %s on %s", snap.id, branch)
        return snap.id

    def ancestors(self, ref: str) -> dict[str, int]:
        """BFS distance from ``ref`` to each of its ancestors (itself included)."""
        start = self.resolve(ref)
        dist = {start: 0}
        queue = deque([start])
        while queue:
            sid = queue.popleft()
            for parent in self._snapshots[sid].parents:
                if parent not in dist:
                    dist[parent] = dist[sid] + 1
                    queue.append(parent)
        return dist

    def merge_base(self, a: str, b: str) -> str:
        da = self.ancestors(a)
        db = self.ancestors(b)
        common = set(da) & set(db)
        if not common:
            raise NoCommonAncestor(f"{a} and {b} share no ancestor")
        return min(common, key=lambda sid: (da[sid] + db[sid], da[sid], sid))

    def changed_cells(self, a: str, b: str, include_derived: bool = False) -> set[Cell]:
        if include_derived:
            da, db = self.layer_digests(a), self.layer_digests(b)
            derived = {c[1] for c in da} & {c[1] for c in db} & DERIVED_LAYERS
            da = {c: d for c, d in da.items() if c[1] not in DERIVED_LAYERS or c[1] in derived}
            db = {c: d for c, d in db.items() if c[1] not in DERIVED_LAYERS or c[1] in derived}
        else:
            da, db = self.get(a).digests, self.get(b).digests
        return {c for c in set(da) | set(db) if da.get(c) != db.get(c)}

    def diff(self, a: str, b: str) -> SnapshotDiff:
        """Changed cells plus node-level changes; derived layers compared when both sides have them."""
        da, db = self.layer_digests(a), self.layer_digests(b)
        changed = sort_cells(self.changed_cells(a, b, include_derived=True))
        details: dict[Cell, LayerChange] = {}
        for cell in changed:
            left = {n.id: n for n in self.blob(da[cell]).nodes} if cell in da else {}
            right = {n.id: n for n in self.blob(db[cell]).nodes} if cell in db else {}
            details[cell] = LayerChange(
                added=sorted(set(right) - set(left)),
                removed=sorted(set(left) - set(right)),
                modified=sorted(nid for nid in set(left) & set(right) if left[nid] != right[nid]),
            )
        return SnapshotDiff(changed, details)

    def merge(self, feature: str, into: str = MAIN) -> str | ConflictReport:
        feature_head = self.head(feature)
        into_head = self.head(into)
        base = self.merge_base(feature_head, into_head)
        feature_changes = self.changed_cells(base, feature_head)
        into_changes = self.changed_cells(base, into_head)
        fd = self._snapshots[feature_head].digests
        idg = self._snapshots[into_head].digests
        conflicts = sort_cells(c for c in feature_changes & into_changes if fd.get(c) != idg.get(c))
        if conflicts:
            return ConflictReport(conflicts, dependency_closure(feature_changes | into_changes))
        merged = dict(idg)
        for cell in feature_changes:
            if cell in fd:
                merged[cell] = fd[cell]
            else:
                merged.pop(cell, None)
        handle = OpenSnapshot(self, into, (into_head, feature_head), into_head, merged)
        return self.commit(handle)

    def rebase(self, feature: str, onto: str = MAIN) -> RebaseResult:
        feature_head = self.head(feature)
        onto_head = self.resolve(onto)
        base = self.merge_base(feature_head, onto_head)
        feature_changes = self.changed_cells(base, feature_head)
        base_changes = self.changed_cells(base, onto_head)
        fd = self._snapshots[feature_head].digests
        cells = dict(self._snapshots[onto_head].digests)
        for cell in feature_changes:
            if cell in fd:
                cells[cell] = fd[cell]
            else:
                cells.pop(cell, None)
        handle = OpenSnapshot(self, feature, (onto_head,), feature_head, cells)
        return RebaseResult(
            handle=handle,
            revalidation=dependency_closure(feature_changes | base_changes),
            feature_changes=feature_changes,
            base_changes=base_changes,
        )

    def commit_rebase(self, result: RebaseResult) -> str:
        """Commit a rebased handle, tagging the replaced head so it stays reachable."""
        old = result.handle.expected_head
        sid = self.commit(result.handle)
        if old is not None:
            self.tag(f"{result.handle.branch}@pre-rebase-{old[:8]}", old)
        return sid
