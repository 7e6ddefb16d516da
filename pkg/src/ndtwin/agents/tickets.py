"""File-backed ticket store: one append-only JSON-lines document per ticket."""

from __future__ import annotations

import fcntl
import json
import os
import re
import threading
import time
from pathlib import Path
from typing import Any, Mapping

from ..errors import UnknownTicket

_SAFE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class TicketStore:
    """``root`` None keeps tickets in memory; otherwise ``<root>/<ticket>.jsonl``."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self._mem: dict[str, list[dict[str, Any]]] = {}
        self._lock = threading.Lock()
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, ticket: str) -> Path:
        if not _SAFE.match(ticket):
            raise ValueError(f"invalid ticket id {ticket!r}")
        assert self.root is not None
        return self.root / f"{ticket}.jsonl"

    def append(self, ticket: str, event: str, payload: Mapping[str, Any] | None = None) -> dict[str, Any]:
        record = {"event": event, "time": time.time(), **(payload or {})}
        with self._lock:
            if self.root is None:
                self._mem.setdefault(ticket, []).append(record)
                return record
            line = (json.dumps(record, sort_keys=True) + "\n").encode("utf-8")
            fd = os.open(self._path(ticket), os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                fcntl.flock(fd, fcntl.LOCK_EX)
                os.write(fd, line)
            finally:
                fcntl.flock(fd, fcntl.LOCK_UN)
                os.close(fd)
        return record

    def events(self, ticket: str) -> list[dict[str, Any]]:
        if self.root is None:
            if ticket not in self._mem:
                raise UnknownTicket(f"unknown ticket {ticket!r}")
            return list(self._mem[ticket])
        path = self._path(ticket)
        if not path.exists():
            raise UnknownTicket(f"unknown ticket {ticket!r}")
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]

    def tickets(self) -> list[str]:
        if self.root is None:
            return sorted(self._mem)
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def document(self, ticket: str) -> dict[str, Any]:
        """Fold of the event log: latest report and approval state."""
        events = self.events(ticket)
        doc: dict[str, Any] = {"ticket": ticket, "events": len(events), "report": None, "approved": False}
        for ev in events:
            if ev["event"] in ("created", "submitted"):
                doc["descriptor"] = ev.get("descriptor")
            elif ev["event"] == "report":
                doc["report"] = ev.get("report")
                doc["approved"] = False
            elif ev["event"] == "approved":
                doc["approved"] = True
                doc["approved_by"] = ev.get("by")
        return doc
