"""JSON-RPC 2.0 tool server over HTTP.

Methods: ``tools/list``, ``tools/call``, ``agents/validate_change``,
``snapshots/list``, ``snapshots/diff`` and ``query``. ``handle_request`` is the
transport-free core; ``serve`` wraps it in a threading HTTP server (POST one
request object or a batch array to any path).
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Mapping

from .agents import ChangeDescriptor, TicketStore, Workflow, make_policy
from .errors import InvalidParams, TwinError
from .snapshots import Repository
from .tools import call_tool, graph_query, list_tools

log = logging.getLogger(__name__)

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


@dataclass
class ServerContext:
    repo: Repository
    tickets: TicketStore = field(default_factory=TicketStore)
    config_path: str | None = None
    budget: int = 16


class RpcError(Exception):
    def __init__(self, code: int, message: str, data: Any = None):
        super().__init__(message)
        self.code = code
        self.data = data


def _need(params: Mapping[str, Any], key: str) -> Any:
    if key not in params:
        raise InvalidParams(f"missing parameter {key!r}")
    return params[key]


def snapshot_listing(repo: Repository) -> dict[str, Any]:
    return {
        "branches": {b.name: b.head for b in repo.branches()},
        "tags": repo.tags(),
        "snapshots": [s.to_dict() for s in repo.snapshots()],
    }


def _tools_call(ctx: ServerContext, params: Mapping[str, Any]) -> Any:
    return call_tool(ctx.repo, params).to_dict()


def _validate_change(ctx: ServerContext, params: Mapping[str, Any]) -> Any:
    try:
        descriptor = ChangeDescriptor.from_dict(_need(params, "descriptor"))
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidParams(f"bad descriptor: {exc}") from None
    try:
        policy = make_policy(params.get("policy", "scripted"), ctx.config_path)
    except ValueError as exc:
        raise InvalidParams(str(exc)) from None
    # one workflow per request: its timing state is not shared across threads
    workflow = Workflow(ctx.repo, policy, ctx.tickets, budget=ctx.budget)
    return workflow.validate_change(descriptor).to_dict()


def _diff(ctx: ServerContext, params: Mapping[str, Any]) -> Any:
    return ctx.repo.diff(_need(params, "a"), _need(params, "b")).to_dict()


def _query(ctx: ServerContext, params: Mapping[str, Any]) -> Any:
    ref = ctx.repo.resolve(_need(params, "snapshot"))
    return {"rows": graph_query(ctx.repo, ref, _need(params, "query"))}


METHODS: dict[str, Callable[[ServerContext, Mapping[str, Any]], Any]] = {
    "tools/list": lambda ctx, params: {"tools": list_tools()},
    "tools/call": _tools_call,
    "agents/validate_change": _validate_change,
    "snapshots/list": lambda ctx, params: snapshot_listing(ctx.repo),
    "snapshots/diff": _diff,
    "query": _query,
}


def _error(id_: Any, code: int, message: str, data: Any = None) -> dict[str, Any]:
    err: dict[str, Any] = {"code": code, "message": message}
    if data is not None:
        err["data"] = data
    return {"jsonrpc": "2.0", "id": id_, "error": err}


def _dispatch(ctx: ServerContext, req: Any) -> dict[str, Any] | None:
    if not isinstance(req, dict) or req.get("jsonrpc") != "2.0" or not isinstance(req.get("method"), str):
        return _error(None, INVALID_REQUEST, "invalid request")
    notify = "id" not in req
    id_ = req.get("id")
    if not (id_ is None or isinstance(id_, (str, int))) or isinstance(id_, bool):
        return _error(None, INVALID_REQUEST, "invalid id")
    params = req.get("params", {})
    method = METHODS.get(req["method"])
    try:
        if method is None:
            raise RpcError(METHOD_NOT_FOUND, f"method not found: {req['method']}")
        if not isinstance(params, dict):
            raise InvalidParams("params must be an object")
        result = method(ctx, params)
        response = {"jsonrpc": "2.0", "id": id_, "result": result}
    except RpcError as exc:
        response = _error(id_, exc.code, str(exc), exc.data)
    except TwinError as exc:
        response = _error(id_, exc.code, str(exc), {"type": type(exc).__name__})
    except Exception as exc:  # noqa: BLE001 - internal errors become -32603
        log.exception("internal error in %s", req["method"])
        response = _error(id_, INTERNAL_ERROR, f"{type(exc).__name__}: {exc}")
    return None if notify else response


def handle_request(ctx: ServerContext, payload: str | bytes | Any) -> Any:
    """One JSON-RPC exchange; returns the response object, a batch list, or None."""
    if isinstance(payload, (str, bytes)):
        try:
            payload = json.loads(payload)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return _error(None, PARSE_ERROR, f"parse error: {exc}")
    if isinstance(payload, list):
        if not payload:
            return _error(None, INVALID_REQUEST, "empty batch")
        out = [r for r in (_dispatch(ctx, item) for item in payload) if r is not None]
        return out or None
    return _dispatch(ctx, payload)


class _Handler(BaseHTTPRequestHandler):
    ctx: ServerContext

    def do_POST(self) -> None:  # noqa: N802
        length = int(self.headers.get("Content-Length") or 0)
        response = handle_request(self.ctx, self.rfile.read(length))
        if response is None:
            self.send_response(204)
            self.end_headers()
            return
        body = json.dumps(response).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("%s " + fmt, self.address_string(), *args)


def make_server(ctx: ServerContext, host: str = "127.0.0.1", port: int = 8765) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"ctx": ctx})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve_in_thread(ctx: ServerContext, host: str = "127.0.0.1", port: int = 0) -> tuple[ThreadingHTTPServer, threading.Thread]:
    server = make_server(ctx, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise ValueError(f"bad address {addr!r}; expected host:port") from None
