"""``ndtwin`` command line: the CI hook surface.

Exit codes: 0 success / PASS / APPROVED, 2 FAIL / BLOCKED / merge conflict,
1 usage or runtime error.

Config is an INI file (``--config``)::

    [ndtwin]
    repo = .ndtwin            ; snapshot store directory
    tickets = .ndtwin/tickets ; ticket documents
    budget = 16               ; per-agent ReAct step budget

    [remote]
    url = http://127.0.0.1:9000/v1/complete
    timeout = 30
    retries = 2
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from .agents import APPROVED, ChangeDescriptor, TicketStore, Workflow, make_policy
from .errors import TwinError
from .ingest import build_base_layers, parse_network_spec
from .snapshots import ConflictReport, Repository, cell_key, sort_cells
from .tools import FAIL, PASS, call_tool, graph_query, list_tools, normalize_capability

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BLOCKED = 2

CONFIG_DEFAULTS = {"repo": ".ndtwin", "tickets": "", "budget": "16"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; 2 means BLOCKED here, so use 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def load_config(path: str | None) -> configparser.SectionProxy:
    parser = configparser.ConfigParser()
    parser.read_dict({"ndtwin": CONFIG_DEFAULTS})
    if path is not None:
        if not Path(path).exists():
            raise UsageError(f"config file not found: {path}")
        parser.read(path, encoding="utf-8")
    return parser["ndtwin"]


def _emit(data: Any) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=str))


def _load_json(text: str) -> Any:
    """Inline JSON, or ``@path`` to read it from a file."""
    try:
        if text.startswith("@"):
            return json.loads(Path(text[1:]).read_text(encoding="utf-8"))
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read JSON {text!r}: {exc}") from None


def _read_file(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(str(exc)) from None


class App:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = load_config(args.config)
        self.repo_path = args.repo or self.config.get("repo")
        self._repo: Repository | None = None

    @property
    def repo(self) -> Repository:
        if self._repo is None:
            self._repo = Repository(self.repo_path)
        return self._repo

    def tickets(self) -> TicketStore:
        return TicketStore(self.config.get("tickets") or Path(self.repo_path) / "tickets")

    def budget(self) -> int:
        return self.config.getint("budget")

    # -- commands -----------------------------------------------------------------

    def ingest(self) -> int:
        spec = parse_network_spec(_read_file(self.args.spec))
        repo, branch = self.repo, self.args.branch
        handle = repo.checkout(branch) if repo.has_branch(branch) else repo.new_snapshot(branch)
        sid = repo.commit(build_base_layers(spec, handle))
        _emit({"snapshot": sid, "branch": branch, "devices": sorted(d.hostname for d in spec.devices)})
        return EXIT_OK

    def snapshot(self) -> int:
        repo, a = self.repo, self.args
        if a.action == "list":
            _emit({"branches": {b.name: b.head for b in repo.branches()}, "snapshots": [s.to_dict() for s in repo.snapshots()]})
        elif a.action == "fork":
            sid = repo.commit(repo.fork(a.base, a.branch))
            _emit({"snapshot": sid, "branch": a.branch})
        elif a.action == "diff":
            _emit(repo.diff(a.a, a.b).to_dict())
        elif a.action == "merge":
            result = repo.merge(a.feature, a.into)
            if isinstance(result, ConflictReport):
                _emit({"conflict": result.to_dict()})
                return EXIT_BLOCKED
            _emit({"snapshot": result, "branch": a.into})
        elif a.action == "rebase":
            result = repo.rebase(a.feature, a.onto)
            sid = repo.commit_rebase(result)
            _emit({"snapshot": sid, "branch": a.feature, "revalidation": [cell_key(c) for c in sort_cells(result.revalidation)]})
        return EXIT_OK

    def query(self) -> int:
        query = _load_json("@" + self.args.file)
        rows = graph_query(self.repo, self.repo.resolve(self.args.snapshot), query)
        _emit({"rows": rows})
        return EXIT_OK

    def verify(self) -> int:
        req = {
            "capability": normalize_capability(self.args.capability),
            "snapshots": list(self.args.snapshot or []),
            "params": _load_json(self.args.params) if self.args.params else {},
        }
        result = call_tool(self.repo, req)
        _emit(result.to_dict())
        if result.status == PASS:
            return EXIT_OK
        return EXIT_BLOCKED if result.status == FAIL else EXIT_ERROR

    def tools(self) -> int:
        _emit(list_tools())
        return EXIT_OK

    def validate(self) -> int:
        descriptor = _load_json("@" + self.args.descriptor)
        if not isinstance(descriptor, dict) or "ticket" not in descriptor or "category" not in descriptor:
            raise UsageError("descriptor needs at least 'ticket' and 'category'")
        workflow = Workflow(self.repo, make_policy(self.args.policy, self.args.config), self.tickets(), budget=self.budget())
        report = workflow.validate_change(ChangeDescriptor.from_dict(descriptor))
        if self.args.out:
            Path(self.args.out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        _emit(report.to_dict())
        print(f"verdict: {report.verdict}", file=sys.stderr)
        return EXIT_OK if report.verdict == APPROVED else EXIT_BLOCKED

    def approve(self) -> int:
        doc = Workflow(self.repo, tickets=self.tickets()).approve(self.args.ticket, self.args.by)
        _emit(doc)
        return EXIT_OK if doc["approved"] else EXIT_BLOCKED

    def eval_run(self) -> int:
        from .evaluation import compute_metrics, load_library, run_scenario, scenario_library, write_records

        a = self.args
        if a.runs < 1 or a.variations < 1:
            raise UsageError("--runs and --variations must be >= 1")
        scenarios = load_library(a.scenarios) if a.scenarios else scenario_library()
        if a.only:
            scenarios = [s for s in scenarios if s.id in set(a.only)]
        policy = make_policy(a.policy, a.config)
        started = time.perf_counter()
        records = []
        for scenario in scenarios:
            variations = range(min(a.variations, 1 + len(scenario.intent_variations)))
            records.extend(run_scenario(scenario, policy, a.runs, variations=variations))
        report = compute_metrics(records, scenarios)
        log.info("evaluated %d runs in %.2fs", len(records), time.perf_counter() - started)
        if a.out:
            out = Path(a.out)
            out.mkdir(parents=True, exist_ok=True)
            write_records(records, out / "records.jsonl")
            (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
            (out / "summary.md").write_text(report.summary_table() + "\n", encoding="utf-8")
        print(report.summary_table())
        print(report.to_json())
        return EXIT_OK

    def serve(self) -> int:
        from .server import ServerContext, make_server, parse_addr

        try:
            host, port = parse_addr(self.args.addr)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        ctx = ServerContext(self.repo, self.tickets(), self.args.config, self.budget())
        server = make_server(ctx, host, port)
        print(f"serving JSON-RPC on http://{host}:{server.server_address[1]}", file=sys.stderr)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ndtwin", description="Network digital twin: snapshots, verification tools and change validation.")
    p.add_argument("--repo", help="snapshot store directory (default from config, else .ndtwin)")
    p.add_argument("--config", help="INI config file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("ingest", help="parse a network spec and commit it")
    s.add_argument("spec")
    s.add_argument("--branch", default="main")

    s = sub.add_parser("snapshot", help="list, fork, diff, merge or rebase snapshots")
    ss = s.add_subparsers(dest="action", parser_class=_Parser, required=True)
    ss.add_parser("list")
    x = ss.add_parser("fork")
    x.add_argument("base")
    x.add_argument("branch")
    x = ss.add_parser("diff")
    x.add_argument("a")
    x.add_argument("b")
    x = ss.add_parser("merge")
    x.add_argument("feature")
    x.add_argument("--into", default="main")
    x = ss.add_parser("rebase")
    x.add_argument("feature")
    x.add_argument("--onto", default="main")

    s = sub.add_parser("query", help="run a GraphQuery JSON file")
    s.add_argument("file")
    s.add_argument("--snapshot", default="main")

    s = sub.add_parser("verify", help="run one verification capability")
    s.add_argument("capability")
    s.add_argument("--snapshot", action="append", help="snapshot or branch; repeat for two-snapshot tools")
    s.add_argument("--params", help="JSON object or @file")

    sub.add_parser("tools", help="list verification tools")

    s = sub.add_parser("validate", help="validate a change descriptor")
    s.add_argument("descriptor")
    s.add_argument("--policy", choices=("scripted", "remote"), default="scripted")
    s.add_argument("--out", help="write the report JSON here")

    s = sub.add_parser("approve", help="record human approval of a ticket")
    s.add_argument("ticket")
    s.add_argument("--by", default="operator")

    s = sub.add_parser("eval", help="evaluation harness")
    es = s.add_subparsers(dest="action", parser_class=_Parser, required=True)
    x = es.add_parser("run")
    x.add_argument("--runs", type=int, default=10)
    x.add_argument("--variations", type=int, default=1, help="intent variations per scenario (1 = original intent only)")
    x.add_argument("--policy", choices=("scripted", "remote"), default="scripted")
    x.add_argument("--scenarios", help="directory of scenario bundles (default: built-in library)")
    x.add_argument("--only", nargs="*", help="scenario ids to run")
    x.add_argument("--out", help="directory for records.jsonl, metrics.json, summary.md")

    s = sub.add_parser("serve", help="run the JSON-RPC tool server")
    s.add_argument("--addr", default="127.0.0.1:8765")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        app = App(args)
        command = "eval_run" if args.command == "eval" else args.command
        return getattr(app, command)()
    except UsageError as exc:
        print(f"ndtwin: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except TwinError as exc:
        print(f"ndtwin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"ndtwin: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
