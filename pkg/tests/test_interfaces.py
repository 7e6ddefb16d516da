from __future__ import annotations

import json
import urllib.request
from concurrent.futures import ThreadPoolExecutor

import pytest

from conftest import commit_spec, mtu_pair
from ndtwin.cli import EXIT_BLOCKED, EXIT_ERROR, EXIT_OK, main
from ndtwin.evaluation import scenario_library
from ndtwin.snapshots import Repository
from ndtwin.server import ServerContext, handle_request, serve_in_thread
from ndtwin.tools import call_tool, list_tools

SCENARIOS = {s.id: s for s in scenario_library()}
HTTPS = {"src_ips": ["203.0.113.0/30"], "dst_ips": ["10.20.0.1/32"], "protocols": ["tcp"], "src_ports": [1024], "dst_ports": [443]}


def rpc(method: str, params=None, id_=1) -> dict:
    req = {"jsonrpc": "2.0", "method": method, "id": id_}
    if params is not None:
        req["params"] = params
    return req


@pytest.fixture
def ctx(repo):
    return ServerContext(repo)


@pytest.fixture
def loaded(repo):
    """Snapshots covering every capability."""
    ids = {}
    for sid, cid in (("S7", "bad"), ("S2", "good"), ("S6", "bad")):
        s = SCENARIOS[sid]
        ids[f"{sid}/base"] = commit_spec(repo, s.base, f"{sid}-base")
        ids[f"{sid}/{cid}"] = commit_spec(repo, s.candidate_data(cid), f"{sid}-{cid}")
    ids["mtu"] = commit_spec(repo, mtu_pair(1500, 9000), "mtu")
    return ids


def every_capability(ids: dict) -> list[dict]:
    s7, s7b = ids["S7/base"], ids["S7/bad"]
    s2, s2g = ids["S2/base"], ids["S2/good"]
    return [
        {"capability": "MTU_CONSISTENCY", "snapshots": [ids["mtu"]]},
        {"capability": "REACHABILITY", "snapshots": [s7b], "params": {"src": "p2", "dst_ip": "2001:db8:10::1"}},
        {"capability": "DIFFERENTIAL_REACHABILITY", "snapshots": [s7, s7b]},
        {"capability": "LOOP_DETECTION", "snapshots": [s7b]},
        {"capability": "TRACEROUTE", "snapshots": [s7], "params": {"src": "p2", "dst_ip": "2001:db8:10::1"}},
        {"capability": "ACL_SEARCH", "snapshots": [s2g], "params": {"device": "fw", "acl": "edge", "header_space": HTTPS, "action": "deny", "expect": "none"}},
        {"capability": "ACL_COMPARE", "snapshots": [s2, s2g], "params": {"device": "fw", "acl": "edge", "header_space": HTTPS}},
        {"capability": "SLA_VERIFY_SIM", "snapshots": [ids["S6/bad"]]},
        {"capability": "SLA_VERIFY_PREDICTOR", "snapshots": [ids["S6/bad"]]},
        {"capability": "CONFIG_ANOMALY", "snapshots": [s7, s7b], "params": {"roles": {"p1": "x", "p2": "x", "b1": "x"}}},
        {"capability": "NDM_QUERY", "snapshots": [s7], "params": {"query": {"start": {"layer": "DEVICE", "kind": "device"}}, "expect_rows": 4}},
    ]


# --- JSON-RPC core -----------------------------------------------------------------------


def test_tools_list_mirrors_registry(ctx):
    result = handle_request(ctx, rpc("tools/list"))["result"]
    assert result["tools"] == list_tools() and len(result["tools"]) == 10


def test_tools_call_is_transparent(ctx, loaded):
    for req in every_capability(loaded):
        response = handle_request(ctx, json.dumps(rpc("tools/call", req)))
        payload = response["result"]
        assert payload.pop("duration") >= 0
        assert payload == call_tool(ctx.repo, req).to_dict(with_duration=False), req["capability"]


def test_protocol_errors(ctx):
    assert handle_request(ctx, "{nope")["error"]["code"] == -32700
    assert handle_request(ctx, {"method": "tools/list", "id": 1})["error"]["code"] == -32600
    assert handle_request(ctx, {"jsonrpc": "2.0", "method": "tools/list", "id": True})["error"]["code"] == -32600
    assert handle_request(ctx, [])["error"]["code"] == -32600
    assert handle_request(ctx, rpc("tools/explode"))["error"]["code"] == -32601
    assert handle_request(ctx, rpc("tools/list", [1, 2]))["error"]["code"] == -32602
    assert handle_request(ctx, rpc("tools/call", {"snapshots": []}))["error"]["code"] == -32602


def test_application_errors_carry_stable_codes(ctx, loaded):
    unknown_snap = handle_request(ctx, rpc("tools/call", {"capability": "LOOP_DETECTION", "snapshots": ["nope"]}))["error"]
    assert unknown_snap["code"] == 1020 and unknown_snap["data"]["type"] == "UnknownSnapshot"
    req = {"capability": "REACHABILITY", "snapshots": [loaded["mtu"]], "params": {"src": "zz", "dst_ip": "10.0.0.2"}}
    tool_error = handle_request(ctx, rpc("tools/call", req))["error"]
    assert tool_error["code"] == 1050 and tool_error["code"] >= 1000


def test_batches_and_notifications(ctx):
    assert handle_request(ctx, {"jsonrpc": "2.0", "method": "tools/list"}) is None
    batch = [rpc("tools/list", id_="a"), {"jsonrpc": "2.0", "method": "tools/list"}, rpc("nope", id_="b"), 7]
    out = handle_request(ctx, batch)
    assert [r.get("id") for r in out] == ["a", "b", None]
    assert "result" in out[0] and out[1]["error"]["code"] == -32601 and out[2]["error"]["code"] == -32600
    assert handle_request(ctx, [{"jsonrpc": "2.0", "method": "tools/list"}]) is None


def test_snapshot_and_query_methods(ctx, loaded):
    listing = handle_request(ctx, rpc("snapshots/list"))["result"]
    assert listing["branches"]["mtu"] == loaded["mtu"]
    diff = handle_request(ctx, rpc("snapshots/diff", {"a": "S2-base", "b": "S2-good"}))["result"]
    assert diff == ctx.repo.diff("S2-base", "S2-good").to_dict()
    rows = handle_request(ctx, rpc("query", {"snapshot": "mtu", "query": {"start": {"layer": "DEVICE", "kind": "device"}}}))["result"]["rows"]
    assert len(rows) == 2
    assert handle_request(ctx, rpc("snapshots/diff", {"a": "mtu"}))["error"]["code"] == -32602


def test_validate_change_method(ctx, repo):
    s = SCENARIOS["S3"]
    commit_spec(repo, s.base, "main")
    commit_spec(repo, s.candidate_data("good"), "cand")
    descriptor = {"ticket": "RPC-1", "category": s.descriptor["category"], "scope": s.descriptor["scope"], "candidate": "cand"}
    report = handle_request(ctx, rpc("agents/validate_change", {"descriptor": descriptor}))["result"]
    assert report["verdict"] == "APPROVED_FOR_REVIEW"
    assert handle_request(ctx, rpc("agents/validate_change", {"descriptor": {"intent": "x"}}))["error"]["code"] == -32602
    assert handle_request(ctx, rpc("agents/validate_change", {"descriptor": descriptor, "policy": "psychic"}))["error"]["code"] == -32602


# --- HTTP transport ----------------------------------------------------------------------


def post(url: str, body) -> tuple[int, object]:
    data = body if isinstance(body, bytes) else json.dumps(body).encode()
    req = urllib.request.Request(url, data, {"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=10) as resp:
        raw = resp.read()
        return resp.status, (json.loads(raw) if raw else None)


def test_http_server_concurrency(ctx, loaded):
    server, _ = serve_in_thread(ctx)
    url = f"http://127.0.0.1:{server.server_address[1]}/"
    try:
        reqs = every_capability(loaded) * 4
        with ThreadPoolExecutor(max_workers=12) as pool:
            replies = list(pool.map(lambda r: post(url, rpc("tools/call", r)), reqs))
        for req, (status, body) in zip(reqs, replies):
            assert status == 200
            body["result"].pop("duration")
            assert body["result"] == call_tool(ctx.repo, req).to_dict(with_duration=False)
        assert post(url, {"jsonrpc": "2.0", "method": "tools/list"}) == (204, None)
        status, body = post(url, b"not json")
        assert status == 200 and body["error"]["code"] == -32700
    finally:
        server.shutdown()
        server.server_close()


# --- CLI ----------------------------------------------------------------------------------


def write(path, data) -> str:
    path.write_text(json.dumps(data))
    return str(path)


def cli(tmp_path, *args) -> int:
    return main(["--repo", str(tmp_path / "repo"), *args])


def test_cli_verify_exit_codes(tmp_path, capsys):
    assert cli(tmp_path, "ingest", write(tmp_path / "bad.json", mtu_pair(1500, 9000))) == EXIT_OK
    assert cli(tmp_path, "ingest", write(tmp_path / "ok.json", mtu_pair(1500, 1500)), "--branch", "ok") == EXIT_OK
    capsys.readouterr()
    assert cli(tmp_path, "verify", "mtu_consistency", "--snapshot", "main") == EXIT_BLOCKED
    printed = json.loads(capsys.readouterr().out)
    assert printed["status"] == "FAIL" and len(printed["findings"]) == 1
    req = {"capability": "MTU_CONSISTENCY", "snapshots": ["main"]}
    direct = call_tool(Repository(tmp_path / "repo"), req).to_dict(with_duration=False)
    printed.pop("duration")
    assert printed == direct
    assert cli(tmp_path, "verify", "MTU-CONSISTENCY", "--snapshot", "ok") == EXIT_OK
    assert cli(tmp_path, "verify", "sla_verify_predictor", "--snapshot", "ok") == EXIT_ERROR
    assert cli(tmp_path, "verify", "no_such_tool", "--snapshot", "ok") == EXIT_ERROR
    assert cli(tmp_path, "verify", "reachability", "--snapshot", "ok", "--params", "{bad") == EXIT_ERROR


def test_cli_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        cli(tmp_path, "frobnicate")
    assert info.value.code == EXIT_ERROR and "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == EXIT_ERROR
    assert main(["--config", str(tmp_path / "missing.ini"), "tools"]) == EXIT_ERROR
    assert cli(tmp_path, "ingest", str(tmp_path / "absent.json")) == EXIT_ERROR
    (tmp_path / "broken.json").write_text('{"devices": [\n  oops]}')
    assert cli(tmp_path, "ingest", str(tmp_path / "broken.json")) == EXIT_ERROR
    assert "line 2" in capsys.readouterr().err


def test_cli_tools_query_and_snapshots(tmp_path, capsys):
    cli(tmp_path, "ingest", write(tmp_path / "a.json", mtu_pair(1500, 1500)))
    assert cli(tmp_path, "snapshot", "fork", "main", "feature") == EXIT_OK
    cli(tmp_path, "ingest", write(tmp_path / "b.json", mtu_pair(1500, 9000)), "--branch", "feature")
    capsys.readouterr()
    assert cli(tmp_path, "tools") == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)) == 10
    assert cli(tmp_path, "snapshot", "diff", "main", "feature") == EXIT_OK
    diff = json.loads(capsys.readouterr().out)
    assert diff
    query = write(tmp_path / "q.json", {"start": {"layer": "INTERFACES", "kind": "interface", "where": [{"attr": "mtu", "op": "eq", "value": 9000}]}})
    assert cli(tmp_path, "query", query, "--snapshot", "feature") == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)["rows"]) == 1
    assert cli(tmp_path, "snapshot", "merge", "feature") == EXIT_OK
    assert cli(tmp_path, "snapshot", "list") == EXIT_OK


@pytest.mark.parametrize("sid", sorted(SCENARIOS))
def test_cli_validate_exit_code_contract(tmp_path, capsys, sid):
    s = SCENARIOS[sid]
    cli(tmp_path, "ingest", write(tmp_path / "base.json", s.base))
    for cid, expected in (("good", EXIT_OK), ("bad", EXIT_BLOCKED)):
        cli(tmp_path, "snapshot", "fork", "main", cid)
        cli(tmp_path, "ingest", write(tmp_path / f"{cid}.json", s.candidate_data(cid)), "--branch", cid)
        ticket = f"{sid}-{cid}"
        descriptor = write(tmp_path / f"{cid}-d.json", {"ticket": ticket, "category": s.descriptor["category"], "scope": s.descriptor["scope"], "candidate": cid})
        out = tmp_path / f"{cid}-report.json"
        assert cli(tmp_path, "validate", descriptor, "--out", str(out)) == expected
        report = json.loads(out.read_text())
        assert (report["verdict"] == "BLOCKED") == (expected == EXIT_BLOCKED)
        assert cli(tmp_path, "approve", ticket) == expected
    capsys.readouterr()


def test_cli_eval_run(tmp_path, capsys):
    out = tmp_path / "eval"
    assert main(["eval", "run", "--runs", "2", "--only", "S4", "S7", "--out", str(out)]) == EXIT_OK
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["error_detection"] == 1.0 and metrics["counts"]["FP"] == 0
    assert len((out / "records.jsonl").read_text().splitlines()) == 8
    assert "| Error Detection | 1.00 |" in (out / "summary.md").read_text()
    assert main(["eval", "run", "--runs", "0"]) == EXIT_ERROR
    capsys.readouterr()
