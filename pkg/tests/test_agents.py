from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from conftest import commit_spec, mtu_pair
from ndtwin.agents import (
    APPROVED,
    BLOCKED,
    CATEGORIES,
    Action,
    AgentRole,
    ChangeDescriptor,
    RemoteConfig,
    RemotePolicy,
    ScriptedPolicy,
    TestSpec,
    TicketStore,
    Workflow,
    expectation_holds,
    judge,
    make_policy,
    parse_expectation,
    run_agent,
    template_plan,
    validate_plan,
)
from ndtwin.errors import BudgetExhausted, InvalidParams, UnknownCategory, UnknownTicket
from ndtwin.evaluation import scenario_library
from ndtwin.tools import call_tool, graph_query
from oracles import closure_oracle

SCENARIOS = {s.id: s for s in scenario_library()}
MTU_QUERY = {
    "start": {"layer": "INTERFACES", "kind": "interface", "where": [{"attr": "mtu", "op": "ne", "value": 1500}]},
    "project": ["device", "name", "mtu"],
    "limit": 1000,
}


def load_scenario(repo, sid: str, cid: str) -> tuple[str, str]:
    s = SCENARIOS[sid]
    base = commit_spec(repo, s.base, "main")
    cand = commit_spec(repo, s.candidate_data(cid), f"{sid}-{cid}")
    return base, cand


def descriptor_for(sid: str, candidate: str | None, ticket: str = "T-1") -> ChangeDescriptor:
    d = SCENARIOS[sid].descriptor
    return ChangeDescriptor(ticket, d["intent"], d["category"], dict(d["scope"]), candidate, "main")


class ListPolicy:
    """Replays a fixed list of actions."""

    def __init__(self, actions):
        self.actions = list(actions)

    def next_action(self, role, state):
        return self.actions[len(state.steps)]


# --- ReAct loop ---------------------------------------------------------------------------


def test_ndm_query_template_is_one_call_then_final(repo):
    sid = commit_spec(repo, mtu_pair(1500, 9000))
    wf = Workflow(repo)
    ctx = {"snapshot": sid, "ticket": "q1"}
    run = run_agent(AgentRole.NDM_QUERY, {"template": "interfaces_mtu_not", "value": 1500}, ScriptedPolicy(), ctx, wf.tools(ctx), memory=wf.memory)
    assert [s.action.kind for s in run.state.steps] == ["TOOL_CALL", "FINAL"]
    assert run.state.steps[0].action.tool == "graph_query"
    assert run.answer["rows"] == graph_query(repo, sid, MTU_QUERY)
    assert [(r["device"], r["mtu"]) for r in run.answer["rows"]] == [("r2", 9000)]
    assert wf.memory.transcripts("q1") == [run.state.to_dict()]


def test_unknown_question_template_is_a_final_error(repo):
    sid = commit_spec(repo, mtu_pair())
    with pytest.raises(Exception, match="no rule"):
        Workflow(repo).ndm_query({"template": "colour"}, sid)


def test_tool_outside_role_is_an_observation(repo):
    sid = commit_spec(repo, mtu_pair())
    policy = ListPolicy([Action.call("MTU_CONSISTENCY", {"snapshots": [sid]}), Action.call("nope", {}), Action.final("done")])
    wf = Workflow(repo)
    run = run_agent(AgentRole.NDM_QUERY, {}, policy, {"snapshot": sid}, wf.tools({}))
    assert run.answer == "done"
    first, second = run.state.observations()
    assert first.startswith("UnknownTool") and second.startswith("UnknownTool")


def test_tool_failures_become_text_observations(repo):
    wf = Workflow(repo)
    policy = ListPolicy([Action.call("graph_query", {"snapshot": "missing", "query": MTU_QUERY}), Action.final(None)])
    run = run_agent(AgentRole.NDM_QUERY, {}, policy, {}, wf.tools({}))
    assert run.state.observations()[0].startswith("UnknownSnapshot")


def test_budget_exhaustion_carries_transcript(repo):
    sid = commit_spec(repo, mtu_pair())
    wf = Workflow(repo)
    with pytest.raises(BudgetExhausted) as info:
        run_agent(AgentRole.NDM_QUERY, {"query": MTU_QUERY}, ScriptedPolicy(), {"snapshot": sid}, wf.tools({}), budget=1)
    assert len(info.value.state.steps) == 1


def test_scripted_policy_is_pure(repo):
    sid = commit_spec(repo, mtu_pair())
    wf = Workflow(repo)
    a = run_agent(AgentRole.NDM_QUERY, {"query": MTU_QUERY}, ScriptedPolicy(), {"snapshot": sid}, wf.tools({}))
    b = run_agent(AgentRole.NDM_QUERY, {"query": MTU_QUERY}, ScriptedPolicy(), {"snapshot": sid}, wf.tools({}))
    assert a.state.to_dict() == b.state.to_dict()


# --- impact and planning -----------------------------------------------------------------


def impact_of(repo, sid: str, cid: str) -> dict:
    load_scenario(repo, sid, cid)
    wf = Workflow(repo)
    context = {"ticket": "t", "production": repo.resolve("main"), "candidate": repo.resolve(f"{sid}-{cid}")}
    return wf.impact_assess(descriptor_for(sid, f"{sid}-{cid}"), context)


def test_identical_candidate_has_empty_impact(repo):
    sid = commit_spec(repo, SCENARIOS["S4"].base, "main")
    wf = Workflow(repo)
    impact = wf.impact_assess(descriptor_for("S4", sid), {"production": sid, "candidate": sid})
    assert impact == {"changed": [], "affected": [], "devices": [], "layers": [], "risk_notes": []}


def test_mtu_edit_impact_matches_diff_closure(repo):
    impact = impact_of(repo, "S4", "bad")
    changed = {tuple(k.split("/")) for k in impact["changed"]}
    assert changed == {("r2", "INTERFACES"), ("r2", "RAW_CONFIG")} or changed == {("r1", "INTERFACES"), ("r1", "RAW_CONFIG")}
    assert {tuple(k.split("/")) for k in impact["affected"]} == closure_oracle(changed)
    assert impact["risk_notes"]


def test_acl_edit_impact_reaches_routing(repo):
    impact = impact_of(repo, "S2", "good")
    assert impact["devices"] == ["fw"] and "ROUTING" in impact["layers"]


def test_category_templates():
    kinds = lambda plan: [t.capability for t in plan]  # noqa: E731
    mtu = template_plan("MTU", {"devices": ["r1"]})
    assert kinds(mtu) == ["MTU_CONSISTENCY", "DIFFERENTIAL_REACHABILITY"]
    redis = kinds(template_plan("REDISTRIBUTION", SCENARIOS["S7"].descriptor["scope"]))
    assert "LOOP_DETECTION" in redis and "REACHABILITY" in redis
    summary = template_plan("SUMMARIZATION", SCENARIOS["S8"].descriptor["scope"])
    negative = [t for t in summary if t.capability == "NDM_QUERY" and t.params["expect_rows"] == "none"]
    assert len(negative) == 3 and all(t.requirement_id.startswith("specific-suppressed") for t in negative)
    with pytest.raises(UnknownCategory):
        template_plan("GARDENING", {})


@pytest.mark.parametrize("sid", sorted(SCENARIOS))
def test_every_scenario_plan_validates(sid):
    d = SCENARIOS[sid].descriptor
    assert d["category"] in CATEGORIES
    plan = template_plan(d["category"], d["scope"])
    validate_plan(plan)
    assert len({t.id for t in plan}) == len(plan)


def test_plan_validation_rejects_bad_specs():
    with pytest.raises(InvalidParams):
        validate_plan([TestSpec("T1", "x", "REACHABILITY", {"src": "a"})])
    with pytest.raises(InvalidParams):
        validate_plan([TestSpec("T1", "x", "LOOP_DETECTION"), TestSpec("T1", "y", "LOOP_DETECTION")])
    with pytest.raises(InvalidParams):
        validate_plan([TestSpec("T1", "x", "LOOP_DETECTION", {}, "status is PASS")])


def test_expectation_grammar():
    result = {"status": "FAIL", "findings": [{}, {}], "evidence": {"reachable": False, "traces": [1, 2, 3], "matches": 4}}
    assert expectation_holds("status == FAIL and findings == 2", result)
    assert expectation_holds("reachable == false and traces >= 3 and matches < 5", result)
    assert not expectation_holds("status == PASS", result)
    assert not expectation_holds("missing > 1", result)
    assert [c.value for c in parse_expectation("a == null and b == 1.5 and c != word")] == [None, 1.5, "word"]


def test_judge_rules():
    test = TestSpec("T1", "r", "LOOP_DETECTION")
    assert judge(test, {"status": "PASS", "findings": []}).outcome == "PASSED"
    assert judge(test, {"status": "FAIL", "findings": [{"x": 1}]}).findings == [{"x": 1}]
    errored = judge(test, {"status": "ERROR", "findings": [], "diagnostic": "boom"})
    assert errored.outcome == "ERROR" and errored.diagnostic == "boom"
    assert judge(test, "ToolError: nope").outcome == "ERROR"


# --- end to end --------------------------------------------------------------------------


def test_acl_refactor_good_is_approved_and_bad_is_blocked(repo):
    load_scenario(repo, "S3", "good")
    good = Workflow(repo).validate_change(descriptor_for("S3", "S3-good"))
    assert good.verdict == APPROVED and good.diagnostic is None
    commit_spec(repo, SCENARIOS["S3"].candidate_data("bad"), "S3-bad")
    bad = Workflow(repo).validate_change(descriptor_for("S3", "S3-bad"))
    assert bad.verdict == BLOCKED
    [compare] = [r for r in bad.results if r.capability == "ACL_COMPARE"]
    assert compare.outcome == "FAILED" and compare.findings


def test_redistribution_loop_is_blocked_by_loop_detection(repo):
    load_scenario(repo, "S7", "bad")
    report = Workflow(repo).validate_change(descriptor_for("S7", "S7-bad"))
    assert report.verdict == BLOCKED
    assert [r.outcome for r in report.results if r.capability == "LOOP_DETECTION"] == ["FAILED"]


def test_missing_or_unknown_candidate_blocks(repo):
    commit_spec(repo, SCENARIOS["S3"].base, "main")
    tickets = TicketStore()
    wf = Workflow(repo, tickets=tickets)
    report = wf.validate_change(descriptor_for("S3", None))
    assert report.verdict == BLOCKED and report.diagnostic == "no candidate"
    report = wf.validate_change(descriptor_for("S3", "no-such-branch", "T-2"))
    assert report.verdict == BLOCKED and "no-such-branch" in report.diagnostic
    assert tickets.document("T-1")["report"]["diagnostic"] == "no candidate"


def test_stage_error_blocks_with_diagnostic(repo):
    load_scenario(repo, "S3", "good")
    descriptor = descriptor_for("S3", "S3-good")
    descriptor.category = "GARDENING"
    report = Workflow(repo).validate_change(descriptor)
    assert report.verdict == BLOCKED and "GARDENING" in report.diagnostic


@pytest.mark.parametrize("sid", sorted(SCENARIOS))
def test_gate_soundness_and_determinism(repo, sid):
    for cid in ("good", "bad"):
        load_scenario(repo, sid, cid)
        one = Workflow(repo).validate_change(descriptor_for(sid, f"{sid}-{cid}"))
        two = Workflow(repo).validate_change(descriptor_for(sid, f"{sid}-{cid}"))
        assert json.dumps(one.to_dict(False), sort_keys=True) == json.dumps(two.to_dict(False), sort_keys=True)
        assert (one.verdict == BLOCKED) == any(r.outcome != "PASSED" for r in one.results)
        assert one.verdict == (APPROVED if cid == "good" else BLOCKED)
        assert set(one.timings) >= {"ASSISTANT", "IMPACT", "TEST_PLANNER", "TEST_EXECUTOR"}


def test_transcript_integrity(repo):
    load_scenario(repo, "S8", "bad")
    wf = Workflow(repo)
    wf.validate_change(descriptor_for("S8", "S8-bad", "T-9"))
    transcripts = wf.memory.transcripts("T-9")
    assert [t["role"] for t in transcripts] == ["IMPACT", "TEST_PLANNER", "TEST_EXECUTOR", "ASSISTANT"]
    executor = transcripts[2]
    calls = [s for s in executor["steps"] if s["action"]["kind"] == "TOOL_CALL"]
    assert calls
    for step in calls:
        action = step["action"]
        req = {"capability": action["tool"], **action["params"]}
        assert step["observation"] == call_tool(repo, req).to_dict(with_duration=False)


def test_concurrent_tickets_do_not_interfere(repo):
    load_scenario(repo, "S4", "good")
    commit_spec(repo, SCENARIOS["S4"].candidate_data("bad"), "S4-bad")
    jobs = [(f"T-{i}", "S4-good" if i % 2 else "S4-bad") for i in range(8)]
    store = TicketStore()
    with ThreadPoolExecutor(max_workers=4) as pool:
        reports = list(pool.map(lambda j: Workflow(repo, tickets=store).validate_change(descriptor_for("S4", j[1], j[0])), jobs))
    assert [r.verdict for r in reports] == [APPROVED if i % 2 else BLOCKED for i in range(8)]
    assert store.tickets() == sorted(t for t, _ in jobs)


# --- ticket store ------------------------------------------------------------------------


def test_ticket_store_file_backed(tmp_path, repo):
    store = TicketStore(tmp_path / "tickets")
    with pytest.raises(UnknownTicket):
        store.events("T-1")
    with pytest.raises(ValueError):
        store.append("../escape", "created")
    load_scenario(repo, "S3", "good")
    wf = Workflow(repo, tickets=store)
    wf.validate_change(descriptor_for("S3", "S3-good"))
    doc = TicketStore(tmp_path / "tickets").document("T-1")
    assert doc["report"]["verdict"] == APPROVED and doc["approved"] is False
    assert wf.approve("T-1", by="alice")["approved_by"] == "alice"
    commit_spec(repo, SCENARIOS["S3"].candidate_data("bad"), "S3-bad")
    wf.validate_change(descriptor_for("S3", "S3-bad", "T-2"))
    assert wf.approve("T-2")["approved"] is False


def test_ticket_appends_are_atomic(tmp_path):
    store = TicketStore(tmp_path)
    payload = {"blob": "x" * 5000}

    def hammer(i):
        for _ in range(25):
            store.append("T-1", f"e{i}", payload)

    threads = [threading.Thread(target=hammer, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    events = store.events("T-1")
    assert len(events) == 200 and all(e["blob"] == payload["blob"] for e in events)


# --- remote policy -----------------------------------------------------------------------


class FakeCompletions:
    def __init__(self, replies):
        self.replies = list(replies)
        self.requests: list[list[dict]] = []
        handler = self._handler()
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def _handler(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                outer.requests.append(body["messages"])
                reply = outer.replies[min(len(outer.requests), len(outer.replies)) - 1]
                data = json.dumps({"content": reply}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        return Handler

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_address[1]}/v1/chat"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def test_remote_policy_wire_contract(repo):
    sid = commit_spec(repo, mtu_pair(1500, 9000))
    call = json.dumps({"kind": "TOOL_CALL", "tool": "graph_query", "params": {"snapshot": sid, "query": MTU_QUERY}, "thought": "look"})
    with FakeCompletions([f"Sure.\n{call}", '{"kind": "FINAL", "answer": {"rows": 1}}']) as fake:
        policy = RemotePolicy(RemoteConfig(fake.url, timeout=5, retries=0))
        run = run_agent(AgentRole.NDM_QUERY, {"question": "which mtu differs"}, policy, {"snapshot": sid}, Workflow(repo).tools({}))
    assert run.answer == {"rows": 1}
    first, second = fake.requests
    assert [m["role"] for m in first] == ["system", "user"]
    assert [m["role"] for m in second] == ["system", "user", "assistant", "user"]
    assert second[3]["content"].startswith("Observation: ")
    assert json.loads(second[3]["content"][len("Observation: "):]) == run.state.observations()[0]


def test_malformed_remote_answers_fail_safe(repo):
    load_scenario(repo, "S3", "good")
    with FakeCompletions(["I think it is fine."]) as fake:
        report = Workflow(repo, RemotePolicy(RemoteConfig(fake.url, 5, 0))).validate_change(descriptor_for("S3", "S3-good"))
    assert report.verdict == BLOCKED and "no JSON object" in report.diagnostic
    with FakeCompletions(['{"kind": "FINAL", "answer": "looks good"}']) as fake:
        report = Workflow(repo, RemotePolicy(RemoteConfig(fake.url, 5, 0))).validate_change(descriptor_for("S3", "S3-good", "T-2"))
    assert report.verdict == BLOCKED and "malformed" in report.diagnostic


def test_unreachable_remote_blocks(repo):
    load_scenario(repo, "S3", "good")
    policy = RemotePolicy(RemoteConfig("http://127.0.0.1:9/v1/chat", timeout=0.5, retries=1))
    report = Workflow(repo, policy).validate_change(descriptor_for("S3", "S3-good"))
    assert report.verdict == BLOCKED and "unreachable after 2 attempts" in report.diagnostic


def test_remote_config_file(tmp_path):
    path = tmp_path / "twin.ini"
    path.write_text("[remote]\nurl = http://example.invalid/chat\ntimeout = 7.5\n")
    cfg = RemoteConfig.load(path)
    assert cfg == RemoteConfig("http://example.invalid/chat", 7.5, 2)
    assert isinstance(make_policy("remote", path), RemotePolicy)
    assert isinstance(make_policy("scripted"), ScriptedPolicy)
    with pytest.raises(ValueError):
        make_policy("oracle")
