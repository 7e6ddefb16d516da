"""The nine acceptance criteria; each prints one PASS/FAIL line."""

from __future__ import annotations

import contextlib
import ipaddress
import json
import random
import time

import pytest

from conftest import check_snapshot_algebra
from ndtwin.cli import EXIT_BLOCKED, EXIT_ERROR, EXIT_OK, main
from ndtwin.dataplane import Dataplane, HeaderSpace, PacketFields, PacketSpec, acl_compare, acl_eval, detect_loops, forward, reachability
from ndtwin.evaluation import apply_delta, compute_metrics, scenario_library
from ndtwin.ingest import build_base_layers, spec_from_data
from ndtwin.model import Acl, TrafficDemand
from ndtwin.server import ServerContext, handle_request
from ndtwin.sla import simulate
from ndtwin.snapshots import Repository
from ndtwin.tools import call_tool
from oracles import (
    ForwardingOracle,
    exhaustive_differences,
    mutate_rules,
    naive_acl_eval,
    packet_key,
    probe_addresses,
    random_acl_rules,
    random_network,
    random_record_set,
    random_space,
    ref_metrics,
    space_size,
    strict_disposition,
)

SCENARIOS = {s.id: s for s in scenario_library()}


@pytest.fixture
def report(capsys):
    """Yields a callable that runs a criterion body and prints its verdict line."""

    @contextlib.contextmanager
    def criterion(number: int, title: str):
        started = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            with capsys.disabled():
                verdict = "PASS" if ok else "FAIL"
                print(f"\n{verdict} criterion {number}: {title} ({time.perf_counter() - started:.2f}s)")

    return criterion


def dp_of(data) -> Dataplane:
    return Dataplane(spec_from_data(data))


def test_criterion_1_i2_blackhole(report):
    with report(1, "I2 summary blackhole gives 2 ECMP traces, exactly 1 DISCARDED"):
        s = SCENARIOS["I2"]
        started = time.perf_counter()
        traces = forward(dp_of(apply_delta(s.base, s.candidate("bad").delta)), PacketSpec("c1", "2001:db8:1::1"))
        elapsed = time.perf_counter() - started
        assert len(traces) == 2
        assert [t.disposition.value for t in traces].count("DISCARDED") == 1
        assert elapsed < 1.0


def test_criterion_2_i1_redistribution_loop(report):
    with report(2, "I1 internal redistribution loops through both borders; external is loop-free"):
        s = SCENARIOS["I1"]
        bad = apply_delta(s.base, s.candidate("bad").delta)
        started = time.perf_counter()
        internal = detect_loops(dp_of(bad))
        external = detect_loops(dp_of(s.base))
        elapsed = time.perf_counter() - started

        def metric_types(data):
            return [r["metric_type"] for d in data["devices"] for p in d.get("igp_processes", []) for r in p.get("redistribute", [])]

        assert metric_types(s.base) == ["external"] * 4 and metric_types(bad) == ["internal"] * 4
        assert any({"b1", "b2"} <= set(loop.cycle) for loop in internal)
        assert external == []
        assert elapsed < 1.0


def test_criterion_3_scripted_gate(report, tmp_path, capsys):
    with report(3, "eval run --policy scripted: ED 1.00, FP 0, Coverage 1.00, Consistency 1.00"):
        started = time.perf_counter()
        code = main(["eval", "run", "--policy", "scripted", "--runs", "10", "--out", str(tmp_path)])
        elapsed = time.perf_counter() - started
        capsys.readouterr()
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        records = (tmp_path / "records.jsonl").read_text().splitlines()
        assert code == EXIT_OK
        assert len(records) == 10 * 10 * 2
        assert {json.loads(r)["scenario"] for r in records} == set(SCENARIOS)
        assert metrics["error_detection"] == 1.0
        assert metrics["counts"]["FP"] == 0
        assert metrics["coverage"] == 1.0
        assert metrics["consistency"] == 1.0
        assert elapsed < 60.0


def _random_packet(rng: random.Random, rules) -> dict:
    prefixes = [r[k] for r in rules for k in ("src_prefix", "dst_prefix") if r.get(k) not in (None, "any")]

    def addr():
        if prefixes and rng.random() < 0.8:
            net = ipaddress.ip_network(rng.choice(prefixes), strict=False)
            return str(net.network_address + rng.randrange(net.num_addresses))
        return f"10.{rng.randrange(4)}.{rng.randrange(4)}.{rng.randrange(256)}"

    edges = [p for r in rules for k in ("src_ports", "dst_ports") for p in r.get(k, [])]

    def port():
        if edges and rng.random() < 0.6:
            return max(0, min(65535, rng.choice(edges) + rng.choice((-1, 0, 1))))
        return rng.randrange(65536)

    return {"src_ip": addr(), "dst_ip": addr(), "protocol": rng.choice(["tcp", "udp", "icmp"]), "src_port": port(), "dst_port": port()}


def test_criterion_4_dataplane_oracles(report):
    with report(4, "100 random fixtures: reachability = BFS oracle, acl_eval = naive evaluator on 10^4 packets each"):
        headers = {"src_ip": "172.16.0.9", "protocol": "tcp", "src_port": 1234, "dst_port": 80}
        pairs = 0
        for seed in range(100):
            rng = random.Random(seed)
            data = random_network(rng)
            assert len(data["devices"]) <= 6
            dp, oracle = dp_of(data), ForwardingOracle(data)
            for src in oracle.devices:
                for dst in probe_addresses(data):
                    expected = oracle.walk(src, {**headers, "dst_ip": dst})
                    result = reachability(dp, src, dst, headers)
                    assert sorted((tuple(t.devices()), t.disposition.value) for t in result.traces) == expected
                    assert result.disposition.value == strict_disposition(expected)
                    pairs += 1
            acls = [a["rules"] for d in data["devices"] for a in d.get("acls", [])] + [random_acl_rules(rng, rng.randint(1, 8))]
            compiled = [Acl.from_dict({"name": "x", "rules": r}) for r in acls]
            for i in range(10_000):
                k = i % len(acls)
                p = _random_packet(rng, acls[k])
                d = acl_eval(compiled[k], PacketFields.from_dict(p))
                assert (d.action, d.seq) == naive_acl_eval(acls[k], p)
        assert pairs > 1000


def test_criterion_5_acl_compare_exhaustive(report):
    with report(5, "acl_compare witness sets equal the exhaustive oracle on spaces up to 2^16"):
        largest = 0
        for seed in range(30):
            rng = random.Random(1000 + seed)
            space = random_space(rng, limit=2**16)
            size = space_size(space)
            assert size <= 2**16
            largest = max(largest, size)
            a = random_acl_rules(rng)
            b = mutate_rules(rng, a)
            witnesses = acl_compare(Acl.from_dict({"name": "a", "rules": a}), Acl.from_dict({"name": "b", "rules": b}), HeaderSpace.from_dict(space))
            keys = [packet_key(w.packet.to_dict()) for w in witnesses]
            assert len(keys) == len(set(keys))
            assert set(keys) == exhaustive_differences(a, b, space)
        assert largest > 2**12


def test_criterion_6_snapshot_algebra(report):
    with report(6, "snapshot algebra over 1000 random edit sequences"):
        totals = {"conflicts": 0, "merges": 0}
        for seed in range(1000):
            outcome = check_snapshot_algebra(seed)
            assert outcome.problems == [], (seed, outcome.problems)
            totals["conflicts"] += outcome.conflicts
            totals["merges"] += outcome.merges
        # both branches of the conflict rule are exercised
        assert totals["conflicts"] > 0 and totals["merges"] > 0


def test_criterion_7_sla_simulator(report):
    with report(7, "SLA conservation within 1e-9, 2x capacity delivers 0.5, zero-load delay = sum of prop_delay"):
        pair = {
            "devices": [
                {"hostname": "r1", "interfaces": [{"name": "eth0", "v4_addr": "10.0.0.1/30"}]},
                {"hostname": "r2", "interfaces": [{"name": "eth0", "v4_addr": "10.0.0.2/30"}]},
            ],
            "topology": {"links": [{"a": {"device": "r1", "interface": "eth0"}, "b": {"device": "r2", "interface": "eth0"}, "capacity": 100.0, "prop_delay": 3.0}]},
        }
        [flow] = simulate(dp_of(pair), [TrafficDemand("f", "r1", "10.0.0.2", 200.0)]).flows
        assert flow.delivered_fraction == 0.5

        s6 = dp_of(SCENARIOS["S6"].base)
        [idle] = simulate(s6, [TrafficDemand("z", "r1", "10.30.0.1", 0.0)]).flows
        assert idle.delay == sum(link.prop_delay for link in s6.spec.topology.links)

        checked = 0
        for sid, s in SCENARIOS.items():
            for data in [s.base] + [s.candidate_data(c.id) for c in s.candidates]:
                dp = dp_of(data)
                demands = [TrafficDemand(f"{src}->{dst}", src, dst, 300.0) for src in sorted(dp.devices) for dst in sorted({a for addrs in dp.owner_addresses().values() for a in addrs})[:6]]
                for f in simulate(dp, demands).flows:
                    assert abs(sum(b.share for b in f.branches) - 1.0) < 1e-9
                    assert abs(f.delivered_fraction + f.lost_fraction - 1.0) < 1e-9
                    assert abs(sum(b.share * b.delivered for b in f.branches) + f.lost_fraction - 1.0) < 1e-9
                    checked += 1
        assert checked > 100


def test_criterion_8_metrics_formulas(report):
    from test_evaluation import METRICS, build

    with report(8, "compute_metrics equals reference arithmetic on 20 record sets for all eight metrics"):
        for seed in range(20):
            scenarios, records = random_record_set(random.Random(seed))
            objs, recs = build(scenarios, records)
            got = compute_metrics(recs, objs)
            want = ref_metrics(scenarios, records)
            for name in METRICS:
                if want[name] is None:
                    assert getattr(got, name) is None, (seed, name)
                elif name in ("robustness", "consistency", "redundancy"):
                    assert abs(getattr(got, name) - want[name]) <= 1e-12, (seed, name)
                else:
                    assert getattr(got, name) == want[name], (seed, name)


def _requests_for(data: dict, snap: str, base: str) -> list[dict]:
    devices = sorted(d["hostname"] for d in data["devices"])
    probes = probe_addresses(data)[:3] or ["10.255.0.1"]
    reqs = [
        {"capability": "MTU_CONSISTENCY", "snapshots": [snap]},
        {"capability": "LOOP_DETECTION", "snapshots": [snap]},
        {"capability": "DIFFERENTIAL_REACHABILITY", "snapshots": [base, snap]},
        {"capability": "SLA_VERIFY_SIM", "snapshots": [snap]},
        {"capability": "SLA_VERIFY_PREDICTOR", "snapshots": [snap]},
        {"capability": "CONFIG_ANOMALY", "snapshots": [base, snap], "params": {"roles": {d: "all" for d in devices}}},
        {"capability": "NDM_QUERY", "snapshots": [snap], "params": {"query": {"start": {"layer": "DEVICE", "kind": "device"}}, "expect_rows": "some"}},
    ]
    for src in devices:
        for dst in probes:
            reqs.append({"capability": "REACHABILITY", "snapshots": [snap], "params": {"src": src, "dst_ip": dst}})
            reqs.append({"capability": "TRACEROUTE", "snapshots": [snap], "params": {"src": src, "dst_ip": dst, "expect_disposition": "DELIVERED"}})
    for dev in data["devices"]:
        for acl in dev.get("acls", []):
            space = {"src_ips": ["203.0.113.0/30", "10.10.0.0/31"], "dst_ips": [f"{p}/32" for p in probes if ":" not in p] or ["10.0.0.0/30"], "protocols": ["tcp", "udp"], "src_ports": [1024], "dst_ports": [22, 443]}
            params = {"device": dev["hostname"], "acl": acl["name"], "header_space": space}
            reqs.append({"capability": "ACL_COMPARE", "snapshots": [base, snap], "params": params})
            reqs.append({"capability": "ACL_SEARCH", "snapshots": [snap], "params": {**params, "action": "deny", "expect": "none"}})
    return reqs


def _direct(repo, req):
    try:
        return "result", call_tool(repo, req).to_dict(with_duration=False)
    except Exception as exc:  # noqa: BLE001 - the error code is what must match
        return "error", getattr(exc, "code", None)


def test_criterion_9_interface_transparency(report, tmp_path, capsys):
    with report(9, "JSON-RPC tools/call equals call_tool on every capability and fixture; CLI exit codes 0/2/1"):
        repo = Repository(tmp_path / "repo")
        ctx = ServerContext(repo)
        requests, capabilities = [], set()
        for sid, s in sorted(SCENARIOS.items()):
            handle = repo.new_snapshot(f"{sid}-base")
            base = repo.commit(build_base_layers(spec_from_data(s.base), handle))
            for cand in s.candidates:
                handle = repo.fork(base, f"{sid}-{cand.id}")
                snap = repo.commit(build_base_layers(spec_from_data(s.candidate_data(cand.id)), handle))
                requests.extend(_requests_for(s.candidate_data(cand.id), snap, base))
        for i, req in enumerate(requests):
            capabilities.add(req["capability"])
            response = handle_request(ctx, json.dumps({"jsonrpc": "2.0", "id": i, "method": "tools/call", "params": req}))
            kind, direct = _direct(repo, req)
            if kind == "result":
                payload = dict(response["result"])
                payload.pop("duration")
                assert payload == direct, req
            else:
                assert response["error"]["code"] == direct, req
        assert len(capabilities) == 11

        # exit-code contract on a sample of verify calls plus validate and usage errors
        codes = {"PASS": EXIT_OK, "FAIL": EXIT_BLOCKED, "ERROR": EXIT_ERROR}
        seen = set()
        for req in requests[::7]:
            argv = ["--repo", str(tmp_path / "repo"), "verify", req["capability"], "--params", json.dumps(req.get("params", {}))]
            for snap in req["snapshots"]:
                argv += ["--snapshot", snap]
            kind, direct = _direct(repo, req)
            expected = codes[direct["status"]] if kind == "result" else EXIT_ERROR
            assert main(argv) == expected, req
            seen.add(expected)
        assert seen == {EXIT_OK, EXIT_BLOCKED, EXIT_ERROR}
        s = SCENARIOS["S3"]
        for cid, expected in (("good", EXIT_OK), ("bad", EXIT_BLOCKED)):
            descriptor = tmp_path / f"{cid}.json"
            descriptor.write_text(json.dumps({**s.descriptor, "ticket": f"S3-{cid}", "candidate": f"S3-{cid}", "production": "S3-base"}))
            assert main(["--repo", str(tmp_path / "repo"), "validate", str(descriptor)]) == expected
        with pytest.raises(SystemExit) as info:
            main(["--repo", str(tmp_path / "repo"), "no-such-command"])
        assert info.value.code == EXIT_ERROR
        capsys.readouterr()
