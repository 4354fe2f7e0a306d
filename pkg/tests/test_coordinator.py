import itertools
import json

import pytest

from mlefuzz.coordinator import (CampaignConfig, CampaignState, CrashRecord, Mode, replay,
                                 run_campaign, run_fuzzing_epoch, run_iteration)
from mlefuzz.engines import P_MAX, P_MIN, FuzzerChain
from mlefuzz.mle import MessageType as M

PREFIX_LEN = "network_data_tlv[0].prefix_tlv[0].prefix_length"
SERVER_LEN = "network_data_tlv[0].server_tlv[0].length"


def force_v1(iterations=None):
    return {"kind": "set_field", "message_type": int(M.CHILD_ID_RESPONSE), "path": PREFIX_LEN,
            "value": 255, "limit": 1, "iterations": iterations}


def force_v2():
    return {"kind": "set_field", "message_type": int(M.CHILD_ID_RESPONSE), "path": SERVER_LEN,
            "value": 1, "limit": 1}


def test_empty_chain_reaches_router_without_crash():
    cfg = CampaignConfig(max_iterations=1, node_type="ftd")
    res = run_iteration(cfg, CampaignState(cfg))
    assert res.crash is None and res.final_role == "router" and res.c_i > 0


def test_forced_prefix_length_logs_v1():
    cfg = CampaignConfig(max_iterations=1, node_type="mtd", fuzzers=[force_v1()])
    res = run_iteration(cfg, CampaignState(cfg))
    assert res.crash is not None and res.crash.vuln == "V1"
    assert res.crash.crash_kind == "AssertionFailure"
    assert res.hits == ["V1"]  # limit=1: the re-attach after the restart is clean
    assert res.final_role == "child"


def test_zero_budget_is_silent():
    cfg = CampaignConfig(max_iterations=1, iteration_budget=0)
    res = run_iteration(cfg, CampaignState(cfg))
    assert res.packets == 0 and res.crash is None and res.c_i == 0


def test_single_iteration_report_row(tmp_path):
    rep = run_campaign(CampaignConfig(max_iterations=1, fuzzers=[{"kind": "random"}]), tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["iterations"] == 1 and len(doc["rows"]) == 1
    assert (tmp_path / "coverage.csv").read_text().count("\n") == 2
    assert len(rep.results) == 1


def _dir_bytes(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_identical_seeds_give_identical_artifacts(tmp_path):
    cfg = dict(max_iterations=60, node_type="ftd", seed=3,
               fuzzers=[{"kind": "tlv_inserter"}, {"kind": "coverage_grey", "warm_i": 10}])
    run_campaign(CampaignConfig(**cfg), tmp_path / "a")
    run_campaign(CampaignConfig(**cfg), tmp_path / "b")
    assert _dir_bytes(tmp_path / "a") == _dir_bytes(tmp_path / "b")


def test_campaign_bookkeeping():
    rep = run_campaign(CampaignConfig(max_iterations=300, node_type="ftd", seed=1,
                                      fuzzers=[{"kind": "coverage_grey", "warm_i": 50}]))
    cum = [r.cumulative for r in rep.results]
    assert cum == sorted(cum)
    assert sum(r.c_i for r in rep.results) == rep.final_cumulative
    table = rep.state.chain.coverage_engine.table
    assert all(P_MIN <= p <= P_MAX for p in table.values())
    for v, first in rep.first_hit.items():
        hits = [r.iteration for r in rep.results if v in r.hits]
        assert first == min(hits)
        assert rep.hit_count[v] == sum(r.hits.count(v) for r in rep.results)


def test_disabled_adaptation_matches_random():
    kw = dict(max_iterations=150, node_type="ftd", seed=9)
    grey = run_campaign(CampaignConfig(fuzzers=[{"kind": "coverage_grey", "adapt": False}], **kw))
    rand = run_campaign(CampaignConfig(fuzzers=[{"kind": "random"}], **kw))
    assert [(r.n_i, r.hits, r.c_i) for r in grey.results] == [(r.n_i, r.hits, r.c_i) for r in rand.results]


def test_black_box_feedback_uses_generator_map():
    cfg = CampaignConfig(max_iterations=20, fuzzers=[{"kind": "coverage_black"}])
    state = CampaignState(cfg)
    res = [run_iteration(cfg, state) for _ in range(20)]
    assert sum(r.feedback_c_i for r in res) == state.gen_coverage.cumulative_count


# -- epochs

def _epoch(n, crash_iterations, seed=0):
    cfg = CampaignConfig(max_iterations=n, mode="epoch", epoch_size=n, seed=seed, node_type="mtd",
                         fuzzers=[force_v1(sorted(crash_iterations))])
    state = CampaignState(cfg)
    flagged = run_fuzzing_epoch(cfg, n, state)
    return flagged, state.last_epoch_counts


def test_epoch_without_crash():
    flagged, (c0, cf) = _epoch(4, [])
    assert not flagged and (c0, cf) == (0, 5)


def test_epoch_with_one_crash():
    flagged, (c0, cf) = _epoch(4, [2])
    assert flagged and cf == 6


def test_epoch_of_one_pins_the_iteration():
    assert _epoch(1, [1])[0]
    assert not _epoch(1, [])[0]


@pytest.mark.parametrize("crashes", [c for k in range(5) for c in itertools.combinations(range(1, 5), k)])
def test_epoch_oracle_exhaustive(crashes):
    flagged, (c0, cf) = _epoch(4, crashes)
    assert flagged == (len(crashes) >= 1)
    assert cf == c0 + 4 + 1 + len(crashes)


def test_epoch_mode_forces_black_box_feedback():
    cfg = CampaignConfig(max_iterations=2, mode="epoch", epoch_size=2, fuzzers=[{"kind": "coverage_grey"}])
    assert CampaignState(cfg).feedback_source.value == "generator_black"
    assert cfg.mode is Mode.EPOCH


# -- replay

def _first_crash(fuzzers, node_type="ftd", sanitizer=True, seed=0, **kw):
    rep = run_campaign(CampaignConfig(max_iterations=5, node_type=node_type, fuzzers=fuzzers,
                                      sanitizer=sanitizer, seed=seed, **kw))
    return rep.crashes[0]


def test_replay_reproduces_v1():
    rec = _first_crash([force_v1()])
    assert replay(rec).crash.vuln == "V1"


def test_replay_v2_depends_on_sanitizer():
    rec = _first_crash([force_v2()])
    assert rec.vuln == "V2" and rec.crash_kind == "BufferOverflowDetected"
    assert replay(rec, sanitizer=True).crash.vuln == "V2"
    assert replay(rec, sanitizer=False).crash is None


def test_replay_of_benign_packets_does_not_crash():
    rec = _first_crash([force_v1()])
    rec.packets = rec.packets[:-1]  # drop the crashing packet
    assert replay(rec).crash is None


def test_crash_record_json_round_trip():
    rec = _first_crash([force_v1()])
    doc = json.loads(json.dumps(rec.to_json()))
    assert CrashRecord.from_json(doc) == rec
    with pytest.raises(ValueError):
        CrashRecord.from_json(dict(doc, vuln="V9"))


def test_replay_every_crash_of_a_random_campaign():
    rep = run_campaign(CampaignConfig(max_iterations=400, node_type="ftd", seed=2, fuzzers=[{"kind": "random"}]))
    assert rep.crashes
    for rec in rep.crashes:
        assert replay(rec).crash.vuln == rec.vuln


def test_config_validation():
    with pytest.raises(ValueError):
        CampaignConfig(max_iterations=0)
    with pytest.raises(ValueError):
        CampaignConfig(iteration_budget=-1)
    with pytest.raises(ValueError):
        CampaignConfig(leader_data_probability=1.5)
    with pytest.raises(ValueError):
        CampaignConfig(node_type="router")
    with pytest.raises(ValueError):
        FuzzerChain.from_config([{"kind": "coverage_grey"}, {"kind": "coverage_black"}])
