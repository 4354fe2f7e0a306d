import random

import pytest

from conftest import Dialogue, benign_dialogue, random_packet, set_field
from mlefuzz.dissector import dissect, write_field
from mlefuzz.dut import (EDGE_ID, EDGE_NAMES, AttachState, CrashKind, LeaderNode, NodeCrashedError,
                         NodeRole, NodeType, SimNode, reachable_edges)
from mlefuzz.mle import (MessageType as M, MlePacket, REGISTRY, build_tlv, encode_packet,
                         recompute_parent_lengths, replace_tlv)

PREFIX_LEN = "network_data_tlv[0].prefix_tlv[0].prefix_length"
SERVER_LEN = "network_data_tlv[0].server_tlv[0].length"
NWD_LEN = "network_data_tlv[0].length"
NWD = REGISTRY.code("network_data")


def _at_child_id_response(node_type, sanitizer=True, **kw):
    d = Dialogue(node_type, sanitizer, **kw)
    pkt = d.until_state(AttachState.CHILD_ID_REQ_SENT)
    assert pkt.message_type == M.CHILD_ID_RESPONSE
    return d, pkt


def _v6_packet(pkt, extra=True):
    idx = next(i for i, t in enumerate(pkt.tlvs) if t.tlv_type == NWD)
    prefix = build_tlv("prefix", prefix_length=255, prefix=bytes(range(32)))
    pkt = replace_tlv(pkt, (idx, 0), lambda _: prefix)
    pkt = recompute_parent_lengths(pkt, (idx, 0))
    if extra:
        pkt = MlePacket(pkt.message_type, pkt.tlvs + (build_tlv("link_margin", margin=9),))
    return pkt


def test_fresh_nodes():
    for nt in NodeType:
        for san in (True, False):
            n = SimNode(nt, san)
            assert n.role is NodeRole.DETACHED and n.reboot_count == 0
    assert LeaderNode().role is NodeRole.LEADER


@pytest.mark.parametrize("node_type,role", [(NodeType.MTD, NodeRole.CHILD), (NodeType.FTD, NodeRole.ROUTER)])
def test_benign_dialogue_completes_within_20_steps(node_type, role):
    dut, _, sent = benign_dialogue(node_type, ticks=20)
    assert dut.role is role
    assert len(sent) <= 20


def test_benign_dialogue_is_deterministic():
    a = benign_dialogue(NodeType.FTD)
    b = benign_dialogue(NodeType.FTD)
    assert [encode_packet(p) for _, p in a[2]] == [encode_packet(p) for _, p in b[2]]
    assert a[0].coverage.scratch_count == b[0].coverage.scratch_count
    assert a[0].coverage._scratch == b[0].coverage._scratch


@pytest.mark.parametrize("node_type", list(NodeType))
def test_v1_prefix_length_255(node_type):
    d, pkt = _at_child_id_response(node_type)
    out = d.deliver(set_field(pkt, PREFIX_LEN, 255))
    assert out.crashed and out.vuln == "V1" and out.crash_kind is CrashKind.ASSERTION_FAILURE


def test_v1_needs_attach_state():
    d = Dialogue(NodeType.MTD)
    pkt = d.until_state(AttachState.CHILD_ID_REQ_SENT)
    d.deliver(pkt)
    assert not d.deliver(set_field(pkt, PREFIX_LEN, 255)).crashed


def test_v2_sanitizer_on_and_off():
    d, pkt = _at_child_id_response(NodeType.FTD, sanitizer=True)
    bad = set_field(pkt, SERVER_LEN, 1)
    out = d.deliver(bad)
    assert out.crashed and out.vuln == "V2" and out.crash_kind is CrashKind.BUFFER_OVERFLOW
    d, pkt = _at_child_id_response(NodeType.FTD, sanitizer=False)
    assert not d.deliver(bad).crashed
    d, pkt = _at_child_id_response(NodeType.MTD, sanitizer=True)
    assert not d.deliver(set_field(pkt, SERVER_LEN, 1)).crashed


def test_v2_needs_matching_address():
    d, pkt = _at_child_id_response(NodeType.FTD)
    bad = set_field(set_field(pkt, SERVER_LEN, 1), "address16_tlv[0].addr16", 0x1234)
    assert not d.deliver(bad).crashed


def test_v3_on_child_data_response_with_leader_data():
    d = Dialogue(NodeType.MTD)
    pkt = d.until_state(AttachState.CHILD)
    while pkt.message_type != M.DATA_RESPONSE:
        d.deliver(pkt)
        pkt = d.next_packet()
    out = d.deliver(set_field(pkt, NWD_LEN, 255))
    assert out.crashed and out.vuln == "V3"


def test_v3_on_child_id_response():
    d, pkt = _at_child_id_response(NodeType.MTD)
    out = d.deliver(set_field(pkt, NWD_LEN, 255))
    assert out.crashed and out.vuln == "V3"


def test_v3_ftd_depends_on_leader_data():
    d, pkt = _at_child_id_response(NodeType.FTD, leader_data_probability=0.0)
    assert not d.dut.has_leader_data
    assert not d.deliver(set_field(pkt, NWD_LEN, 255)).crashed
    d, pkt = _at_child_id_response(NodeType.FTD, leader_data_probability=1.0)
    assert d.dut.has_leader_data
    assert d.deliver(set_field(pkt, NWD_LEN, 255)).vuln == "V3"


def _at_child_update_response(node_type):
    d = Dialogue(node_type)
    pkt = d.next_packet()
    while not (pkt.message_type == M.CHILD_UPDATE_RESPONSE and d.dut.role is NodeRole.CHILD):
        d.deliver(pkt)
        pkt = d.next_packet()
    return d, pkt


def test_v4_mtd_only():
    d, pkt = _at_child_update_response(NodeType.MTD)
    out = d.deliver(set_field(pkt, "timeout_tlv[0].timeout", 0xFFFFFFFF))
    assert out.crashed and out.vuln == "V4"
    d, pkt = _at_child_update_response(NodeType.FTD)
    assert not d.deliver(set_field(pkt, "timeout_tlv[0].timeout", 0xFFFFFFFF)).crashed


def test_v5_poisoned_advert_then_solicit_response():
    d = Dialogue(NodeType.FTD)
    pkt = d.until_state(AttachState.ADDR_SOLICIT_SENT)
    assert pkt.message_type == M.ADVERTISEMENT
    assert not d.deliver(set_field(pkt, "leader_data_tlv[0].leader_id", 255)).crashed
    nxt = d.next_packet()
    while nxt.message_type != M.ADDRESS_SOLICIT_RESPONSE:
        assert not d.deliver(nxt).crashed
        nxt = d.next_packet()
    out = d.deliver(nxt)
    assert out.crashed and out.vuln == "V5"


def test_v5_outside_window_is_harmless():
    d = Dialogue(NodeType.FTD)
    pkt = d.until_state(AttachState.CHILD)
    while pkt.message_type != M.ADVERTISEMENT:
        d.deliver(pkt)
        pkt = d.next_packet()
    assert d.dut.state is not AttachState.ADDR_SOLICIT_SENT
    assert not d.deliver(set_field(pkt, "leader_data_tlv[0].leader_id", 255)).crashed
    for _ in range(10):
        assert not d.deliver(d.next_packet()).crashed
    assert d.dut.role is NodeRole.ROUTER


def test_v6_needs_32_bytes_extra_tlv_and_sanitizer():
    d, pkt = _at_child_id_response(NodeType.FTD)
    out = d.deliver(_v6_packet(pkt))
    assert out.crashed and out.vuln == "V6" and out.crash_kind is CrashKind.BUFFER_OVERFLOW
    d, pkt = _at_child_id_response(NodeType.FTD)
    assert not d.deliver(_v6_packet(pkt, extra=False)).crashed
    d, pkt = _at_child_id_response(NodeType.FTD, sanitizer=False)
    assert not d.deliver(_v6_packet(pkt)).crashed


def test_crashed_node_refuses_packets():
    d, pkt = _at_child_id_response(NodeType.MTD)
    assert d.deliver(set_field(pkt, PREFIX_LEN, 255)).crashed
    with pytest.raises(NodeCrashedError):
        d.dut.step(pkt)
    d.dut.restart_after_crash()
    assert d.dut.reboot_count == 1 and not d.dut.crashed


def test_resets_and_reboot_counter():
    n = SimNode(NodeType.FTD)
    assert n.read_reboot_count() == 0
    for _ in range(3):
        n.soft_reset()
    n.soft_reset()
    assert n.read_reboot_count() == 4
    n.has_leader_data = True
    n.soft_reset()
    assert n.has_leader_data  # the soft reset leaks this flag
    for _ in range(2):
        n.soft_reset()
    n.hard_reset()
    assert n.read_reboot_count() == 0 and not n.has_leader_data


def test_reboot_count_read_is_an_edge():
    n = SimNode(NodeType.MTD)
    n.coverage.commit_iteration()
    n.read_reboot_count()
    assert EDGE_ID["diag:reboot_count"] in n.coverage._scratch


def test_edge_table_is_static_and_sized():
    assert len(EDGE_NAMES) == len(set(EDGE_NAMES)) == len(EDGE_ID)
    assert 150 <= reachable_edges(NodeType.FTD) <= 4096
    assert reachable_edges(NodeType.MTD) < reachable_edges(NodeType.FTD)


def test_deeper_progress_covers_more():
    mtd, _, _ = benign_dialogue(NodeType.MTD)
    ftd, _, _ = benign_dialogue(NodeType.FTD)
    assert ftd.coverage.scratch_count > mtd.coverage.scratch_count


def _mutate(pkt, rng):
    d = dissect(pkt)
    for f in d.fields:
        if rng.random() < 2 / d.field_count:
            v = rng.choice([0, 1, f.max_value, f.max_value - 1, rng.getrandbits(f.bit_width)])
            pkt = write_field(pkt, f, v)
    return pkt


def test_mtd_never_becomes_router():
    rng = random.Random(99)
    steps = 0
    while steps < 100_000:
        d = Dialogue(NodeType.MTD, rng_seed=steps)
        for _ in range(40):
            if rng.random() < 0.2:
                pkt = random_packet(rng)
            else:
                pkt = _mutate(d.next_packet(), rng)
            out = d.dut.step(encode_packet(pkt))
            steps += 1
            assert d.dut.role is not NodeRole.ROUTER
            if out.crashed:
                for p in d.dut.restart_after_crash():
                    d.gen.receive(p)
            else:
                for p in out.responses:
                    d.gen.receive(p)


def test_sanitizer_gating_per_injection():
    rng = random.Random(5)
    seen = {"AssertionFailure": 0, "BufferOverflowDetected": 0}
    for trial in range(600):
        nt = NodeType.FTD if trial % 3 else NodeType.MTD
        depth = rng.randrange(8)
        outs = []
        for san in (True, False):
            d = Dialogue(nt, san, rng_seed=trial, leader_data_probability=0.5)
            for _ in range(depth):
                pkt = d.next_packet()
                d.deliver(pkt)
            pkt = d.next_packet()
            mut = _mutate(pkt, random.Random(trial))
            if pkt.message_type == M.CHILD_ID_RESPONSE:
                # mix directed triggers of both crash kinds into the random ones
                mut = [lambda: set_field(pkt, SERVER_LEN, 1), lambda: _v6_packet(pkt),
                       lambda: set_field(pkt, PREFIX_LEN, 255), lambda: mut][trial % 4]()
            outs.append(d.deliver(mut))
        on, off = outs
        if on.crashed:
            seen[on.crash_kind.value] += 1
        if on.crashed and on.crash_kind is CrashKind.ASSERTION_FAILURE:
            assert off.crashed and off.vuln == on.vuln
        else:
            assert not off.crashed
    assert seen["AssertionFailure"] and seen["BufferOverflowDetected"]


def test_generator_replies_by_peer_state():
    gen = LeaderNode()
    dut = SimNode(NodeType.MTD)
    assert gen.generate_next() is None  # idle until the peer speaks
    for p in dut.start():
        gen.receive(p)
    replies = [gen.generate_next() for _ in range(3)]
    assert [r.message_type for r in replies if r is not None][0] == M.PARENT_RESPONSE
