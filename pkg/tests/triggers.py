"""Directed harness inputs for each seeded vulnerability."""
from conftest import set_field
from mlefuzz.dut import NodeType
from mlefuzz.harness import HarnessInput, HarnessState, load_fixtures
from mlefuzz.mle import REGISTRY, MlePacket, build_tlv, decode_packet, encode_packet, \
    recompute_parent_lengths, replace_tlv

NWD = REGISTRY.code("network_data")
PREFIX_LEN = "network_data_tlv[0].prefix_tlv[0].prefix_length"


def script_packet(node_type: NodeType, state: HarnessState):
    """The benign packet the script delivers right at the injection point."""
    _, packets, points = load_fixtures()[node_type]
    return decode_packet(packets[points[int(state)]][1])


def payload_of(pkt) -> bytes:
    return encode_packet(pkt)[5:]


def _v6(pkt):
    idx = next(i for i, t in enumerate(pkt.tlvs) if t.tlv_type == NWD)
    pkt = replace_tlv(pkt, (idx, 0), lambda _: build_tlv("prefix", prefix_length=255, prefix=bytes(32)))
    pkt = recompute_parent_lengths(pkt, (idx, 0))
    return MlePacket(pkt.message_type, pkt.tlvs + (build_tlv("link_margin", margin=3),))


def directed_inputs():
    """vuln id -> (HarnessInput, sanitizer)."""
    F, Mt = NodeType.FTD, NodeType.MTD
    S = HarnessState
    cid_f = script_packet(F, S.DETACHED_AFTER_CHILD_ID_REQUEST)
    cid_m = script_packet(Mt, S.DETACHED_AFTER_CHILD_ID_REQUEST)
    cur_m = script_packet(Mt, S.CHILD_AFTER_CHILD_UPDATE_REQUEST)
    adv_f = script_packet(F, S.CHILD_AFTER_ADDRESS_SOLICIT)
    mk = lambda nt, st, pkt: HarnessInput(nt, st, payload_of(pkt))  # noqa: E731
    return {
        "V1": (mk(Mt, S.DETACHED_AFTER_CHILD_ID_REQUEST, set_field(cid_m, PREFIX_LEN, 255)), True),
        "V2": (mk(F, S.DETACHED_AFTER_CHILD_ID_REQUEST,
                  set_field(cid_f, "network_data_tlv[0].server_tlv[0].length", 1)), True),
        "V3": (mk(Mt, S.DETACHED_AFTER_CHILD_ID_REQUEST, set_field(cid_m, "network_data_tlv[0].length", 255)),
               True),
        "V4": (mk(Mt, S.CHILD_AFTER_CHILD_UPDATE_REQUEST, set_field(cur_m, "timeout_tlv[0].timeout", 0xFFFFFFFF)),
               True),
        "V5": (mk(F, S.CHILD_AFTER_ADDRESS_SOLICIT, set_field(adv_f, "leader_data_tlv[0].leader_id", 255)), True),
        "V6": (mk(F, S.DETACHED_AFTER_CHILD_ID_REQUEST, _v6(cid_f)), True),
    }
