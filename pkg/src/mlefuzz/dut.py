"""Deterministic simulated Thread nodes.

``SimNode`` is the device under test: an MTD or FTD running the MLE attach
and router-promotion state machine, instrumented with static coverage edges
and six seeded vulnerabilities. ``LeaderNode`` is the benign packet
generator on the other side of the link.

Time is discrete. The coordinator advances both nodes one tick at a time;
``SimNode.tick`` fires the DUT's timers and ``LeaderNode.generate_next``
emits at most one packet per tick.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from .coverage import CoverageMap
from .mle import (MIN_PACKET_LEN, MESSAGE_CODES, REGISTRY, DecodeError, MessageType as M, MlePacket,
                  Tlv, build_tlv, decode_packet, encode_packet, encode_tlv, message_name)


class NodeRole(str, enum.Enum):
    DETACHED = "detached"
    CHILD = "child"
    ROUTER = "router"
    LEADER = "leader"


class NodeType(str, enum.Enum):
    MTD = "mtd"
    FTD = "ftd"


class CrashKind(str, enum.Enum):
    ASSERTION_FAILURE = "AssertionFailure"
    BUFFER_OVERFLOW = "BufferOverflowDetected"


class AttachState(str, enum.Enum):
    IDLE = "idle"
    PARENT_REQ_SENT = "parent_request_sent"
    CHILD_ID_REQ_SENT = "child_id_request_sent"
    CHILD = "child"
    CHILD_UPDATE_REQ_SENT = "child_update_request_sent"
    ADDR_SOLICIT_SENT = "address_solicit_sent"
    ROUTER = "router"


ATTACHED = frozenset({AttachState.CHILD, AttachState.CHILD_UPDATE_REQ_SENT,
                      AttachState.ADDR_SOLICIT_SENT, AttachState.ROUTER})
_CHILD_ROLE_STATES = frozenset({AttachState.CHILD, AttachState.CHILD_UPDATE_REQ_SENT,
                                AttachState.ADDR_SOLICIT_SENT})


class NodeCrashedError(RuntimeError):
    pass


@dataclass
class StepOutcome:
    kind: str  # "ok" | "crash" | "silent"
    responses: list = field(default_factory=list)
    crash_kind: CrashKind | None = None
    vuln: str | None = None

    @property
    def crashed(self) -> bool:
        return self.kind == "crash"

    @classmethod
    def ok(cls, responses=None):
        return cls("ok", list(responses or ()))

    @classmethod
    def silent(cls):
        return cls("silent")

    @classmethod
    def crash(cls, kind: CrashKind, vuln: str):
        return cls("crash", [], kind, vuln)

    def to_json(self) -> dict:
        return {"kind": self.kind, "crash_kind": self.crash_kind.value if self.crash_kind else None,
                "vuln": self.vuln, "responses": len(self.responses)}


# -- protocol constants ----------------------------------------------------------

LEADER_RLOC16 = 0x0400
LEADER_ROUTER_ID = 1
CHILD_RLOC16 = 0x0401
ASSIGNED_ROUTER_ID = 2
ASSIGNED_ROUTER_RLOC16 = ASSIGNED_ROUTER_ID << 10
NETWORK_ROUTER_IDS = (1, 2, 3, 4, 5, 6)
ROUTE_BYTE = 0x51  # link quality out 1, in 1, cost 1
PARTITION_ID = 0x1A2B3C4D
WEIGHTING = 64
DATA_VERSION = 10
STABLE_VERSION = 5
THREAD_VERSION = 4
CHILD_TIMEOUT = 240
MESH_PREFIX = bytes.fromhex("fd00db8000000000")
PREFIX_BITS = 64
SERVER_DATA = b"\x5c\x01"
MAX_TIMEOUT = 0xFFFFFFFF
MAX_ROUTER_ID = 62

MODE_MTD = 0x0C
MODE_FTD = 0x0F

# DUT timers, in ticks
PARENT_TIMEOUT = 2
CHILD_ID_TIMEOUT = 2
ATTACH_BACKOFF = (4, 10, 30)
DATA_REQUEST_DELAY = 1
DATA_RETRY = 3
CHILD_UPDATE_DELAY = 3
CHILD_UPDATE_TIMEOUT = 3
MTD_KEEPALIVE = 6
ROUTER_UPGRADE_DELAY = 6
ADDR_SOLICIT_TIMEOUT = 3
ADDR_SOLICIT_RETRY = 6
LINK_TIMEOUT = 3
LINK_RETRIES = 1

FTD_LEADER_DATA_PROBABILITY = 0.3
SYNC_ENTRIES = 6

# generator timing
ADV_FIRST = 3
ADV_PERIOD = 5
GEN_CHILD_UPDATE_DELAY = 10

T = {s.name: s.code for s in REGISTRY}
NWD = T["network_data"]
PREFIX = T["prefix"]
SERVER = T["server"]
DEFAULT_CHILD_ID_RESPONSE_TLVS = frozenset(
    T[n] for n in ("source_address", "leader_data", "address16", "network_data", "timeout", "mle_frame_counter"))


# -- static edge table -------------------------------------------------------------

_EDGES: list = []
_FTD_ONLY: set = set()


def _e(*names: str, ftd: bool = False) -> None:
    for name in names:
        if ftd:
            _FTD_ONLY.add(name)
        _EDGES.append(name)


def _family(prefix: str, suffixes, ftd: bool = False) -> None:
    _e(*(f"{prefix}:{s}" for s in suffixes), ftd=ftd)


_family("rx", [message_name(c) for c in MESSAGE_CODES])
_family("rx", ("undecodable:short", "undecodable:type", "trailer"))
_family("ignore", ("unhandled", "wrong_state"))
_family("tlv", [f"{s.name}:ok" for s in REGISTRY])
_family("tlv", ("bad_len:fixed", "bad_len:short", "truncated", "unknown", "duplicate", "raw_nested"))
_family("nwd", ("empty", "malformed", "commissioning", "foreign_sub", "nested_nwd", "multi_prefix",
                "server_skipped"))
_family("nwd", [f"entry{i}:{k}" for i in range(5) for k in ("prefix", "server", "other")])
_family("nwd", ("server", "multi_server", "server16:child", "server16:leader", "server16:other",
                "server_data:empty", "server_data:some"), ftd=True)
_family("prefix", ("zero", "le64", "le128", "gt128", "bytes_match", "bytes_short", "bytes_long"))
_family("presp", ("missing_required", "bad_source", "bad_response", "bad_version", "no_link_quality",
                  "bad_leader", "accepted", "margin:low", "margin:mid", "margin:high", "priority:0",
                  "priority:1", "priority:2", "priority:3", "leader_cost:zero", "leader_cost:normal",
                  "leader_cost:inf", "routers:none", "routers:some", "routers:many", "lfc:zero",
                  "lfc:high", "weight:low", "weight:default", "weight:high", "extra_tlv"))
_family("cidr", ("missing_required", "bad_source", "bad_partition", "bad_addr16", "accepted",
                 "timeout:zero", "timeout:short", "timeout:normal", "timeout:long", "weight:low",
                 "weight:default", "weight:high", "extra_tlv"))
_e("cidr:route64", ftd=True)
_family("dresp", ("missing_required", "partition_mismatch", "stale", "newer", "stable_changed", "bad_nwd",
                  "extra_tlv"))
_family("cur", ("unsolicited", "bad_response", "accepted", "timeout:zero", "timeout:short",
                "timeout:normal", "timeout:long", "mode:rx_on", "mode:ftd", "mode:full_nd",
                "status_error", "extra_tlv"))
_family("cureq", ("bad_source", "accepted", "challenge", "no_challenge", "nwd_update", "extra_tlv"))
_family("adv:child", ("bad_source", "same", "parent_partition_changed", "other_partition:higher",
                      "other_partition:lower",
                      "leader_changed", "newer_data", "route64", "extra_tlv"))
_family("trans", ("start", "parent_selected", "attached", "attach_retry", "attach_fail",
                  "data_request", "data_retry", "child_update_sent", "child_update_done",
                  "child_update_retry", "keepalive", "partition_switch"))
_family("trans", ("address_solicit", "address_solicit_retry", "router", "link_request", "linked",
                  "link_retry", "link_fail"), ftd=True)
_family("asr", ("unsolicited", "missing", "status:success", "status:no_address", "status:too_many",
                "status:other", "bad_addr16", "bad_mask", "stale_seq", "router_id:low", "router_id:high",
                "accepted", "extra_tlv"), ftd=True)
_family("la", ("unsolicited", "missing", "bad_source", "bad_leader_data", "bad_fc", "bad_response", "accepted", "margin:low",
               "margin:mid", "margin:high", "fc:zero", "fc:normal", "fc:high", "version:old",
               "version:current", "version:new", "extra_tlv"), ftd=True)
# route-table sync on link establishment: the deepest processing in the node
_family("sync", ("processed", "short", "self_missing", "leader_missing", "mask:few", "mask:many"), ftd=True)
_family("sync", [f"e{j}:lq{o}{i}" for j in range(SYNC_ENTRIES) for o in range(4) for i in range(4)], ftd=True)
_family("sync", [f"e{j}:cost:{c}" for j in range(SYNC_ENTRIES)
                 for c in ("zero", "low", "mid", "high", "inf")], ftd=True)
_family("adv:router", ("processed", "unlinked", "id_seq:newer", "id_seq:older", "id_seq:same",
                       "mask:none", "mask:one", "mask:few", "mask:many", "self_conflict",
                       "route_short", "leader_lost", "partition:higher", "partition:lower",
                       "extra_tlv"), ftd=True)
_family("adv:router", [f"e{j}:lq{o}{i}" for j in range(SYNC_ENTRIES) for o in range(4) for i in range(4)],
        ftd=True)
_e("v1:guard", "v1:content32", "v3:len255", "v3:no_leader_data", "v4:guard", "v6:guard",
   "v6:overflow_silent")
_e("v2:len1", "v2:addr_differs", "v2:overflow_silent", "v4:ftd_path", "v5:poison",
   "v5:outside_window", ftd=True)
_e("diag:reboot_count", "crash:restart")

EDGE_NAMES: tuple = tuple(_EDGES)
EDGE_ID: dict = {n: i for i, n in enumerate(EDGE_NAMES)}
FTD_ONLY_EDGES = frozenset(_FTD_ONLY)
assert len(EDGE_ID) == len(EDGE_NAMES), "duplicate edge names"


def reachable_edges(node_type: NodeType) -> int:
    if NodeType(node_type) is NodeType.FTD:
        return len(EDGE_NAMES)
    return len(EDGE_NAMES) - len(FTD_ONLY_EDGES)


_GEN_EDGES: list = []
for _code in MESSAGE_CODES:
    _GEN_EDGES += [f"gen:rx:{message_name(_code)}", f"gen:retry:{message_name(_code)}",
                   f"gen:tx:{message_name(_code)}"]
_GEN_EDGES += [f"gen:{n}" for n in ("peer:detached", "peer:child", "peer:router", "peer:restarted",
                                    "peer:reattach", "peer:data_refresh", "peer:link",
                                    "peer:mode_changed", "peer:timeout_changed", "idle",
                                    "queue_backlog")]
GEN_EDGE_NAMES: tuple = tuple(_GEN_EDGES)
GEN_EDGE_ID: dict = {n: i for i, n in enumerate(GEN_EDGE_NAMES)}


# -- packet helpers ------------------------------------------------------------------

def _pkt(msg: int, *tlvs: Tlv) -> MlePacket:
    return MlePacket(int(msg), tlvs)


def leader_data_tlv(partition=PARTITION_ID, weighting=WEIGHTING, data_version=DATA_VERSION,
                    stable_version=STABLE_VERSION, leader_id=LEADER_ROUTER_ID) -> Tlv:
    return build_tlv("leader_data", partition_id=partition, weighting=weighting,
                     data_version=data_version, stable_version=stable_version, leader_id=leader_id)


def network_data_tlv(server16=CHILD_RLOC16, prefix=MESH_PREFIX, prefix_bits=PREFIX_BITS) -> Tlv:
    return build_tlv("network_data", children=[
        build_tlv("prefix", prefix_length=prefix_bits, prefix=prefix),
        build_tlv("server", server16=server16, data=SERVER_DATA),
    ])


def router_mask(router_ids) -> int:
    mask = 0
    for rid in router_ids:
        mask |= 1 << (63 - rid)
    return mask


def route64_tlv(id_sequence: int, router_ids=NETWORK_ROUTER_IDS, route_bytes=None) -> Tlv:
    if route_bytes is None:
        route_bytes = [ROUTE_BYTE] * len(router_ids)
    return build_tlv("route64", id_sequence=id_sequence, router_mask=router_mask(router_ids),
                     route_data=bytes(route_bytes))


def _value(tlv: Tlv, offset: int, size: int) -> int:
    return int.from_bytes(tlv.payload[offset:offset + size], "big")


def _mask_ids(mask: int) -> list:
    return [63 - b for b in range(63, -1, -1) if mask >> b & 1]


class _View:
    """First occurrence of each TLV in a message, by code; ``ok`` holds well-formed ones."""

    __slots__ = ("ok", "present", "nwd", "codes")

    def __init__(self):
        self.ok: dict = {}
        self.present: dict = {}
        self.nwd: Tlv | None = None
        self.codes: set = set()


_CLASSIFY = {s.code: (f"tlv:{s.name}:ok", s.fixed_size, s.min_size, s.nestable) for s in REGISTRY}


def _classify(tlv: Tlv) -> tuple:
    """(edge name, well-formed) for a registered TLV, or (None, False)."""
    info = _CLASSIFY.get(tlv.tlv_type)
    if info is None:
        return None, False
    ok_edge, fixed, min_size, nestable = info
    payload = tlv.payload
    if isinstance(payload, tuple):
        size = 0
        for c in payload:
            size += c.encoded_size
    else:
        size = len(payload)
    if tlv.declared_length != size:
        return "tlv:truncated", False
    if nestable:
        return ok_edge, True
    if fixed is not None and size != fixed:
        return "tlv:bad_len:fixed", False
    if size < min_size:
        return "tlv:bad_len:short", False
    return ok_edge, True


# -- the device under test ---------------------------------------------------------------

class SimNode:
    def __init__(self, node_type: NodeType = NodeType.FTD, sanitizer_enabled: bool = True,
                 coverage: CoverageMap | None = None, rng: random.Random | None = None,
                 leader_data_probability: float = FTD_LEADER_DATA_PROBABILITY):
        self.node_type = NodeType(node_type)
        self.is_mtd = self.node_type is NodeType.MTD
        self.sanitizer_enabled = sanitizer_enabled
        self.coverage = coverage if coverage is not None else CoverageMap(reachable=reachable_edges(node_type))
        self._record = self.coverage.record
        self.rng = rng if rng is not None else random.Random(0)
        self.leader_data_probability = leader_data_probability
        self.reboot_count = 0
        self.has_leader_data = False
        self.crashed = False
        self.now = 0
        self._reset_protocol()

    # -- lifecycle

    def _reset_protocol(self) -> None:
        self.state = AttachState.IDLE
        self.role = NodeRole.DETACHED
        self.state_since = self.now
        self.attached_at = None
        self.attach_attempts = 0
        self.retry_at = None
        self.challenge = b""
        self.link_challenge = b""
        self.parent_rloc16 = None
        self.partition_id = None
        self.leader_id = None
        self.data_version = None
        self.stable_version = None
        self.rloc16 = None
        self.router_id = None
        self.server16 = None
        self.route_id_seq = None
        self.linked_neighbors: set = set()
        self.data_at = None
        self.data_valid = False
        self.adv_seq = None
        self.child_update_done = False
        self.solicit_at = None
        self.link_pending = False
        self.link_since = 0
        self.link_retries = 0
        self.leader_poisoned = False

    def hit(self, name: str) -> None:
        self._record(EDGE_ID[name])

    def start(self) -> list:
        """Begin attaching; returns the packets emitted."""
        if self.crashed:
            raise NodeCrashedError("node has crashed")
        self._reset_protocol()
        self.hit("trans:start")
        # once held, leader data survives soft resets and crash restarts
        if self.is_mtd:
            self.has_leader_data = True
        elif not self.has_leader_data:
            self.has_leader_data = self.rng.random() < self.leader_data_probability
        return [self._send_parent_request()]

    def restart_after_crash(self) -> list:
        self.crashed = False
        self.reboot_count += 1
        self.hit("crash:restart")
        return self.start()

    def soft_reset(self) -> None:
        self.crashed = False
        self.reboot_count += 1
        self._reset_protocol()

    def hard_reset(self) -> None:
        self.crashed = False
        self.reboot_count = 0
        self.has_leader_data = False
        self._reset_protocol()

    def read_reboot_count(self) -> int:
        self.hit("diag:reboot_count")
        return self.reboot_count

    def _enter(self, state: AttachState) -> None:
        self.state = state
        self.state_since = self.now
        if state is AttachState.ROUTER:
            self.role = NodeRole.ROUTER
        elif state in _CHILD_ROLE_STATES:
            self.role = NodeRole.CHILD
        else:
            self.role = NodeRole.DETACHED

    def _attach_failed(self, edge: str) -> None:
        self.hit(edge)
        self.retry_at = self.now + ATTACH_BACKOFF[min(self.attach_attempts, len(ATTACH_BACKOFF) - 1)]
        self.attach_attempts += 1
        self._enter(AttachState.IDLE)

    def _detach(self) -> None:
        attempts = self.attach_attempts
        self._reset_protocol()
        self.attach_attempts = attempts
        self.retry_at = self.now + 1

    # -- emitted packets

    def _mode(self) -> int:
        return MODE_MTD if self.is_mtd else MODE_FTD

    def _new_challenge(self) -> bytes:
        return self.rng.getrandbits(64).to_bytes(8, "big")

    def _send_parent_request(self) -> MlePacket:
        self.challenge = self._new_challenge()
        self.retry_at = None
        self._enter(AttachState.PARENT_REQ_SENT)
        return _pkt(M.PARENT_REQUEST, build_tlv("mode", mode=self._mode()),
                    Tlv.of(T["challenge"], self.challenge),
                    build_tlv("scan_mask", mask=0x80), _VERSION_TLV)

    def _child_id_request(self, parent_challenge: bytes) -> MlePacket:
        self._enter(AttachState.CHILD_ID_REQ_SENT)
        return _pkt(M.CHILD_ID_REQUEST, Tlv.of(T["response"], parent_challenge),
                    build_tlv("link_frame_counter", counter=0), build_tlv("mle_frame_counter", counter=0),
                    build_tlv("mode", mode=self._mode()), _TIMEOUT_TLV, _VERSION_TLV,
                    build_tlv("tlv_request", tlvs=bytes((T["address16"], NWD))))

    def _child_update_request(self) -> MlePacket:
        self.challenge = self._new_challenge()
        self._enter(AttachState.CHILD_UPDATE_REQ_SENT)
        return _pkt(M.CHILD_UPDATE_REQUEST, build_tlv("source_address", addr16=self.rloc16 or 0),
                    build_tlv("mode", mode=self._mode()), Tlv.of(T["challenge"], self.challenge),
                    _TIMEOUT_TLV)

    def _data_request(self) -> MlePacket:
        self.data_at = self.now + DATA_RETRY
        return _pkt(M.DATA_REQUEST, build_tlv("tlv_request", tlvs=bytes((NWD,))))

    def _address_solicit(self) -> MlePacket:
        self._enter(AttachState.ADDR_SOLICIT_SENT)
        return _pkt(M.ADDRESS_SOLICIT, build_tlv("source_address", addr16=self.rloc16 or 0),
                    build_tlv("status", status=0))

    def _link_request(self) -> MlePacket:
        self.link_challenge = self._new_challenge()
        self.link_pending = True
        self.link_since = self.now
        return _pkt(M.LINK_REQUEST, build_tlv("source_address", addr16=self.rloc16 or 0),
                    leader_data_tlv(self.partition_id or 0, WEIGHTING, self.data_version or 0,
                                    self.stable_version or 0, self.leader_id or 0),
                    Tlv.of(T["challenge"], self.link_challenge), _VERSION_TLV,
                    build_tlv("tlv_request", tlvs=bytes((T["link_margin"], T["route64"]))))

    # -- timers

    def tick(self) -> list:
        """Advance one tick and return packets emitted by timers."""
        if self.crashed:
            return []
        self.now += 1
        st = self.state
        age = self.now - self.state_since
        if st is AttachState.IDLE:
            if self.retry_at is not None and self.now >= self.retry_at:
                self.hit("trans:attach_retry")
                return [self._send_parent_request()]
        elif st is AttachState.PARENT_REQ_SENT:
            if age >= PARENT_TIMEOUT:
                self._attach_failed("trans:attach_fail")
        elif st is AttachState.CHILD_ID_REQ_SENT:
            if age >= CHILD_ID_TIMEOUT:
                self._attach_failed("trans:attach_fail")
        elif st is AttachState.CHILD:
            since = self.now - self.attached_at
            if not self.data_valid and since >= DATA_REQUEST_DELAY and \
                    (self.data_at is None or self.now >= self.data_at):
                self.hit("trans:data_request" if self.data_at is None else "trans:data_retry")
                return [self._data_request()]
            if not self.child_update_done and since >= CHILD_UPDATE_DELAY:
                self.hit("trans:child_update_sent")
                return [self._child_update_request()]
            if self.is_mtd:
                if self.child_update_done and age >= MTD_KEEPALIVE:
                    self.hit("trans:keepalive")
                    return [self._child_update_request()]
            elif since >= ROUTER_UPGRADE_DELAY and self.data_valid and self.child_update_done \
                    and (self.solicit_at is None or self.now >= self.solicit_at):
                self.hit("trans:address_solicit")
                return [self._address_solicit()]
        elif st is AttachState.CHILD_UPDATE_REQ_SENT:
            if age >= CHILD_UPDATE_TIMEOUT:
                # unanswered: the next tick in CHILD sends a fresh request
                self.hit("trans:child_update_retry")
                self._enter(AttachState.CHILD)
        elif st is AttachState.ADDR_SOLICIT_SENT:
            if age >= ADDR_SOLICIT_TIMEOUT:
                self._solicit_failed()
        elif st is AttachState.ROUTER:
            if self.link_pending and self.now - self.link_since >= LINK_TIMEOUT:
                if self.link_retries < LINK_RETRIES:
                    self.link_retries += 1
                    self.hit("trans:link_retry")
                    return [self._link_request()]
                self.link_pending = False
                self.hit("trans:link_fail")
        return []

    def _solicit_failed(self) -> None:
        self.hit("trans:address_solicit_retry")
        self.solicit_at = self.now + ADDR_SOLICIT_RETRY
        self._enter(AttachState.CHILD)

    # -- receive path

    def step(self, incoming) -> StepOutcome:
        """Deliver one packet (bytes or MlePacket) to the node."""
        if self.crashed:
            raise NodeCrashedError("node has crashed")
        raw = incoming if isinstance(incoming, (bytes, bytearray)) else encode_packet(incoming)
        raw = bytes(raw)
        if len(raw) < MIN_PACKET_LEN:
            self.hit("rx:undecodable:short")
            return StepOutcome.silent()
        try:
            pkt = decode_packet(raw)
        except DecodeError:
            self.hit("rx:undecodable:type")
            return StepOutcome.silent()
        msg = pkt.message_type
        self.hit(_RX_EDGE[msg])
        if pkt.trailer:
            self.hit("rx:trailer")
        view = self._parse(pkt)
        crash = self._check_vulns(pkt, view)
        if crash is not None:
            self.crashed = True
            return crash
        handler = _HANDLERS.get(msg)
        if handler is None:
            self.hit("ignore:unhandled")
            return StepOutcome.silent()
        responses = handler(self, view)
        if responses is None:
            self.hit("ignore:wrong_state")
            return StepOutcome.silent()
        return StepOutcome.ok(responses)

    def _parse(self, pkt: MlePacket) -> _View:
        view = _View()
        hit = self.hit
        ok, present, codes = view.ok, view.present, view.codes
        for tlv in pkt.tlvs:
            code = tlv.tlv_type
            codes.add(code)
            edge, good = _classify(tlv)
            if edge is None:
                hit("tlv:unknown")
                continue
            hit(edge)
            if code in present:
                hit("tlv:duplicate")
                continue
            present[code] = tlv
            if good:
                ok[code] = tlv
        view.nwd = present.get(NWD)
        return view

    def _check_vulns(self, pkt: MlePacket, view: _View) -> StepOutcome | None:
        msg = pkt.message_type
        st = self.state
        prefix = None
        in_attach = msg == M.CHILD_ID_RESPONSE and st is AttachState.CHILD_ID_REQ_SENT
        if in_attach:
            prefix = _first_sub(view.nwd, PREFIX)
            # V1: prefix length 255 whose content cannot be 32 bytes
            if prefix is not None and isinstance(prefix.payload, bytes) and prefix.payload \
                    and prefix.payload[0] == 255:
                self.hit("v1:guard")
                if len(prefix.payload) - 1 != 32:
                    return StepOutcome.crash(CrashKind.ASSERTION_FAILURE, "V1")
                self.hit("v1:content32")
            # V2: server TLV of length 1; the server16 over-read matches the assigned address
            if not self.is_mtd and view.nwd is not None and isinstance(view.nwd.payload, tuple):
                addr = view.ok.get(T["address16"])
                for idx, sub in enumerate(view.nwd.payload):
                    if sub.tlv_type == SERVER and sub.declared_length == 1:
                        self.hit("v2:len1")
                        if addr is not None and _over_read(view.nwd, idx, 2) == _value(addr, 0, 2):
                            if self.sanitizer_enabled:
                                return StepOutcome.crash(CrashKind.BUFFER_OVERFLOW, "V2")
                            # undetected corruption: later checks see garbage, skip them
                            self.hit("v2:overflow_silent")
                            return None
                        self.hit("v2:addr_differs")
                        break
        # V3: network data of declared length 255 while leader data is held
        if in_attach or (msg == M.DATA_RESPONSE and st in ATTACHED):
            nwd = view.nwd
            if nwd is not None and nwd.declared_length == 255:
                self.hit("v3:len255")
                if self.has_leader_data:
                    return StepOutcome.crash(CrashKind.ASSERTION_FAILURE, "V3")
                self.hit("v3:no_leader_data")
        # V4: maximal child timeout in a Child Update Response
        if msg == M.CHILD_UPDATE_RESPONSE and self.role is NodeRole.CHILD:
            tlv = view.present.get(T["timeout"])
            if tlv is not None and isinstance(tlv.payload, bytes) and len(tlv.payload) >= 4 \
                    and _value(tlv, 0, 4) == MAX_TIMEOUT:
                if self.is_mtd:
                    self.hit("v4:guard")
                    return StepOutcome.crash(CrashKind.ASSERTION_FAILURE, "V4")
                self.hit("v4:ftd_path")
        # V5: leader id 255 while an Address Solicit is outstanding
        if not self.is_mtd:
            if msg == M.ADVERTISEMENT:
                ld = view.ok.get(T["leader_data"])
                if ld is not None and ld.payload[7] == 255:
                    if st is AttachState.ADDR_SOLICIT_SENT:
                        self.hit("v5:poison")
                        self.leader_poisoned = True
                    else:
                        self.hit("v5:outside_window")
            elif msg == M.ADDRESS_SOLICIT_RESPONSE and self.leader_poisoned \
                    and st is AttachState.ADDR_SOLICIT_SENT:
                return StepOutcome.crash(CrashKind.ASSERTION_FAILURE, "V5")
        # V6: 32-byte prefix with length 255 next to a non-default TLV
        if prefix is not None and isinstance(prefix.payload, bytes) and prefix.payload \
                and prefix.payload[0] == 255 and len(prefix.payload) - 1 == 32:
            if not view.codes <= DEFAULT_CHILD_ID_RESPONSE_TLVS:
                self.hit("v6:guard")
                if self.sanitizer_enabled:
                    return StepOutcome.crash(CrashKind.BUFFER_OVERFLOW, "V6")
                self.hit("v6:overflow_silent")
        return None

    # -- shared checks

    @staticmethod
    def _missing(view: _View, codes) -> bool:
        ok = view.ok
        for c in codes:
            if c not in ok:
                return True
        return False

    def _extra(self, view: _View, allowed: frozenset, edge: str) -> None:
        if not view.codes <= allowed:
            self.hit(edge)

    @staticmethod
    def _leader_fields(view: _View):
        p = view.ok[T["leader_data"]].payload
        return int.from_bytes(p[0:4], "big"), p[4], p[5], p[6], p[7]

    def _weight_edge(self, prefix: str, weighting: int) -> None:
        self.hit(f"{prefix}:weight:low" if weighting < 32 else
                 f"{prefix}:weight:default" if weighting <= 96 else f"{prefix}:weight:high")

    def _store_network_data(self, nwd: Tlv | None) -> bool:
        """Walk the network data; True when it is clean enough to route with."""
        if nwd is None:
            return False
        if not isinstance(nwd.payload, tuple):
            self.hit("tlv:raw_nested")
            return False
        if not nwd.payload:
            self.hit("nwd:empty")
        prefixes = servers = 0
        clean = nwd.consistent
        usable = False
        for pos, sub in enumerate(nwd.payload):
            c = sub.tlv_type
            if not sub.consistent:
                self.hit("nwd:malformed")
                clean = False
                continue
            kind = "prefix" if c == PREFIX else "server" if c == SERVER else "other"
            if pos < 5:
                self.hit(_NWD_ENTRY[pos][kind])
            if c == PREFIX:
                prefixes += 1
                usable |= _prefix_edges(self, sub)
            elif c == SERVER:
                if self.is_mtd:
                    self.hit("nwd:server_skipped")
                    continue
                servers += 1
                self.hit("nwd:server")
                if isinstance(sub.payload, bytes) and len(sub.payload) >= 2:
                    s16 = _value(sub, 0, 2)
                    self.server16 = s16
                    self.hit("nwd:server16:child" if s16 == self.rloc16 else
                             "nwd:server16:leader" if s16 == LEADER_RLOC16 else "nwd:server16:other")
                    self.hit("nwd:server_data:some" if len(sub.payload) > 2 else "nwd:server_data:empty")
            elif c == T["commissioning_data"]:
                self.hit("nwd:commissioning")
            elif c == NWD:
                self.hit("nwd:nested_nwd")
            else:
                self.hit("nwd:foreign_sub")
        if prefixes > 1:
            self.hit("nwd:multi_prefix")
        if servers > 1:
            self.hit("nwd:multi_server")
        return clean and usable


_NWD_ENTRY = [{k: f"nwd:entry{i}:{k}" for k in ("prefix", "server", "other")} for i in range(5)]
_SYNC_LQ = [[f"sync:e{j}:lq{o}{i}" for o in range(4) for i in range(4)] for j in range(SYNC_ENTRIES)]
_ADV_LQ = [[f"adv:router:e{j}:lq{o}{i}" for o in range(4) for i in range(4)] for j in range(SYNC_ENTRIES)]
_SYNC_COST = [{c: f"sync:e{j}:cost:{c}" for c in ("zero", "low", "mid", "high", "inf")}
              for j in range(SYNC_ENTRIES)]
_RX_EDGE = {c: f"rx:{message_name(c)}" for c in MESSAGE_CODES}


def _first_sub(nwd: Tlv | None, code: int) -> Tlv | None:
    if nwd is None or not isinstance(nwd.payload, tuple):
        return None
    for sub in nwd.payload:
        if sub.tlv_type == code:
            return sub
    return None


def _over_read(parent: Tlv, idx: int, size: int) -> int:
    """Read ``size`` bytes from a child's payload start, ignoring its length."""
    sub = parent.payload[idx]
    data = sub.payload_bytes() + b"".join(encode_tlv(s) for s in parent.payload[idx + 1:])
    return int.from_bytes(data[:size].ljust(size, b"\0"), "big")


def _prefix_edges(node: SimNode, sub: Tlv) -> bool:
    p = sub.payload
    if not isinstance(p, bytes) or not p:
        return False
    bits = p[0]
    node.hit("prefix:zero" if bits == 0 else "prefix:le64" if bits <= 64 else
             "prefix:le128" if bits <= 128 else "prefix:gt128")
    need = (bits + 7) // 8
    have = len(p) - 1
    node.hit("prefix:bytes_match" if have == need else "prefix:bytes_short" if have < need
             else "prefix:bytes_long")
    return have == need and 0 < bits <= 128


def _cost_class(cost: int) -> str:
    if cost == 0:
        return "zero"
    if cost == 0x0F:
        return "inf"
    return "low" if cost < 4 else "mid" if cost < 8 else "high"


def _codes(*names) -> frozenset:
    return frozenset(T[n] for n in names)


_PRESP_TLVS = _codes("source_address", "leader_data", "link_frame_counter", "mle_frame_counter",
                     "response", "challenge", "link_margin", "connectivity", "version")
_PRESP_REQUIRED = tuple(sorted(_PRESP_TLVS - _codes("link_margin")))
_CIDR_TLVS = _codes("source_address", "leader_data", "address16", "network_data", "timeout",
                    "mle_frame_counter", "route64")
_CIDR_REQUIRED = tuple(sorted(_codes("source_address", "leader_data", "address16", "network_data",
                                     "mle_frame_counter")))
_DRESP_TLVS = _codes("source_address", "leader_data", "network_data")
_CUR_TLVS = _codes("source_address", "mode", "timeout", "response", "leader_data", "status")
_CUREQ_TLVS = _codes("source_address", "leader_data", "network_data", "challenge")
_ADV_TLVS = _codes("source_address", "leader_data", "route64")
_ASR_TLVS = _codes("status", "address16", "route64")
_LA_TLVS = _codes("source_address", "leader_data", "response", "link_frame_counter",
                  "mle_frame_counter", "link_margin", "version", "route64")
_LA_REQUIRED = tuple(sorted(_codes("source_address", "leader_data", "response", "link_frame_counter",
                                   "version", "route64")))


def _h_parent_response(node: SimNode, view) -> list | None:
    if node.state is not AttachState.PARENT_REQ_SENT:
        return None
    node._extra(view, _PRESP_TLVS, "presp:extra_tlv")
    if node._missing(view, _PRESP_REQUIRED):
        node.hit("presp:missing_required")
        return []
    ok = view.ok
    src = _value(ok[T["source_address"]], 0, 2)
    if src & 0x1FF:
        node.hit("presp:bad_source")
        return []
    if ok[T["response"]].payload != node.challenge:
        node.hit("presp:bad_response")
        return []
    if _value(ok[T["version"]], 0, 2) < 2:
        node.hit("presp:bad_version")
        return []
    conn = ok[T["connectivity"]].payload
    if not (conn[1] or conn[2] or conn[3]):
        node.hit("presp:no_link_quality")
        return []
    partition, weighting, dver, sver, leader = node._leader_fields(view)
    if leader > MAX_ROUTER_ID:
        node.hit("presp:bad_leader")
        return []
    margin = ok.get(T["link_margin"])
    if margin is not None:
        m = margin.payload[0]
        node.hit("presp:margin:low" if m < 10 else "presp:margin:mid" if m < 40 else "presp:margin:high")
    node.hit(f"presp:priority:{conn[0] >> 6}")
    node.hit("presp:leader_cost:zero" if conn[4] == 0 else
             "presp:leader_cost:normal" if conn[4] < 16 else "presp:leader_cost:inf")
    node.hit("presp:routers:none" if conn[6] == 0 else
             "presp:routers:some" if conn[6] <= 32 else "presp:routers:many")
    lfc = _value(ok[T["link_frame_counter"]], 0, 4)
    if lfc == 0:
        node.hit("presp:lfc:zero")
    elif lfc > 0xFFFF0000:
        node.hit("presp:lfc:high")
    node._weight_edge("presp", weighting)
    node.hit("presp:accepted")
    node.hit("trans:parent_selected")
    node.parent_rloc16 = src
    node.partition_id, node.leader_id = partition, leader
    node.data_version, node.stable_version = dver, sver
    return [node._child_id_request(ok[T["challenge"]].payload)]


def _h_child_id_response(node: SimNode, view) -> list | None:
    if node.state is not AttachState.CHILD_ID_REQ_SENT:
        return None
    node._extra(view, _CIDR_TLVS, "cidr:extra_tlv")
    if node._missing(view, _CIDR_REQUIRED):
        node.hit("cidr:missing_required")
        return []
    ok = view.ok
    if _value(ok[T["source_address"]], 0, 2) != node.parent_rloc16:
        node.hit("cidr:bad_source")
        return []
    partition, weighting, dver, sver, leader = node._leader_fields(view)
    if partition != node.partition_id:
        node.hit("cidr:bad_partition")
        return []
    addr = _value(ok[T["address16"]], 0, 2)
    if addr & 0x1FF == 0 or addr >> 10 != node.parent_rloc16 >> 10:
        node.hit("cidr:bad_addr16")
        return []
    node.rloc16 = addr
    node._weight_edge("cidr", weighting)
    tmo = ok.get(T["timeout"])
    if tmo is not None:
        t = _value(tmo, 0, 4)
        node.hit("cidr:timeout:zero" if t == 0 else "cidr:timeout:short" if t < 60 else
                 "cidr:timeout:normal" if t <= 86400 else "cidr:timeout:long")
    if not node.is_mtd and T["route64"] in ok:
        node.hit("cidr:route64")
    node._store_network_data(view.nwd)
    node.leader_id, node.data_version, node.stable_version = leader, dver, sver
    node.hit("cidr:accepted")
    node.hit("trans:attached")
    node._enter(AttachState.CHILD)
    node.attached_at = node.now
    return []


def _h_data_response(node: SimNode, view) -> list | None:
    if node.state not in ATTACHED:
        return None
    node._extra(view, _DRESP_TLVS, "dresp:extra_tlv")
    if node._missing(view, _DRESP_TLVS):
        node.hit("dresp:missing_required")
        return []
    partition, _, dver, sver, _ = node._leader_fields(view)
    if partition != node.partition_id:
        node.hit("dresp:partition_mismatch")
        return []
    if 0 < ((dver - node.data_version) & 0xFF) < 128:
        node.hit("dresp:newer")
        node.data_version = dver
    else:
        node.hit("dresp:stale")
    if sver != node.stable_version:
        node.hit("dresp:stable_changed")
        node.stable_version = sver
    if node._store_network_data(view.nwd):
        node.data_valid = True
    else:
        node.hit("dresp:bad_nwd")
    return []


def _h_child_update_response(node: SimNode, view) -> list | None:
    if node.state not in ATTACHED:
        return None
    node._extra(view, _CUR_TLVS, "cur:extra_tlv")
    if node.state is not AttachState.CHILD_UPDATE_REQ_SENT:
        node.hit("cur:unsolicited")
        return []
    ok = view.ok
    resp = ok.get(T["response"])
    if resp is None or resp.payload != node.challenge:
        node.hit("cur:bad_response")
        return []
    tmo = ok.get(T["timeout"])
    if tmo is not None:
        t = _value(tmo, 0, 4)
        node.hit("cur:timeout:zero" if t == 0 else "cur:timeout:short" if t < 60 else
                 "cur:timeout:normal" if t <= 86400 else "cur:timeout:long")
    mode = ok.get(T["mode"])
    if mode is not None:
        diff = mode.payload[0] ^ node._mode()
        if diff & 0x08:
            node.hit("cur:mode:rx_on")
        if diff & 0x02:
            node.hit("cur:mode:ftd")
        if diff & 0x01:
            node.hit("cur:mode:full_nd")
    status = ok.get(T["status"])
    if status is not None and status.payload[0] != 0:
        node.hit("cur:status_error")
    node.hit("cur:accepted")
    node.hit("trans:child_update_done")
    node.child_update_done = True
    node._enter(AttachState.CHILD)
    return []


def _h_child_update_request(node: SimNode, view) -> list | None:
    if node.state not in ATTACHED:
        return None
    node._extra(view, _CUREQ_TLVS, "cureq:extra_tlv")
    ok = view.ok
    src = ok.get(T["source_address"])
    if src is None or _value(src, 0, 2) != node.parent_rloc16:
        node.hit("cureq:bad_source")
        return []
    node.hit("cureq:accepted")
    if view.nwd is not None:
        node.hit("cureq:nwd_update")
        node._store_network_data(view.nwd)
    chal = ok.get(T["challenge"])
    if chal is None:
        node.hit("cureq:no_challenge")
        return []
    node.hit("cureq:challenge")
    return [_pkt(M.CHILD_UPDATE_RESPONSE, build_tlv("source_address", addr16=node.rloc16 or 0),
                 build_tlv("mode", mode=node._mode()), Tlv.of(T["response"], chal.payload))]


def _h_advertisement(node: SimNode, view) -> list | None:
    if node.state not in ATTACHED:
        return None
    if node.state is AttachState.ROUTER:
        return _router_advertisement(node, view)
    node._extra(view, _ADV_TLVS, "adv:child:extra_tlv")
    ok = view.ok
    route = ok.get(T["route64"])
    if route is not None:
        node.adv_seq = route.payload[0]
    src = ok.get(T["source_address"])
    if src is None or _value(src, 0, 2) & 0x1FF or T["leader_data"] not in ok:
        node.hit("adv:child:bad_source")
        return []
    partition, weighting, dver, _, leader = node._leader_fields(view)
    if partition != node.partition_id and _value(src, 0, 2) == node.parent_rloc16:
        # the parent moved to another partition: follow it by re-attaching
        node.hit("adv:child:parent_partition_changed")
        node.hit("trans:partition_switch")
        node._detach()
        return []
    if partition != node.partition_id:
        if weighting > WEIGHTING:
            # a heavier partition is visible: leave and re-attach
            node.hit("adv:child:other_partition:higher")
            node.hit("trans:partition_switch")
            node._detach()
        else:
            node.hit("adv:child:other_partition:lower")
        return []
    node.hit("adv:child:same")
    if leader != node.leader_id:
        node.hit("adv:child:leader_changed")
    if 0 < ((dver - node.data_version) & 0xFF) < 128:
        node.hit("adv:child:newer_data")
        return [node._data_request()]
    if T["route64"] in ok:
        node.hit("adv:child:route64")
    return []


def _router_advertisement(node: SimNode, view) -> list:
    node._extra(view, _ADV_TLVS, "adv:router:extra_tlv")
    ok = view.ok
    src = ok.get(T["source_address"])
    if src is None or _value(src, 0, 2) & 0x1FF or T["leader_data"] not in ok:
        return []
    partition, weighting, _, _, leader = node._leader_fields(view)
    if partition != node.partition_id:
        node.hit("adv:router:partition:higher" if weighting > WEIGHTING else "adv:router:partition:lower")
        return []
    if _value(src, 0, 2) >> 10 not in node.linked_neighbors:
        node.hit("adv:router:unlinked")
        return []
    node.hit("adv:router:processed")
    route = ok.get(T["route64"])
    if route is None:
        return []
    p = route.payload
    seq = p[0]
    if node.route_id_seq is None or seq == node.route_id_seq:
        node.hit("adv:router:id_seq:same")
    elif 0 < ((seq - node.route_id_seq) & 0xFF) < 128:
        node.hit("adv:router:id_seq:newer")
    else:
        node.hit("adv:router:id_seq:older")
    node.route_id_seq = seq
    ids = _mask_ids(int.from_bytes(p[1:9], "big"))
    n = len(ids)
    node.hit("adv:router:mask:none" if n == 0 else "adv:router:mask:one" if n == 1 else
             "adv:router:mask:few" if n <= 6 else "adv:router:mask:many")
    if node.router_id in ids:
        pos = 9 + ids.index(node.router_id)
        if pos < len(p) and not p[pos] >> 4:
            node.hit("adv:router:self_conflict")
    if leader not in ids:
        node.hit("adv:router:leader_lost")
    if len(p) - 9 < n:
        node.hit("adv:router:route_short")
    for j, b in enumerate(p[9:9 + min(n, SYNC_ENTRIES)]):
        node.hit(_ADV_LQ[j][(b >> 6) * 4 + ((b >> 4) & 3)])
    return []


def _h_address_solicit_response(node: SimNode, view) -> list | None:
    if node.is_mtd or node.state not in ATTACHED:
        return None
    node._extra(view, _ASR_TLVS, "asr:extra_tlv")
    if node.state is not AttachState.ADDR_SOLICIT_SENT:
        node.hit("asr:unsolicited")
        return []
    if node._missing(view, _ASR_TLVS):
        node.hit("asr:missing")
        node._solicit_failed()
        return []
    ok = view.ok
    status = ok[T["status"]].payload[0]
    node.hit("asr:status:success" if status == 0 else "asr:status:no_address" if status == 1 else
             "asr:status:too_many" if status == 2 else "asr:status:other")
    if status != 0:
        node._solicit_failed()
        return []
    addr = _value(ok[T["address16"]], 0, 2)
    rid = addr >> 10
    if addr & 0x1FF or rid > MAX_ROUTER_ID:
        node.hit("asr:bad_addr16")
        node._solicit_failed()
        return []
    p = ok[T["route64"]].payload
    if node.adv_seq is not None and p[0] != node.adv_seq:
        node.hit("asr:stale_seq")
        node._solicit_failed()
        return []
    ids = _mask_ids(int.from_bytes(p[1:9], "big"))
    if rid not in ids or len(p) - 9 < len(ids):
        node.hit("asr:bad_mask")
        node._solicit_failed()
        return []
    node.hit("asr:router_id:low" if rid < 32 else "asr:router_id:high")
    node.hit("asr:accepted")
    node.hit("trans:router")
    node.rloc16 = addr
    node.router_id = rid
    node.route_id_seq = p[0]
    node._enter(AttachState.ROUTER)
    node.hit("trans:link_request")
    return [node._link_request()]


def _h_link_accept(node: SimNode, view) -> list | None:
    if node.is_mtd or node.state is not AttachState.ROUTER:
        return None
    node._extra(view, _LA_TLVS, "la:extra_tlv")
    if not node.link_pending:
        node.hit("la:unsolicited")
        return []
    if node._missing(view, _LA_REQUIRED):
        node.hit("la:missing")
        return []
    ok = view.ok
    src = _value(ok[T["source_address"]], 0, 2)
    if src != node.parent_rloc16:
        node.hit("la:bad_source")
        return []
    partition, weighting, dver, sver, leader = node._leader_fields(view)
    if (partition, weighting, dver, sver, leader) != (node.partition_id, WEIGHTING, node.data_version,
                                                      node.stable_version, node.leader_id):
        node.hit("la:bad_leader_data")
        return []
    mfc = ok.get(T["mle_frame_counter"])
    if mfc is not None and _value(mfc, 0, 4) < _value(ok[T["link_frame_counter"]], 0, 4):
        node.hit("la:bad_fc")
        return []
    if ok[T["response"]].payload != node.link_challenge:
        node.hit("la:bad_response")
        return []
    margin = ok.get(T["link_margin"])
    if margin is not None:
        m = margin.payload[0]
        node.hit("la:margin:low" if m < 10 else "la:margin:mid" if m < 40 else "la:margin:high")
    v = _value(ok[T["link_frame_counter"]], 0, 4)
    node.hit("la:fc:zero" if v == 0 else "la:fc:high" if v > 0xFFFF0000 else "la:fc:normal")
    v = _value(ok[T["version"]], 0, 2)
    node.hit("la:version:old" if v < THREAD_VERSION else
             "la:version:current" if v == THREAD_VERSION else "la:version:new")
    node.hit("la:accepted")
    node.hit("trans:linked")
    node.link_pending = False
    node.linked_neighbors.add(src >> 10)
    _route_sync(node, ok[T["route64"]].payload)
    return []


def _route_sync(node: SimNode, p: bytes) -> None:
    """Adopt the neighbor's route table, entry by entry."""
    node.hit("sync:processed")
    ids = _mask_ids(int.from_bytes(p[1:9], "big"))
    node.hit("sync:mask:few" if len(ids) <= SYNC_ENTRIES else "sync:mask:many")
    if node.router_id not in ids:
        node.hit("sync:self_missing")
    if node.leader_id not in ids:
        node.hit("sync:leader_missing")
    data = p[9:]
    if len(data) < len(ids):
        node.hit("sync:short")
    for j, b in enumerate(data[:min(len(ids), SYNC_ENTRIES)]):
        node.hit(_SYNC_LQ[j][(b >> 6) * 4 + ((b >> 4) & 3)])
        node.hit(_SYNC_COST[j][_cost_class(b & 0x0F)])


_HANDLERS = {
    M.PARENT_RESPONSE: _h_parent_response,
    M.CHILD_ID_RESPONSE: _h_child_id_response,
    M.DATA_RESPONSE: _h_data_response,
    M.CHILD_UPDATE_RESPONSE: _h_child_update_response,
    M.CHILD_UPDATE_REQUEST: _h_child_update_request,
    M.ADVERTISEMENT: _h_advertisement,
    M.ADDRESS_SOLICIT_RESPONSE: _h_address_solicit_response,
    M.LINK_ACCEPT: _h_link_accept,
}


# -- the packet generator -----------------------------------------------------------------

_LEADER_SA = build_tlv("source_address", addr16=LEADER_RLOC16)
_LEADER_DATA = leader_data_tlv()
_NETWORK_DATA = network_data_tlv(server16=CHILD_RLOC16)
_VERSION_TLV = build_tlv("version", version=THREAD_VERSION)
_TIMEOUT_TLV = build_tlv("timeout", timeout=CHILD_TIMEOUT)
_MARGIN_TLV = build_tlv("link_margin", margin=30)
_CHILD_A16 = build_tlv("address16", addr16=CHILD_RLOC16)
_ROUTER_A16 = build_tlv("address16", addr16=ASSIGNED_ROUTER_RLOC16)
_STATUS_OK = build_tlv("status", status=0)


class LeaderNode:
    """Benign leader and parent producing protocol-correct traffic for one peer."""

    role = NodeRole.LEADER
    node_type = NodeType.FTD

    def __init__(self, coverage: CoverageMap | None = None):
        self.coverage = coverage if coverage is not None else CoverageMap(reachable=len(GEN_EDGE_NAMES))
        self._record = self.coverage.record
        self.reset()

    def reset(self) -> None:
        self.now = 0
        self.queue: list = []  # (due, seq, builder, args)
        self._seq = 0
        self.peer_state = NodeRole.DETACHED
        self.peer_attached_at = None
        self.peer_mode = None
        self.peer_timeout = None
        self.sent_child_update = False
        self.id_sequence = 100
        self.frame_counter = 0
        self.seen: set = set()
        self.next_adv = ADV_FIRST

    def hit(self, name: str) -> None:
        self._record(GEN_EDGE_ID[name])

    def _schedule(self, delay: int, builder, *args) -> None:
        self._seq += 1
        self.queue.append((self.now + delay, self._seq, builder, args))

    def receive(self, packet) -> None:
        """Observe a packet emitted by the peer."""
        if isinstance(packet, (bytes, bytearray)):
            packet = decode_packet(packet)
        msg = packet.message_type
        name = message_name(msg)
        self.hit(f"gen:rx:{name}")
        if msg in self.seen:
            self.hit(f"gen:retry:{name}")
        self.seen.add(msg)
        tlvs = {t.tlv_type: t for t in packet.tlvs}
        mode = tlvs.get(T["mode"])
        if mode is not None:
            if self.peer_mode is not None and mode.payload != self.peer_mode:
                self.hit("gen:peer:mode_changed")
            self.peer_mode = mode.payload
        if msg == M.PARENT_REQUEST:
            if self.peer_state is not NodeRole.DETACHED:
                self.hit("gen:peer:restarted")
                self.peer_state = NodeRole.DETACHED
            self.hit("gen:peer:detached")
            self._schedule(1, self._parent_response, tlvs[T["challenge"]].payload)
        elif msg == M.CHILD_ID_REQUEST:
            tmo = tlvs.get(T["timeout"])
            if tmo is not None:
                if self.peer_timeout is not None and tmo.payload != self.peer_timeout:
                    self.hit("gen:peer:timeout_changed")
                self.peer_timeout = tmo.payload
            self._schedule(1, self._child_id_response)
        elif msg == M.DATA_REQUEST:
            if self.peer_state is NodeRole.CHILD:
                self.hit("gen:peer:data_refresh")
            self._schedule(1, self._data_response)
        elif msg == M.CHILD_UPDATE_REQUEST:
            if self.peer_state is NodeRole.DETACHED:
                self.peer_state = NodeRole.CHILD
                self.peer_attached_at = self.now
                self.hit("gen:peer:child")
            self._schedule(1, self._child_update_response, tlvs[T["challenge"]].payload)
        elif msg == M.ADDRESS_SOLICIT:
            if self.peer_state is not NodeRole.CHILD:
                self.hit("gen:peer:reattach")
            self.peer_state = NodeRole.CHILD
            # a leader advertisement precedes the solicit response
            self._schedule(1, self._advertisement)
            self._schedule(2, self._address_solicit_response)
        elif msg == M.LINK_REQUEST:
            self.peer_state = NodeRole.ROUTER
            self.hit("gen:peer:router")
            self._schedule(1, self._link_accept, tlvs[T["challenge"]].payload)
        elif msg == M.CHILD_UPDATE_RESPONSE:
            self.hit("gen:peer:link")

    def generate_next(self) -> MlePacket | None:
        """Advance one tick; emit the next due packet, or None when idle."""
        self.now += 1
        if self.now >= self.next_adv:
            self.next_adv = self.now + ADV_PERIOD
            self._schedule(0, self._advertisement)
        if (self.peer_state is NodeRole.CHILD and not self.sent_child_update
                and self.peer_attached_at is not None
                and self.now - self.peer_attached_at >= GEN_CHILD_UPDATE_DELAY):
            self.sent_child_update = True
            self._schedule(0, self._child_update_request)
        due = [q for q in self.queue if q[0] <= self.now]
        if not due:
            self.hit("gen:idle")
            return None
        if len(due) > 1:
            self.hit("gen:queue_backlog")
        item = min(due, key=lambda q: (q[0], q[1]))
        self.queue.remove(item)
        pkt = item[2](*item[3])
        self.hit(f"gen:tx:{message_name(pkt.message_type)}")
        return pkt

    # -- packet builders

    def _counter(self) -> int:
        self.frame_counter += 1
        return self.frame_counter

    def _parent_response(self, chal: bytes) -> MlePacket:
        c = self._counter()
        return _pkt(M.PARENT_RESPONSE, _LEADER_SA, _LEADER_DATA,
                    build_tlv("link_frame_counter", counter=c),
                    build_tlv("mle_frame_counter", counter=c),
                    Tlv.of(T["response"], chal),
                    build_tlv("challenge", bytes=0x0123456789ABCDEF ^ c),
                    _MARGIN_TLV,
                    build_tlv("connectivity", parent_priority=0x40, link_quality_3=1, link_quality_2=0,
                              link_quality_1=0, leader_cost=1, id_sequence=self.id_sequence,
                              active_routers=len(NETWORK_ROUTER_IDS)),
                    _VERSION_TLV)

    def _child_id_response(self) -> MlePacket:
        return _pkt(M.CHILD_ID_RESPONSE, _LEADER_SA, _LEADER_DATA, _CHILD_A16, _NETWORK_DATA,
                    _TIMEOUT_TLV, build_tlv("mle_frame_counter", counter=self._counter()))

    def _data_response(self) -> MlePacket:
        return _pkt(M.DATA_RESPONSE, _LEADER_SA, _LEADER_DATA, _NETWORK_DATA)

    def _child_update_response(self, chal: bytes) -> MlePacket:
        return _pkt(M.CHILD_UPDATE_RESPONSE, _LEADER_SA,
                    build_tlv("mode", mode=self.peer_mode[0] if self.peer_mode else MODE_MTD),
                    _TIMEOUT_TLV, Tlv.of(T["response"], chal), _LEADER_DATA)

    def _child_update_request(self) -> MlePacket:
        return _pkt(M.CHILD_UPDATE_REQUEST, _LEADER_SA, _LEADER_DATA, _NETWORK_DATA,
                    build_tlv("challenge", bytes=0xFEDCBA9876543210 ^ self._counter()))

    def _advertisement(self) -> MlePacket:
        self.id_sequence = (self.id_sequence + 1) & 0xFF
        return _pkt(M.ADVERTISEMENT, _LEADER_SA, _LEADER_DATA, route64_tlv(self.id_sequence))

    def _address_solicit_response(self) -> MlePacket:
        return _pkt(M.ADDRESS_SOLICIT_RESPONSE, _STATUS_OK, _ROUTER_A16, route64_tlv(self.id_sequence))

    def _link_accept(self, chal: bytes) -> MlePacket:
        c = self._counter()
        return _pkt(M.LINK_ACCEPT, _LEADER_SA, _LEADER_DATA, Tlv.of(T["response"], chal),
                    build_tlv("link_frame_counter", counter=c),
                    build_tlv("mle_frame_counter", counter=c),
                    _MARGIN_TLV, _VERSION_TLV, route64_tlv(self.id_sequence))


def create_node(node_type=NodeType.FTD, role_target=NodeRole.CHILD, sanitizer_enabled: bool = True,
                coverage: CoverageMap | None = None, rng: random.Random | None = None, **kw):
    """Fresh node: a detached DUT, or the generator when role_target is LEADER."""
    if NodeRole(role_target) is NodeRole.LEADER:
        return LeaderNode(coverage)
    return SimNode(node_type, sanitizer_enabled, coverage, rng, **kw)


def generate_next(leader: LeaderNode) -> MlePacket | None:
    return leader.generate_next()
