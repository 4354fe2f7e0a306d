"""Stateful injection harness.

A flat input ``[dut_type, state_code, payload...]`` selects a node type and
one of six protocol states. A fresh node is driven to that state by
replaying a recorded benign dialogue, the payload is wrapped into an MLE
frame and injected, and the rest of the dialogue is replayed so delayed
effects (a crash on a later packet) are observed.
"""
from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass
from importlib import resources

from .dut import AttachState, LeaderNode, NodeType, SimNode, StepOutcome
from .mle import HEADER_LEN, MESSAGE_CODES, SECURITY_STUB, encode_packet

SCRIPT_TICKS = 24
HARNESS_RNG_SEED = 0
FIXTURE = "benign_scripts.json"

_VALID = frozenset(MESSAGE_CODES)


class HarnessState(enum.IntEnum):
    DETACHED_AFTER_PARENT_REQUEST = 0
    DETACHED_AFTER_CHILD_ID_REQUEST = 1
    CHILD = 2
    CHILD_AFTER_CHILD_UPDATE_REQUEST = 3
    CHILD_AFTER_ADDRESS_SOLICIT = 4
    ROUTER = 5

    @property
    def label(self) -> str:
        return "".join(w.capitalize() for w in self.name.split("_"))


# node state that must hold at the injection point
_EXPECTED = {
    HarnessState.DETACHED_AFTER_PARENT_REQUEST: AttachState.PARENT_REQ_SENT,
    HarnessState.DETACHED_AFTER_CHILD_ID_REQUEST: AttachState.CHILD_ID_REQ_SENT,
    HarnessState.CHILD: AttachState.CHILD,
    HarnessState.CHILD_AFTER_CHILD_UPDATE_REQUEST: AttachState.CHILD_UPDATE_REQ_SENT,
    HarnessState.CHILD_AFTER_ADDRESS_SOLICIT: AttachState.ADDR_SOLICIT_SENT,
    HarnessState.ROUTER: AttachState.ROUTER,
}


class HarnessFixtureError(RuntimeError):
    pass


@dataclass(frozen=True)
class HarnessInput:
    node_type: NodeType
    state: HarnessState
    payload: bytes

    @classmethod
    def parse(cls, data: bytes) -> "HarnessInput":
        """Normalize any byte string; inputs shorter than two bytes are padded with zeros."""
        data = bytes(data).ljust(2, b"\0")
        node_type = NodeType.FTD if data[0] % 2 else NodeType.MTD
        code = data[1] % 6
        if node_type is NodeType.MTD and code >= 4:
            code %= 4  # an MTD never solicits the router role
        return cls(node_type, HarnessState(code), data[2:])

    def to_bytes(self) -> bytes:
        return bytes((1 if self.node_type is NodeType.FTD else 0, int(self.state))) + self.payload


@dataclass
class HarnessResult:
    reached_state: bool
    outcome: StepOutcome | None
    abort_reason: str | None
    target: HarnessInput
    message_type: int

    @property
    def crashed(self) -> bool:
        return self.outcome is not None and self.outcome.crashed

    @property
    def vuln(self):
        return self.outcome.vuln if self.outcome is not None else None

    def to_json(self) -> dict:
        o = self.outcome
        return {
            "reached_state": self.reached_state,
            "crashed": self.crashed,
            "crash_kind": o.crash_kind.value if o is not None and o.crash_kind else None,
            "vuln": self.vuln,
            "abort_reason": self.abort_reason,
            "target_state": int(self.target.state),
            "node_type": self.target.node_type.value,
            "message_type": self.message_type,
        }


def wrap_with_mle_headers(payload: bytes) -> bytes:
    """Security stub + message type byte + TLV region.

    A first byte that is not a message code is mapped onto the code table
    by modulo; an empty payload becomes an Advertisement.
    """
    payload = bytes(payload)
    b = payload[0] if payload else 0
    code = b if b in _VALID else MESSAGE_CODES[b % len(MESSAGE_CODES)]
    return SECURITY_STUB + bytes((code,)) + payload[1:]


# -- benign dialogue fixtures --------------------------------------------------------

def _harness_node(node_type: NodeType, sanitizer: bool) -> SimNode:
    return SimNode(node_type, sanitizer, rng=random.Random(HARNESS_RNG_SEED))


def capture_script(node_type: NodeType) -> dict:
    """Record the generator's packets to a fresh node, with injection points per state.

    Each injection point is the index of the script entry before which the
    node sits in the target state.
    """
    node_type = NodeType(node_type)
    dut = _harness_node(node_type, True)
    gen = LeaderNode()
    packets = []
    points: dict = {}

    def mark(idx):
        for hs, st in _EXPECTED.items():
            if dut.state is st and int(hs) not in points:
                points[int(hs)] = idx

    for p in dut.start():
        gen.receive(p)
    for t in range(SCRIPT_TICKS):
        for p in dut.tick():
            gen.receive(p)
        pkt = gen.generate_next()
        if pkt is None:
            continue
        mark(len(packets))
        raw = encode_packet(pkt)
        packets.append([t, raw.hex()])
        out = dut.step(raw)
        if out.crashed:
            raise HarnessFixtureError("benign dialogue crashed the node")
        for p in out.responses:
            gen.receive(p)
    mark(len(packets))
    return {"ticks": SCRIPT_TICKS, "packets": packets,
            "injection_points": {str(k): v for k, v in sorted(points.items())}}


def build_fixtures() -> dict:
    return {t.value: capture_script(t) for t in NodeType}


_fixture_cache: dict | None = None


def load_fixtures() -> dict:
    global _fixture_cache
    if _fixture_cache is None:
        try:
            text = resources.files("mlefuzz.data").joinpath(FIXTURE).read_text()
            doc = json.loads(text)
            parsed = {}
            for t in NodeType:
                s = doc[t.value]
                packets = [(int(tick), bytes.fromhex(h)) for tick, h in s["packets"]]
                points = {int(k): int(v) for k, v in s["injection_points"].items()}
                parsed[t] = (int(s["ticks"]), packets, points)
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise HarnessFixtureError(f"unreadable benign script fixture: {exc}") from None
        _fixture_cache = parsed
    return _fixture_cache


# -- execution ------------------------------------------------------------------------

def harness_execute(inp, sanitizer: bool = True) -> HarnessResult:
    """Drive a fresh node to the selected state, inject, and observe.

    ``inp`` is a HarnessInput or raw input bytes.
    """
    if not isinstance(inp, HarnessInput):
        inp = HarnessInput.parse(inp)
    ticks, packets, points = load_fixtures()[inp.node_type]
    if int(inp.state) not in points:
        raise HarnessFixtureError(f"fixture lacks an injection point for {inp.state.label}")
    inject_at = points[int(inp.state)]
    frame = wrap_with_mle_headers(inp.payload)
    msg = frame[HEADER_LEN]
    dut = _harness_node(inp.node_type, sanitizer)
    dut.start()
    injected = None  # StepOutcome of the injected frame once delivered

    def inject():
        if dut.state is not _EXPECTED[inp.state]:
            return HarnessResult(False, None, _abort_reason(inp.state, dut), inp, msg)
        return dut.step(frame)

    idx = 0
    for t in range(ticks):
        dut.tick()
        while idx < len(packets) and packets[idx][0] == t:
            if injected is None and idx == inject_at:
                injected = inject()
                if isinstance(injected, HarnessResult):
                    return injected
                if injected.crashed:
                    return HarnessResult(True, injected, None, inp, msg)
            out = dut.step(packets[idx][1])
            idx += 1
            if out.crashed:
                if injected is None:
                    return HarnessResult(False, None, f"crashed before injection: {out.vuln}", inp, msg)
                # a delayed effect of the injected frame
                return HarnessResult(True, out, None, inp, msg)
    if injected is None:
        injected = inject()
        if isinstance(injected, HarnessResult):
            return injected
    return HarnessResult(True, injected, None, inp, msg)


def _abort_reason(state: HarnessState, dut: SimNode) -> str:
    if state is HarnessState.ROUTER:
        return "not a Router"
    if state >= HarnessState.CHILD:
        return "not a child"
    return f"not in {state.label} (node is {dut.state.value})"
