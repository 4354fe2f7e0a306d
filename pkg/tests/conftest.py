import random
import sys
from pathlib import Path

import pytest

from mlefuzz.dut import LeaderNode, NodeType, SimNode
from mlefuzz.mle import MESSAGE_CODES, REGISTRY, MlePacket, Tlv, decode_tlvs

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(Path(__file__).resolve().parent))

_CODES = [s.code for s in REGISTRY]


def _raw_blob(rng: random.Random, code: int, n: int, depth: int, cap: int) -> bytes:
    """Bytes for a raw payload; under a nestable type they must not parse as children."""
    nestable = REGISTRY.is_nestable(code) and depth < cap
    if nestable and n == 0:
        n = 1  # an empty nestable payload decodes as zero children
    while True:
        blob = rng.randbytes(n)
        if not nestable:
            return blob
        _, rest = decode_tlvs(blob, depth + 1, cap)
        if rest:
            return blob
        n = max(1, n - 1) if n % 2 == 0 else n


def random_tlv(rng: random.Random, depth: int = 1, cap: int = 4, inconsistent: float = 0.0) -> Tlv:
    """Random TLV tree over registered and unknown types.

    Only this TLV's own header may be inconsistent (with probability
    ``inconsistent``); descendants are always consistent.
    """
    code = rng.choice(_CODES) if rng.random() < 0.8 else rng.randrange(256)
    if REGISTRY.is_nestable(code) and depth < cap and rng.random() < 0.7:
        kids = tuple(random_tlv(rng, depth + 1, cap) for _ in range(rng.randrange(4)))
        tlv = Tlv.of(code, kids)
    else:
        spec = REGISTRY.get(code)
        if spec is not None and spec.fixed_size is not None and rng.random() < 0.7:
            n = spec.fixed_size
        else:
            n = rng.randrange(12)
        tlv = Tlv.of(code, _raw_blob(rng, code, n, depth, cap))
    if rng.random() < inconsistent and tlv.actual_length < 255:
        tlv = Tlv(code, rng.randrange(tlv.actual_length + 1, 256), tlv.payload)
    return tlv


def random_packet(rng: random.Random, consistent_only: bool = False, max_tlvs: int = 6) -> MlePacket:
    """Random packet; unless ``consistent_only``, the last TLV may claim more bytes than remain."""
    n = rng.randrange(max_tlvs + 1)
    tlvs = [random_tlv(rng) for _ in range(n)]
    if n and not consistent_only:
        tlvs[-1] = random_tlv(rng, inconsistent=0.3)
    trailer = b""
    if all(t.consistent for t in tlvs) and rng.random() < 0.1:
        trailer = rng.randbytes(1)
    return MlePacket(rng.choice(MESSAGE_CODES), tuple(tlvs), rng.randbytes(5), trailer)


def benign_dialogue(node_type, ticks: int = 40, sanitizer: bool = True, rng_seed: int = 0):
    """Run the unmutated generator against a fresh node; returns (node, generator, packets)."""
    dut = SimNode(NodeType(node_type), sanitizer, rng=random.Random(rng_seed))
    gen = LeaderNode()
    sent = []
    for p in dut.start():
        gen.receive(p)
    for t in range(ticks):
        for p in dut.tick():
            gen.receive(p)
        pkt = gen.generate_next()
        if pkt is None:
            continue
        sent.append((t, pkt))
        out = dut.step(pkt)
        assert not out.crashed, out
        for p in out.responses:
            gen.receive(p)
    return dut, gen, sent


@pytest.fixture
def rng():
    return random.Random(1234)


_ACCEPTANCE_LINES: list = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class Dialogue:
    """Step-wise generator/node exchange for directed tests."""

    def __init__(self, node_type, sanitizer: bool = True, rng_seed: int = 0, **node_kw):
        self.dut = SimNode(NodeType(node_type), sanitizer, rng=random.Random(rng_seed), **node_kw)
        self.gen = LeaderNode()
        self.t = -1
        for p in self.dut.start():
            self.gen.receive(p)

    def next_packet(self, max_ticks: int = 60):
        """Advance time until the generator emits a packet; returns it undelivered."""
        for _ in range(max_ticks):
            self.t += 1
            for p in self.dut.tick():
                self.gen.receive(p)
            pkt = self.gen.generate_next()
            if pkt is not None:
                return pkt
        raise AssertionError("generator went quiet")

    def deliver(self, pkt):
        out = self.dut.step(pkt)
        if not out.crashed:
            for p in out.responses:
                self.gen.receive(p)
        return out

    def until_state(self, state, max_packets: int = 40):
        """Deliver benign packets until the node sits in ``state``; returns the next packet."""
        for _ in range(max_packets):
            pkt = self.next_packet()
            if self.dut.state is state:
                return pkt
            out = self.deliver(pkt)
            assert not out.crashed, out
        raise AssertionError(f"state {state} not reached")


def set_field(pkt, path: str, value: int):
    from mlefuzz.dissector import dissect, write_field
    for f in dissect(pkt).fields:
        if f.path == path:
            return write_field(pkt, f, value)
    raise KeyError(path)
