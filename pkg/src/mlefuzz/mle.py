"""MLE packet and TLV data model with a byte-exact codec.

A packet on the wire is a 5-byte opaque security header, one message-type
byte and a sequence of TLV records. Decoding is lenient: any byte string of
at least six bytes with a known message type decodes, and re-encoding the
result reproduces the input exactly.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Union

HEADER_LEN = 5
MIN_PACKET_LEN = HEADER_LEN + 1
DEFAULT_DEPTH_CAP = 4
VAR = 0  # layout width marker for a variable-length tail field

SECURITY_STUB = bytes(HEADER_LEN)


class MleError(ValueError):
    pass


class DecodeError(MleError):
    pass


class NestingError(MleError):
    pass


class PathError(MleError, IndexError):
    pass


class MessageType(enum.IntEnum):
    ADVERTISEMENT = 0x00
    LINK_REQUEST = 0x02
    LINK_ACCEPT = 0x03
    DATA_REQUEST = 0x07
    DATA_RESPONSE = 0x08
    PARENT_REQUEST = 0x09
    PARENT_RESPONSE = 0x0A
    CHILD_ID_REQUEST = 0x0B
    CHILD_ID_RESPONSE = 0x0C
    CHILD_UPDATE_REQUEST = 0x0D
    CHILD_UPDATE_RESPONSE = 0x0E
    ADDRESS_SOLICIT = 0x10
    ADDRESS_SOLICIT_RESPONSE = 0x11


MESSAGE_CODES = tuple(sorted(int(m) for m in MessageType))
_VALID_CODES = frozenset(MESSAGE_CODES)


def message_name(code: int) -> str:
    try:
        return MessageType(code).name.lower()
    except ValueError:
        return f"msg_0x{code:02x}"


@dataclass(frozen=True)
class TlvSpec:
    code: int
    name: str
    layout: tuple = ()
    nestable: bool = False

    @property
    def fixed_size(self) -> int | None:
        """Payload size in bytes, or None when the layout ends in a var tail."""
        if any(w == VAR for _, w in self.layout):
            return None
        return sum(w for _, w in self.layout) // 8

    @property
    def min_size(self) -> int:
        return sum(w for _, w in self.layout) // 8


class TlvTypeRegistry:
    def __init__(self, specs: Iterable[TlvSpec]):
        self._by_code: dict[int, TlvSpec] = {}
        self._by_name: dict[str, TlvSpec] = {}
        for spec in specs:
            if spec.code in self._by_code or spec.name in self._by_name:
                raise ValueError(f"duplicate TLV registration: {spec}")
            for i, (_, width) in enumerate(spec.layout):
                if width == VAR and i != len(spec.layout) - 1:
                    raise ValueError(f"{spec.name}: var field must be last")
                if width % 8:
                    raise ValueError(f"{spec.name}: widths must be whole bytes")
            self._by_code[spec.code] = spec
            self._by_name[spec.name] = spec

    def get(self, code: int) -> TlvSpec | None:
        return self._by_code.get(code)

    def by_name(self, name: str) -> TlvSpec:
        return self._by_name[name]

    def code(self, name: str) -> int:
        return self._by_name[name].code

    def is_nestable(self, code: int) -> bool:
        spec = self._by_code.get(code)
        return spec is not None and spec.nestable

    def __iter__(self) -> Iterator[TlvSpec]:
        return iter(self._by_code.values())

    def __len__(self) -> int:
        return len(self._by_code)


REGISTRY = TlvTypeRegistry([
    TlvSpec(0x00, "source_address", (("addr16", 16),)),
    TlvSpec(0x01, "mode", (("mode", 8),)),
    TlvSpec(0x02, "timeout", (("timeout", 32),)),
    TlvSpec(0x03, "challenge", (("bytes", 64),)),
    TlvSpec(0x04, "response", (("bytes", 64),)),
    TlvSpec(0x05, "link_frame_counter", (("counter", 32),)),
    TlvSpec(0x08, "mle_frame_counter", (("counter", 32),)),
    TlvSpec(0x09, "route64", (("id_sequence", 8), ("router_mask", 64), ("route_data", VAR))),
    TlvSpec(0x0A, "address16", (("addr16", 16),)),
    TlvSpec(0x0B, "leader_data", (("partition_id", 32), ("weighting", 8), ("data_version", 8),
                                  ("stable_version", 8), ("leader_id", 8))),
    TlvSpec(0x0C, "network_data", (("data", VAR),), nestable=True),
    TlvSpec(0x0D, "tlv_request", (("tlvs", VAR),)),
    TlvSpec(0x0E, "scan_mask", (("mask", 8),)),
    TlvSpec(0x0F, "connectivity", (("parent_priority", 8), ("link_quality_3", 8), ("link_quality_2", 8),
                                   ("link_quality_1", 8), ("leader_cost", 8), ("id_sequence", 8),
                                   ("active_routers", 8))),
    TlvSpec(0x10, "link_margin", (("margin", 8),)),
    TlvSpec(0x11, "status", (("status", 8),)),
    TlvSpec(0x12, "version", (("version", 16),)),
    TlvSpec(0x13, "address_registration", (("entries", VAR),)),
    # network-data sub-TLVs share the code space
    TlvSpec(0x20, "prefix", (("prefix_length", 8), ("prefix", VAR))),
    TlvSpec(0x21, "server", (("server16", 16), ("data", VAR))),
    TlvSpec(0x22, "commissioning_data", (("session_id", 16), ("data", VAR))),
])


@dataclass(frozen=True, slots=True)
class Tlv:
    """One TLV record. ``payload`` is raw bytes or a tuple of child TLVs.

    ``declared_length`` is carried verbatim and may disagree with the
    payload; see :attr:`consistent`.
    """

    tlv_type: int
    declared_length: int
    payload: Union[bytes, tuple] = b""

    @property
    def nested(self) -> bool:
        return isinstance(self.payload, tuple)

    @property
    def actual_length(self) -> int:
        if isinstance(self.payload, tuple):
            return sum(c.encoded_size for c in self.payload)
        return len(self.payload)

    @property
    def encoded_size(self) -> int:
        return 2 + self.actual_length

    @property
    def consistent(self) -> bool:
        return self.declared_length == self.actual_length

    @property
    def height(self) -> int:
        if isinstance(self.payload, tuple) and self.payload:
            return 1 + max(c.height for c in self.payload)
        return 1

    def payload_bytes(self) -> bytes:
        if isinstance(self.payload, tuple):
            return b"".join(encode_tlv(c) for c in self.payload)
        return self.payload

    @classmethod
    def of(cls, tlv_type: int, payload=b"") -> "Tlv":
        """Build a length-consistent TLV."""
        if isinstance(payload, list):
            payload = tuple(payload)
        tmp = cls(tlv_type, 0, payload)
        return cls(tlv_type, tmp.actual_length, payload)


@dataclass(frozen=True, slots=True)
class MlePacket:
    message_type: int
    tlvs: tuple = ()
    security_header: bytes = SECURITY_STUB
    trailer: bytes = b""  # undecodable single byte left after the last TLV

    def __post_init__(self):
        if isinstance(self.tlvs, list):
            object.__setattr__(self, "tlvs", tuple(self.tlvs))


def build_tlv(name: str, registry: TlvTypeRegistry = REGISTRY, **values) -> Tlv:
    """Build a consistent TLV from named layout values.

    Fixed fields take ints; the var tail takes bytes, or a list of TLVs for
    nestable types.
    """
    spec = registry.by_name(name)
    if spec.nestable:
        children = values.get("children", ())
        return Tlv.of(spec.code, tuple(children))
    out = bytearray()
    for fname, width in spec.layout:
        v = values.get(fname, 0 if width else b"")
        if width == VAR:
            out += bytes(v)
        else:
            out += int(v).to_bytes(width // 8, "big")
    return Tlv.of(spec.code, bytes(out))


# -- codec ------------------------------------------------------------------

def encode_tlv(tlv: Tlv, depth: int = 1, cap: int = DEFAULT_DEPTH_CAP) -> bytes:
    if depth > cap:
        raise NestingError(f"nesting depth {depth} exceeds cap {cap}")
    if not 0 <= tlv.tlv_type <= 0xFF or not 0 <= tlv.declared_length <= 0xFF:
        raise MleError(f"TLV header out of range: {tlv.tlv_type}, {tlv.declared_length}")
    if isinstance(tlv.payload, tuple):
        body = b"".join(encode_tlv(c, depth + 1, cap) for c in tlv.payload)
    else:
        body = tlv.payload
    return bytes((tlv.tlv_type, tlv.declared_length)) + body


def encode_packet(packet: MlePacket, cap: int = DEFAULT_DEPTH_CAP) -> bytes:
    if len(packet.security_header) != HEADER_LEN:
        raise MleError("security header must be 5 bytes")
    parts = [packet.security_header, bytes((packet.message_type & 0xFF,))]
    parts.extend(encode_tlv(t, 1, cap) for t in packet.tlvs)
    parts.append(packet.trailer)
    return b"".join(parts)


def _decode_region(buf: bytes, start: int, end: int, depth: int, cap: int,
                   registry: TlvTypeRegistry):
    out = []
    pos = start
    while end - pos >= 2:
        t = buf[pos]
        length = buf[pos + 1]
        pstart = pos + 2
        pend = min(pstart + length, end)
        payload = None
        if depth < cap and registry.is_nestable(t):
            children, rest = _decode_region(buf, pstart, pend, depth + 1, cap, registry)
            if not rest:
                payload = children
        if payload is None:
            payload = buf[pstart:pend]
        out.append(Tlv(t, length, payload))
        pos = pend
    return tuple(out), buf[pos:end]


def decode_tlvs(data: bytes, depth: int = 1, cap: int = DEFAULT_DEPTH_CAP,
                registry: TlvTypeRegistry = REGISTRY):
    """Decode a TLV region. Returns (tlvs, leftover) where leftover is < 2 bytes."""
    data = bytes(data)
    return _decode_region(data, 0, len(data), depth, cap, registry)


def decode_packet(data: bytes, cap: int = DEFAULT_DEPTH_CAP,
                  registry: TlvTypeRegistry = REGISTRY) -> MlePacket:
    data = bytes(data)
    if len(data) < MIN_PACKET_LEN:
        raise DecodeError(f"packet too short: {len(data)} bytes")
    code = data[HEADER_LEN]
    if code not in _VALID_CODES:
        raise DecodeError(f"unknown message type 0x{code:02x}")
    tlvs, rest = _decode_region(data, MIN_PACKET_LEN, len(data), 1, cap, registry)
    return MlePacket(code, tlvs, data[:HEADER_LEN], rest)


# -- tree paths ---------------------------------------------------------------

def get_tlv(packet: MlePacket, path) -> Tlv:
    if not path:
        raise PathError("empty path does not address a TLV")
    level = packet.tlvs
    tlv = None
    for idx in path:
        if not isinstance(level, tuple) or not 0 <= idx < len(level):
            raise PathError(f"invalid TLV path {tuple(path)}")
        tlv = level[idx]
        level = tlv.payload
    return tlv


def iter_tlvs(tlvs, prefix=()) -> Iterator[tuple[tuple, Tlv]]:
    """Depth-first (path, tlv) pairs."""
    for i, t in enumerate(tlvs):
        path = prefix + (i,)
        yield path, t
        if isinstance(t.payload, tuple):
            yield from iter_tlvs(t.payload, path)


def _update_at(tlvs: tuple, path, fn) -> tuple:
    idx = path[0]
    if not 0 <= idx < len(tlvs):
        raise PathError(f"invalid TLV path index {idx}")
    node = tlvs[idx]
    if len(path) == 1:
        new = fn(node)
    else:
        if not isinstance(node.payload, tuple):
            raise PathError("path descends into a raw TLV")
        new = replace(node, payload=_update_at(node.payload, path[1:], fn))
    return tlvs[:idx] + (new,) + tlvs[idx + 1:]


def replace_tlv(packet: MlePacket, path, fn) -> MlePacket:
    """Return a copy of ``packet`` with the TLV at ``path`` replaced by fn(tlv)."""
    if not path:
        raise PathError("empty path")
    return replace(packet, tlvs=_update_at(packet.tlvs, tuple(path), fn))


def insert_tlv(packet: MlePacket, parent_path, index: int, tlv: Tlv) -> MlePacket:
    """Insert ``tlv`` as child ``index`` of ``parent_path`` (() for top level)."""
    def ins(seq: tuple) -> tuple:
        if not 0 <= index <= len(seq):
            raise PathError(f"insertion index {index} out of range")
        return seq[:index] + (tlv,) + seq[index:]

    if not parent_path:
        return replace(packet, tlvs=ins(packet.tlvs))

    def into(parent: Tlv) -> Tlv:
        if not isinstance(parent.payload, tuple):
            raise PathError("cannot insert into a raw TLV")
        return replace(parent, payload=ins(parent.payload))

    return replace_tlv(packet, parent_path, into)


def _normalize(tlv: Tlv) -> Tlv:
    if isinstance(tlv.payload, tuple):
        kids = tuple(_normalize(c) for c in tlv.payload)
        return Tlv.of(tlv.tlv_type, kids)
    if tlv.consistent:
        return tlv
    return Tlv(tlv.tlv_type, len(tlv.payload), tlv.payload)


def _fix_own_length(tlv: Tlv) -> Tlv:
    if isinstance(tlv.payload, tuple) and not tlv.consistent:
        return Tlv(tlv.tlv_type, tlv.actual_length, tlv.payload)
    return tlv


def recompute_parent_lengths(packet: MlePacket, path=()) -> MlePacket:
    """Fix declared lengths along ``path``.

    The addressed TLV (if nested) and each of its ancestors get
    declared_length equal to their serialized payload size. The empty path
    normalizes every TLV in the packet.
    """
    path = tuple(path)
    if not path:
        return replace(packet, tlvs=tuple(_normalize(t) for t in packet.tlvs))
    get_tlv(packet, path)  # validate
    for cut in range(len(path), 0, -1):
        packet = replace_tlv(packet, path[:cut], _fix_own_length)
    return packet


def max_depth(tlvs) -> int:
    return max((t.height for t in tlvs), default=0)


def tlv_name(code: int, registry: TlvTypeRegistry = REGISTRY) -> str:
    spec = registry.get(code)
    return spec.name if spec else f"unknown_0x{code:02x}"
