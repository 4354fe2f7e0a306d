"""Native dissection of MLE packets into mutable fields.

Every TLV contributes its type byte, its length byte and one field per
layout entry. Variable-length tails and unregistered payloads are split into
per-byte fields, at most ``TAIL_CAP`` per tail.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .mle import (HEADER_LEN, REGISTRY, VAR, MlePacket, MleError, Tlv, TlvTypeRegistry,
                  DEFAULT_DEPTH_CAP, get_tlv, replace_tlv, PathError)

TAIL_CAP = 32

KIND_MESSAGE_TYPE = "message_type"
KIND_TLV_TYPE = "type"
KIND_TLV_LENGTH = "length"
KIND_PAYLOAD = "payload"


class StaleDescriptorError(MleError):
    pass


class FieldValueError(MleError):
    pass


@dataclass(frozen=True, slots=True)
class FieldDescriptor:
    path: str
    bit_offset: int
    bit_width: int
    kind: str = KIND_PAYLOAD
    tlv_path: tuple = ()
    byte_offset: int = 0  # offset within the TLV payload (payload fields only)

    @property
    def domain_size(self) -> int:
        return 1 << self.bit_width

    @property
    def max_value(self) -> int:
        return (1 << self.bit_width) - 1


@dataclass(frozen=True, slots=True)
class DissectedPacket:
    message_type: int
    fields: tuple

    @property
    def field_count(self) -> int:
        return len(self.fields)


@dataclass(frozen=True, slots=True)
class InsertionPoint:
    parent_path: tuple  # () for top level
    index: int
    depth: int  # nesting level a TLV inserted here would occupy

    @property
    def path(self) -> tuple:
        return self.parent_path + (self.index,)


def _payload_fields(tlv: Tlv, name: str, tlv_path: tuple, base_bit: int,
                    registry: TlvTypeRegistry) -> list:
    out = []
    payload = tlv.payload
    n = len(payload)
    spec = registry.get(tlv.tlv_type)
    off = 0
    tail = "data"
    if spec is not None:
        tail = "extra"
        for fname, width in spec.layout:
            if width == VAR:
                tail = fname
                break
            size = width // 8
            if off + size > n:
                break  # short payload: leftover bytes are "extra"
            out.append(FieldDescriptor(f"{name}.{fname}", base_bit + off * 8, width,
                                       KIND_PAYLOAD, tlv_path, off))
            off += size
    for j in range(min(n - off, TAIL_CAP)):
        out.append(FieldDescriptor(f"{name}.{tail}[{j}]", base_bit + (off + j) * 8, 8,
                                   KIND_PAYLOAD, tlv_path, off + j))
    return out


def _dissect_tlvs(tlvs, prefix: str, tlv_prefix: tuple, byte_pos: int, out: list,
                  registry: TlvTypeRegistry) -> int:
    seen: dict[int, int] = {}
    for i, tlv in enumerate(tlvs):
        spec = registry.get(tlv.tlv_type)
        base = spec.name if spec else f"unknown_0x{tlv.tlv_type:02x}"
        occ = seen.get(tlv.tlv_type, 0)
        seen[tlv.tlv_type] = occ + 1
        name = f"{prefix}{base}_tlv[{occ}]"
        tpath = tlv_prefix + (i,)
        out.append(FieldDescriptor(f"{name}.type", byte_pos * 8, 8, KIND_TLV_TYPE, tpath))
        out.append(FieldDescriptor(f"{name}.length", byte_pos * 8 + 8, 8, KIND_TLV_LENGTH, tpath))
        if isinstance(tlv.payload, tuple):
            _dissect_tlvs(tlv.payload, name + ".", tpath, byte_pos + 2, out, registry)
        else:
            out.extend(_payload_fields(tlv, name, tpath, (byte_pos + 2) * 8, registry))
        byte_pos += tlv.encoded_size
    return byte_pos


def dissect(packet: MlePacket, registry: TlvTypeRegistry = REGISTRY) -> DissectedPacket:
    fields = [FieldDescriptor("message_type", HEADER_LEN * 8, 8, KIND_MESSAGE_TYPE)]
    _dissect_tlvs(packet.tlvs, "", (), HEADER_LEN + 1, fields, registry)
    return DissectedPacket(packet.message_type, tuple(fields))


def insertion_points(packet: MlePacket, cap: int = DEFAULT_DEPTH_CAP,
                     registry: TlvTypeRegistry = REGISTRY) -> list:
    """Gaps between top-level TLVs plus one interior point per nestable TLV.

    Interior points append after the last existing child.
    """
    points = [InsertionPoint((), i, 1) for i in range(len(packet.tlvs) + 1)]

    def walk(tlvs, prefix, depth):
        for i, t in enumerate(tlvs):
            if isinstance(t.payload, tuple) and registry.is_nestable(t.tlv_type) and depth < cap:
                path = prefix + (i,)
                points.append(InsertionPoint(path, len(t.payload), depth + 1))
                walk(t.payload, path, depth + 1)

    walk(packet.tlvs, (), 1)
    return points


def _target(packet: MlePacket, d: FieldDescriptor) -> Tlv:
    try:
        tlv = get_tlv(packet, d.tlv_path)
    except PathError as exc:
        raise StaleDescriptorError(f"{d.path}: {exc}") from None
    if d.kind == KIND_PAYLOAD:
        if not isinstance(tlv.payload, bytes) or d.byte_offset + d.bit_width // 8 > len(tlv.payload):
            raise StaleDescriptorError(f"{d.path}: payload no longer covers field")
    return tlv


def read_field(packet: MlePacket, d: FieldDescriptor) -> int:
    if d.kind == KIND_MESSAGE_TYPE:
        return packet.message_type
    tlv = _target(packet, d)
    if d.kind == KIND_TLV_TYPE:
        return tlv.tlv_type
    if d.kind == KIND_TLV_LENGTH:
        return tlv.declared_length
    size = d.bit_width // 8
    return int.from_bytes(tlv.payload[d.byte_offset:d.byte_offset + size], "big")


def write_field(packet: MlePacket, d: FieldDescriptor, value: int) -> MlePacket:
    if not 0 <= value < d.domain_size:
        raise FieldValueError(f"{d.path}: value {value} outside domain of size {d.domain_size}")
    if d.kind == KIND_MESSAGE_TYPE:
        return replace(packet, message_type=value)
    _target(packet, d)
    if d.kind == KIND_TLV_TYPE:
        fn = lambda t: Tlv(value, t.declared_length, t.payload)  # noqa: E731
    elif d.kind == KIND_TLV_LENGTH:
        fn = lambda t: Tlv(t.tlv_type, value, t.payload)  # noqa: E731
    else:
        size = d.bit_width // 8
        off = d.byte_offset

        def fn(t):
            p = t.payload
            return Tlv(t.tlv_type, t.declared_length,
                       p[:off] + value.to_bytes(size, "big") + p[off + size:])
    return replace_tlv(packet, d.tlv_path, fn)
