"""Canonical, bit-exact serialization for every wire and file artifact.

All integers are big-endian.  The only little-endian structure is the
filter bit array (bit i = byte i//8, mask 1 << (i % 8)), fixed so that
filters built by independent parties merge bit-for-bit.

Every decoder is total: malformed bytes raise a typed ``DecodeError``
subclass, never anything else, and every decoder rejects truncated input
and trailing garbage.
"""

from __future__ import annotations

import struct

from .ercset import SALT_LEN, BloomFilter, ErcSet, FilterParams
from .messages import (
    DenialReason,
    EpochReport,
    ErcPullReq,
    ErcPullResp,
    ErcPush,
    Message,
    MsgType,
    RequestRrp,
    RevocationOrder,
    RrpResponse,
)
from .pseudonym import Capability, Latchkey
from .slot_tree import NodeLabel

CAPABILITY_MAGIC = b"RRPC"
ERCSET_MAGIC = b"ERCS"
BUNDLE_MAGIC = b"RRPB"
ORDER_MAGIC = b"RRPO"
SNAPSHOT_MAGIC = b"RRPS"
ENVELOPE_MAGIC = b"RRPE"
VERSION = 0x01

PUB_LEN = 32
SIG_LEN = 64
CID_LEN = 32


class DecodeError(ValueError):
    """Base class for all decoding failures."""


class BadMagic(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class Truncated(DecodeError):
    pass


class TrailingBytes(DecodeError):
    pass


class FieldError(DecodeError):
    """A structurally present field holds an invalid value."""


class _Reader:
    """Cursor over immutable bytes; every read checks remaining length."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"need {n} bytes at offset {self.pos}, "
                            f"have {len(self.data) - self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise BadMagic(f"expected magic {magic!r}, got {got!r}")

    def expect_version(self) -> None:
        v = self.u8()
        if v != VERSION:
            raise BadVersion(f"unsupported version {v:#04x}")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise TrailingBytes(f"{len(self.data) - self.pos} trailing bytes")


# -- capability ------------------------------------------------------------

def encode_capability(cap: Capability) -> bytes:
    out = bytearray(CAPABILITY_MAGIC)
    out.append(VERSION)
    out += struct.pack(">Q", cap.epoch_id)
    out += cap.pseudonym_pub
    out += cap.endorsement
    out.append(len(cap.latchkeys))
    for lk in cap.latchkeys:
        out.append(lk.label.level)
        out += struct.pack(">Q", lk.label.index)
        out += lk.sig
    return bytes(out)


def decode_capability(data: bytes) -> Capability:
    r = _Reader(data)
    cap = _read_capability(r)
    r.done()
    return cap


def _read_capability(r: _Reader) -> Capability:
    r.expect_magic(CAPABILITY_MAGIC)
    r.expect_version()
    epoch_id = r.u64()
    pub = r.take(PUB_LEN)
    endorsement = r.take(SIG_LEN)
    count = r.u8()
    if count == 0:
        raise FieldError("capability carries no latchkeys")
    latchkeys = []
    for _ in range(count):
        level = r.u8()
        index = r.u64()
        sig = r.take(SIG_LEN)
        latchkeys.append(Latchkey(NodeLabel(epoch_id, level, index), sig))
    return Capability(epoch_id, pub, endorsement, tuple(latchkeys))


# -- revocation filter -----------------------------------------------------

def encode_ercset(erc: ErcSet) -> bytes:
    flt = erc.filter
    if not isinstance(flt, BloomFilter):
        raise TypeError("only Bloom-filter revocation sets have a wire form")
    out = bytearray(ERCSET_MAGIC)
    out.append(VERSION)
    out += struct.pack(">Q", flt.epoch_id)
    out += struct.pack(">Q", flt.m)
    out.append(flt.k)
    out += flt.salt
    out += bytes(flt.bits)
    return bytes(out)


def decode_ercset(data: bytes) -> ErcSet:
    r = _Reader(data)
    erc = _read_ercset(r)
    r.done()
    return erc


def _read_ercset(r: _Reader) -> ErcSet:
    r.expect_magic(ERCSET_MAGIC)
    r.expect_version()
    epoch_id = r.u64()
    m = r.u64()
    k = r.u8()
    salt = r.take(SALT_LEN)
    try:
        params = FilterParams(m, k)
    except ValueError as exc:
        raise FieldError(str(exc)) from exc
    bits = r.take((m + 7) // 8)
    return ErcSet(BloomFilter(params, epoch_id, salt, bits))


# -- pseudonym endorsement bundle ------------------------------------------

def encode_rrp_bundle(epoch_id: int, endorsements: list[tuple[int, bytes]]) -> bytes:
    out = bytearray(BUNDLE_MAGIC)
    out.append(VERSION)
    out += struct.pack(">Q", epoch_id)
    out.append(len(endorsements))
    for instance, sig in endorsements:
        out += struct.pack(">Q", instance)
        out += sig
    return bytes(out)


def decode_rrp_bundle(data: bytes) -> tuple[int, list[tuple[int, bytes]]]:
    r = _Reader(data)
    r.expect_magic(BUNDLE_MAGIC)
    r.expect_version()
    epoch_id = r.u64()
    count = r.u8()
    endorsements = [(r.u64(), r.take(SIG_LEN)) for _ in range(count)]
    r.done()
    return epoch_id, endorsements


# -- revocation order ------------------------------------------------------

def encode_revocation_order(order: RevocationOrder) -> bytes:
    out = bytearray(ORDER_MAGIC)
    out.append(VERSION)
    out += order.cid
    out += struct.pack(">Q", order.rts)
    out += struct.pack(">Q", order.epoch_id)
    out += order.admin_sig
    return bytes(out)


def decode_revocation_order(data: bytes) -> RevocationOrder:
    r = _Reader(data)
    order = _read_revocation_order(r)
    r.done()
    return order


def _read_revocation_order(r: _Reader) -> RevocationOrder:
    r.expect_magic(ORDER_MAGIC)
    r.expect_version()
    cid = r.take(CID_LEN)
    rts = r.u64()
    epoch_id = r.u64()
    sig = r.take(SIG_LEN)
    return RevocationOrder(cid, rts, epoch_id, sig)


# -- message envelope ------------------------------------------------------

def _blob(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def _read_blob(r: _Reader) -> bytes:
    return r.take(r.u32())


def encode_message(msg: Message) -> bytes:
    """Envelope: magic || version || type tag u8 || length u32 || payload."""
    if isinstance(msg, RequestRrp):
        tag = MsgType.REQUEST_RRP
        payload = bytearray()
        payload += msg.cid
        payload += struct.pack(">Q", msg.epoch_id)
        payload.append(msg.count)
        if msg.proof is None:
            payload.append(0)
        else:
            payload.append(1)
            payload += struct.pack(">Q", msg.proof_slot or 0)
            payload += _blob(encode_capability(msg.proof))
        payload = bytes(payload)
    elif isinstance(msg, RrpResponse):
        tag = MsgType.RRP_RESPONSE
        payload = bytearray()
        payload.append(1 if msg.granted else 0)
        payload.append(int(msg.reason))
        payload += struct.pack(">Q", msg.epoch_id)
        payload.append(len(msg.endorsements))
        for instance, sig in msg.endorsements:
            payload += struct.pack(">Q", instance)
            payload += sig
        payload = bytes(payload)
    elif isinstance(msg, RevocationOrder):
        tag = MsgType.REVOKE
        payload = encode_revocation_order(msg)
    elif isinstance(msg, ErcPush):
        tag = MsgType.ERC_PUSH
        payload = _blob(encode_ercset(msg.current)) + _blob(encode_ercset(msg.next))
    elif isinstance(msg, ErcPullReq):
        tag = MsgType.ERC_PULL_REQ
        payload = struct.pack(">Q", msg.epoch_id)
    elif isinstance(msg, ErcPullResp):
        tag = MsgType.ERC_PULL_RESP
        payload = _blob(encode_ercset(msg.current)) + _blob(encode_ercset(msg.next))
    elif isinstance(msg, EpochReport):
        tag = MsgType.EPOCH_REPORT
        payload = (struct.pack(">Q", msg.from_epoch)
                   + _blob(encode_ercset(msg.current)) + _blob(encode_ercset(msg.next)))
    else:
        raise TypeError(f"not a wire message: {type(msg).__name__}")
    return ENVELOPE_MAGIC + bytes([VERSION, tag]) + _blob(payload)


def decode_message(data: bytes) -> Message:
    r = _Reader(data)
    r.expect_magic(ENVELOPE_MAGIC)
    r.expect_version()
    tag = r.u8()
    payload = _Reader(_read_blob(r))
    r.done()
    try:
        kind = MsgType(tag)
    except ValueError as exc:
        raise FieldError(f"unknown message type {tag:#04x}") from exc
    msg = _MESSAGE_READERS[kind](payload)
    payload.done()
    return msg


def _read_request(r: _Reader) -> RequestRrp:
    cid = r.take(CID_LEN)
    epoch_id = r.u64()
    count = r.u8()
    proof = None
    proof_slot = None
    if r.u8():
        proof_slot = r.u64()
        proof = decode_capability(_read_blob(r))
    return RequestRrp(cid, epoch_id, count, proof, proof_slot)


def _read_response(r: _Reader) -> RrpResponse:
    granted = bool(r.u8())
    try:
        reason = DenialReason(r.u8())
    except ValueError as exc:
        raise FieldError("unknown denial reason") from exc
    epoch_id = r.u64()
    count = r.u8()
    endorsements = tuple((r.u64(), r.take(SIG_LEN)) for _ in range(count))
    return RrpResponse(granted, reason, epoch_id, endorsements)


def _read_push(r: _Reader) -> ErcPush:
    return ErcPush(decode_ercset(_read_blob(r)), decode_ercset(_read_blob(r)))


def _read_pull_resp(r: _Reader) -> ErcPullResp:
    return ErcPullResp(decode_ercset(_read_blob(r)), decode_ercset(_read_blob(r)))


def _read_report(r: _Reader) -> EpochReport:
    return EpochReport(r.u64(), decode_ercset(_read_blob(r)),
                       decode_ercset(_read_blob(r)))


_MESSAGE_READERS = {
    MsgType.REQUEST_RRP: _read_request,
    MsgType.RRP_RESPONSE: _read_response,
    MsgType.REVOKE: _read_revocation_order,
    MsgType.ERC_PUSH: _read_push,
    MsgType.ERC_PULL_REQ: lambda r: ErcPullReq(r.u64()),
    MsgType.ERC_PULL_RESP: _read_pull_resp,
    MsgType.EPOCH_REPORT: _read_report,
}


# -- manager snapshot ------------------------------------------------------

def encode_snapshot(epoch_now: int, registry: list[bytes],
                    erc_current: ErcSet, erc_next: ErcSet) -> bytes:
    out = bytearray(SNAPSHOT_MAGIC)
    out.append(VERSION)
    out += struct.pack(">Q", epoch_now)
    out += struct.pack(">I", len(registry))
    for cid in sorted(registry):
        out += cid
    out += _blob(encode_ercset(erc_current))
    out += _blob(encode_ercset(erc_next))
    return bytes(out)


def decode_snapshot(data: bytes) -> tuple[int, list[bytes], ErcSet, ErcSet]:
    r = _Reader(data)
    r.expect_magic(SNAPSHOT_MAGIC)
    r.expect_version()
    epoch_now = r.u64()
    count = r.u32()
    registry = [r.take(CID_LEN) for _ in range(count)]
    current = decode_ercset(_read_blob(r))
    nxt = decode_ercset(_read_blob(r))
    r.done()
    return epoch_now, registry, current, nxt
