"""Wire-visible message types exchanged by managers, verifiers and clients.

These are plain value objects; byte encodings live in ``codec``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .ercset import ErcSet
from .pseudonym import Capability


class MsgType(enum.IntEnum):
    REQUEST_RRP = 0x01
    RRP_RESPONSE = 0x02
    REVOKE = 0x03
    ERC_PUSH = 0x04
    ERC_PULL_REQ = 0x05
    ERC_PULL_RESP = 0x06
    EPOCH_REPORT = 0x07


class DenialReason(enum.IntEnum):
    NONE = 0
    UNKNOWN_CLIENT = 1
    REVOKED = 2
    BUDGET_EXHAUSTED = 3
    EPOCH_OUT_OF_WINDOW = 4
    BAD_PROOF = 5
    QUARANTINE = 6


@dataclass(frozen=True)
class RevocationOrder:
    """Administrator order: revoke ``cid`` from slot ``rts`` to epoch end."""

    cid: bytes
    rts: int
    epoch_id: int
    admin_sig: bytes

    def signed_payload(self) -> bytes:
        return self.cid + self.rts.to_bytes(8, "big") + self.epoch_id.to_bytes(8, "big")


@dataclass(frozen=True)
class RequestRrp:
    cid: bytes
    epoch_id: int
    count: int
    proof: Capability | None = None
    proof_slot: int | None = None


@dataclass(frozen=True)
class RrpResponse:
    granted: bool
    reason: DenialReason
    epoch_id: int
    endorsements: tuple[tuple[int, bytes], ...] = ()  # (instance, signature)


@dataclass(frozen=True)
class ErcPush:
    current: ErcSet
    next: ErcSet


@dataclass(frozen=True)
class ErcPullReq:
    epoch_id: int


@dataclass(frozen=True)
class ErcPullResp:
    current: ErcSet
    next: ErcSet


@dataclass(frozen=True)
class EpochReport:
    """Transition broadcast: a manager's filters for the epoch just ended
    and its successor."""

    from_epoch: int
    current: ErcSet
    next: ErcSet


Message = (RequestRrp | RrpResponse | RevocationOrder | ErcPush
           | ErcPullReq | ErcPullResp | EpochReport)
