"""Pseudonym-manager node: issuance, revocation, gossip, epoch transition.

A manager is split in two parts mirroring the intended deployment on
trusted hardware:

* ``TrustedCore`` holds everything secret or safety-critical: the manager
  signing key, the administrator public key, the client registry and
  per-client issuance counters, and the two live revocation filters (one
  for the current epoch, one for the next).  It alone builds filters and
  decides issuance.
* ``PmNode`` is the untrusted host shell: peer bookkeeping, gossip fan-out,
  pull timers and the epoch-transition quarantine.  It moves serialized
  values around but never touches key material or client ids directly.

A node is a single logical state machine: every handler runs serially and
returns the messages to transmit, so nodes drop unchanged into the
deterministic simulator or behind a real transport.
"""

from __future__ import annotations

import enum
import logging
import random
from dataclasses import dataclass, field

from .crypto import KeyPair, det_sign, ver_sign
from .ercset import (
    BloomFilter,
    ErcSet,
    ExactSet,
    FilterParams,
    LatchkeySet,
    is_revoked,
    latchkeys_encoding,
    merge_ercset,
)
from .messages import (
    DenialReason,
    EpochReport,
    ErcPullReq,
    ErcPullResp,
    ErcPush,
    RequestRrp,
    RevocationOrder,
    RrpResponse,
)
from .pseudonym import (
    Latchkey,
    Rrp,
    create_rrp,
    pseudonym_keypair,
    pseudonym_public_keys_of,
    verify_capability,
)
from .slot_tree import EpochConfig, NodeLabel, SlotRange, safe_cover

log = logging.getLogger(__name__)


class PmMode(enum.Enum):
    SERVING = "serving"
    QUARANTINE = "quarantine"


def empty_ercset(params: FilterParams, epoch_id: int, exact: bool = False) -> ErcSet:
    return ErcSet(ExactSet(epoch_id) if exact else BloomFilter(params, epoch_id))


def revocation_cover_ercset(cid: bytes, epoch_id: int, instance: int,
                            cfg: EpochConfig, rng: SlotRange,
                            params: FilterParams, exact: bool = False) -> ErcSet:
    """Filter revoking one pseudonym instance over a contiguous slot range.

    Signs only the minimal tree cover of the range instead of materializing
    every in-range capability; the result is bit-identical to running the
    full capability pipeline (the cover labels are exactly the latchkeys
    that survive it).
    """
    keypair = pseudonym_keypair(cid, epoch_id, instance)
    latchkeys = frozenset(
        Latchkey(label, det_sign(keypair, label.canonical_bytes))
        for label in safe_cover(cfg, rng)
    )
    lset = LatchkeySet(keypair.public, latchkeys)
    return latchkeys_encoding(lset, params, cfg.epoch_id, exact=exact)


def root_only_ercset(cid: bytes, epoch_id: int, instance: int,
                     cfg: EpochConfig, params: FilterParams,
                     exact: bool = False) -> ErcSet:
    """Whole-epoch revocation of one instance: just the root latchkey."""
    keypair = pseudonym_keypair(cid, epoch_id, instance)
    root = NodeLabel(cfg.epoch_id, 0, 0)
    lset = LatchkeySet(keypair.public,
                       frozenset({Latchkey(root, det_sign(keypair, root.canonical_bytes))}))
    return latchkeys_encoding(lset, params, cfg.epoch_id, exact=exact)


class IssuanceDenied(Exception):
    def __init__(self, reason: DenialReason):
        super().__init__(reason.name.lower().replace("_", "-"))
        self.reason = reason


class TrustedCore:
    """Secret-holding half of a manager; see module docstring.

    The core is deterministic: re-running issuance for the same
    (cid, epoch, instance) always reproduces byte-identical endorsements,
    which is what makes stateless recovery of a crashed manager possible.
    """

    def __init__(self, pm_key: KeyPair, admin_public: bytes,
                 geometry: EpochConfig, params: FilterParams,
                 max_instances: int, epoch_now: int | None = None,
                 exact_filters: bool = False):
        self.pm_key = pm_key
        self.admin_public = admin_public
        self.geometry = geometry          # slot geometry; epoch_id field ignored
        self.params = params
        self.max_instances = max_instances
        self.exact_filters = exact_filters
        self.epoch_now = geometry.epoch_id if epoch_now is None else epoch_now
        self.registry: set[bytes] = set()
        self.revoked: set[bytes] = set()  # expelled clients (order seen locally)
        self.issued: dict[tuple[bytes, int], int] = {}  # (cid, epoch) -> highest instance
        self.erc_current = empty_ercset(params, self.epoch_now, exact_filters)
        self.erc_next = empty_ercset(params, self.epoch_now + 1, exact_filters)

    @property
    def public_key(self) -> bytes:
        return self.pm_key.public

    def cfg_for(self, epoch_id: int) -> EpochConfig:
        return self.geometry.with_epoch(epoch_id)

    def register(self, cid: bytes) -> None:
        self.registry.add(cid)

    def erc_for(self, epoch_id: int) -> ErcSet | None:
        if epoch_id == self.epoch_now:
            return self.erc_current
        if epoch_id == self.epoch_now + 1:
            return self.erc_next
        return None

    # -- issuance ---------------------------------------------------------

    def issue(self, req: RequestRrp, quarantined: bool = False) -> list[Rrp]:
        """Issue the next unused instances, or raise ``IssuanceDenied``.

        Clients may request pseudonyms for the current or the next epoch
        only.  The first-ever request of a client needs no capability proof
        (it cannot have one); every later request must present a valid,
        unrevoked capability of that client.
        """
        if req.epoch_id not in (self.epoch_now, self.epoch_now + 1):
            raise IssuanceDenied(DenialReason.QUARANTINE if quarantined
                                 and req.epoch_id == self.epoch_now + 2
                                 else DenialReason.EPOCH_OUT_OF_WINDOW)
        if req.cid not in self.registry:
            raise IssuanceDenied(DenialReason.UNKNOWN_CLIENT)
        if req.cid in self.revoked:
            raise IssuanceDenied(DenialReason.REVOKED)
        self._check_standing(req.cid)
        if any(self.issued.get((req.cid, e)) for e in (self.epoch_now - 1,
                                                       self.epoch_now,
                                                       self.epoch_now + 1)):
            self._check_proof(req)
        start = self.issued.get((req.cid, req.epoch_id), 0) + 1
        end = start + req.count - 1
        if end > self.max_instances:
            raise IssuanceDenied(DenialReason.BUDGET_EXHAUSTED)
        rrps = [create_rrp(req.cid, req.epoch_id, i, self.pm_key, self.max_instances)
                for i in range(start, end + 1)]
        self.issued[(req.cid, req.epoch_id)] = end
        return rrps

    def _check_standing(self, cid: bytes) -> None:
        """Deny clients whose pseudonyms are wholesale-revoked for a live epoch.

        A manager that learned of a revocation only through gossiped filters
        (never the order itself) can still recognize the client: full-epoch
        revocation puts every instance's root latchkey in the filter, and
        roots are derivable from the cid alone.  One probe per live epoch
        suffices because revocation always covers instance 1.
        """
        for epoch_id in (self.epoch_now, self.epoch_now + 1):
            erc = self.erc_for(epoch_id)
            keypair = pseudonym_keypair(cid, epoch_id, 1)
            root = NodeLabel(epoch_id, 0, 0)
            if erc.filter.query(det_sign(keypair, root.canonical_bytes)):
                raise IssuanceDenied(DenialReason.REVOKED)

    def _check_proof(self, req: RequestRrp) -> None:
        proof = req.proof
        if proof is None or req.proof_slot is None:
            raise IssuanceDenied(DenialReason.BAD_PROOF)
        erc = self.erc_for(proof.epoch_id)
        if erc is None:
            raise IssuanceDenied(DenialReason.BAD_PROOF)
        cfg = self.cfg_for(proof.epoch_id)
        if not verify_capability(proof, self.public_key, req.proof_slot, cfg):
            raise IssuanceDenied(DenialReason.BAD_PROOF)
        known = pseudonym_public_keys_of(req.cid, proof.epoch_id, self.max_instances)
        if proof.pseudonym_pub not in known:
            raise IssuanceDenied(DenialReason.BAD_PROOF)
        if is_revoked(erc, proof):
            raise IssuanceDenied(DenialReason.REVOKED)

    # -- revocation -------------------------------------------------------

    def note_expulsion(self, order: RevocationOrder) -> bool:
        """Record that a client was revoked, regardless of the order's epoch.

        The revoked set is what outlives the two filter epochs; a relayed
        order from a past epoch still proves the client was expelled.
        Returns False (state unchanged) for bad signatures.
        """
        if not ver_sign(self.admin_public, order.signed_payload(), order.admin_sig):
            return False
        self.revoked.add(order.cid)
        return True

    def revoke(self, order: RevocationOrder) -> None:
        """Apply an administrator order to both live filters.

        Current epoch: every instance is revoked from the order's slot to
        the end of the epoch via its minimal tree cover.  Next epoch: every
        instance is revoked outright via its root latchkey.  Merging is
        idempotent, so replayed orders change nothing.
        """
        if not ver_sign(self.admin_public, order.signed_payload(), order.admin_sig):
            raise ValueError("revocation order signature invalid")
        if order.epoch_id != self.epoch_now:
            raise ValueError(
                f"order targets epoch {order.epoch_id}, current is {self.epoch_now}")
        cfg_now = self.cfg_for(self.epoch_now)
        cfg_next = self.cfg_for(self.epoch_now + 1)
        self.revoked.add(order.cid)
        rng = SlotRange(order.rts, cfg_now.slots - 1)
        for i in range(1, self.max_instances + 1):
            self.erc_current = merge_ercset(
                self.erc_current,
                revocation_cover_ercset(order.cid, self.epoch_now, i, cfg_now,
                                        rng, self.params, self.exact_filters))
            self.erc_next = merge_ercset(
                self.erc_next,
                root_only_ercset(order.cid, self.epoch_now + 1, i, cfg_next,
                                 self.params, self.exact_filters))

    # -- filter state -----------------------------------------------------

    def merge_filters(self, current: ErcSet | None, nxt: ErcSet | None) -> bool:
        """Merge compatible incoming filters; True if any bits were gained."""
        changed = False
        for incoming in (current, nxt):
            if incoming is None:
                continue
            if incoming.epoch_id == self.erc_current.epoch_id:
                merged = merge_ercset(self.erc_current, incoming)
                changed |= merged != self.erc_current
                self.erc_current = merged
            elif incoming.epoch_id == self.erc_next.epoch_id:
                merged = merge_ercset(self.erc_next, incoming)
                changed |= merged != self.erc_next
                self.erc_next = merged
        return changed

    def rotate_epoch(self) -> None:
        """Discard epoch t, promote t+1, open an empty filter for t+2."""
        self.epoch_now += 1
        self.erc_current = self.erc_next
        self.erc_next = empty_ercset(self.params, self.epoch_now + 1,
                                     self.exact_filters)


@dataclass
class Outgoing:
    dst: str
    msg: object


class PmNode:
    """Untrusted host shell around a ``TrustedCore``; one per manager.

    ``fault_bound`` is f, the assumed maximum number of faulty managers;
    eager push fans out to f+1 random peers and quarantine waits for
    reports from N-f distinct managers (itself included).
    """

    def __init__(self, node_id: str, core: TrustedCore, peers: list[str],
                 fault_bound: int, rng: random.Random,
                 gossip_timeout: int = 5_000_000):
        self.node_id = node_id
        self.core = core
        self.peers = [p for p in peers if p != node_id]
        self.fault_bound = fault_bound
        self.rng = rng
        self.gossip_timeout = gossip_timeout
        self.mode = PmMode.SERVING
        self._reports: dict[int, set[str]] = {}  # from_epoch -> senders seen
        self._orders: dict[tuple, RevocationOrder] = {}  # relayed admin orders
        self.stats = {"pushes": 0, "pulls": 0, "forwards": 0}

    @property
    def cluster_size(self) -> int:
        return len(self.peers) + 1

    # -- client-facing ----------------------------------------------------

    def handle_request(self, req: RequestRrp) -> RrpResponse:
        try:
            rrps = self.core.issue(req, quarantined=self.mode is PmMode.QUARANTINE)
        except IssuanceDenied as denied:
            return RrpResponse(False, denied.reason, req.epoch_id)
        return RrpResponse(True, DenialReason.NONE, req.epoch_id,
                           tuple((r.instance, r.endorsement) for r in rrps))

    # -- revocation and gossip --------------------------------------------

    def handle_revoke(self, order: RevocationOrder) -> list[Outgoing]:
        key = (order.cid, order.rts, order.epoch_id)
        if key in self._orders:
            return []
        if not self.core.note_expulsion(order):
            log.warning("%s: revocation order rejected: bad signature",
                        self.node_id)
            return []
        # Relay the order itself alongside the filters: it is admin-signed,
        # so peers that never served this client still learn the expulsion
        # and keep denying it after both filter epochs have been discarded.
        self._orders[key] = order
        fanout = min(self.fault_bound + 1, len(self.peers))
        relays = [Outgoing(p, order) for p in self.rng.sample(self.peers, fanout)]
        try:
            self.core.revoke(order)
        except ValueError as exc:
            # typically an order from an epoch this node already left behind:
            # the expulsion still stands, only the filters stay unchanged
            log.warning("%s: filters unchanged: %s", self.node_id, exc)
            return relays
        return self.eager_push() + relays

    def eager_push(self) -> list[Outgoing]:
        """Send both filters to f+1 distinct random peers."""
        fanout = min(self.fault_bound + 1, len(self.peers))
        targets = self.rng.sample(self.peers, fanout)
        self.stats["pushes"] += len(targets)
        push = ErcPush(self.core.erc_current, self.core.erc_next)
        return [Outgoing(t, push) for t in targets]

    def handle_ercsets(self, current: ErcSet, nxt: ErcSet) -> list[Outgoing]:
        """Push/pull-response handler: discard if redundant, else merge and
        re-push to another f+1 random peers."""
        try:
            changed = self.core.merge_filters(current, nxt)
        except ValueError as exc:
            log.warning("%s: dropping incompatible filters: %s", self.node_id, exc)
            return []
        if not changed:
            return []
        out = self.eager_push()
        self.stats["forwards"] += len(out)
        return out

    def handle_pull_request(self, requester: str) -> list[Outgoing]:
        out = [Outgoing(requester,
                        ErcPullResp(self.core.erc_current, self.core.erc_next))]
        if requester in self.peers:
            # peer managers also get the remembered orders so a recovering
            # node rebuilds its revoked-client set, not just its filter
            # bits; verifiers never do (orders name clients, filters don't)
            out += [Outgoing(requester, order) for order in self._orders.values()]
        return out

    def on_gossip_timeout(self) -> list[Outgoing]:
        """No recent updates: pull from one random peer."""
        if not self.peers:
            return []
        self.stats["pulls"] += 1
        return [Outgoing(self.rng.choice(self.peers),
                         ErcPullReq(self.core.epoch_now))]

    # -- epoch transition -------------------------------------------------

    def on_clock(self, now: int) -> list[Outgoing]:
        """Enter quarantine when the local clock crosses an epoch boundary."""
        local_epoch = now // self.core.geometry.epoch_len
        if local_epoch > self.core.epoch_now and self.mode is PmMode.SERVING:
            return self.begin_transition()
        return []

    def begin_transition(self) -> list[Outgoing]:
        self.mode = PmMode.QUARANTINE
        self._reports.setdefault(self.core.epoch_now, set()).add(self.node_id)
        report = EpochReport(self.core.epoch_now, self.core.erc_current,
                             self.core.erc_next)
        out = [Outgoing(p, report) for p in self.peers]
        out += self._maybe_finish_quarantine()
        return out

    def handle_epoch_report(self, sender: str, report: EpochReport) -> list[Outgoing]:
        try:
            self.core.merge_filters(report.current, report.next)
        except ValueError as exc:
            log.warning("%s: dropping incompatible epoch report: %s",
                        self.node_id, exc)
            return []
        self._reports.setdefault(report.from_epoch, set()).add(sender)
        out = self._maybe_finish_quarantine()
        if (report.from_epoch < self.core.epoch_now
                and report.current.epoch_id == report.from_epoch):
            # sender is a laggard catching up after a crash (its live filter
            # still belongs to the old epoch): echo a report for that epoch
            # so it can assemble a quorum long after everyone moved on.
            # Echoes carry a newer filter, so they are never echoed back.
            echo = EpochReport(report.from_epoch, self.core.erc_current,
                               self.core.erc_next)
            out.append(Outgoing(sender, echo))
        return out

    def _maybe_finish_quarantine(self) -> list[Outgoing]:
        if self.mode is not PmMode.QUARANTINE:
            return []
        quorum = self.cluster_size - self.fault_bound
        seen = self._reports.get(self.core.epoch_now, set())
        if len(seen) < quorum:
            return []
        self._reports.pop(self.core.epoch_now, None)
        self.core.rotate_epoch()
        self.mode = PmMode.SERVING
        return []
