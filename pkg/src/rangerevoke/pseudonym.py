"""Pseudonym lifecycle: issuance, capability generation, verification.

A pseudonym is an epoch-bound credential: a key pair derived
deterministically from the secret client id, plus an endorsement signature
from the issuing manager.  A capability instantiates a pseudonym for one
time slot; it carries the pseudonym public key, the endorsement and one
latchkey (a deterministic signature over a tree-node label) for every node
on the slot's root-to-leaf path.

Determinism is the point: the manager can re-create any pseudonym it ever
issued from (cid, epoch, instance) alone, so it needs no per-pseudonym
storage.
"""

from __future__ import annotations

from dataclasses import dataclass

from .crypto import KeyPair, det_keygen, det_sign, seed_from_parts, ver_sign
from .slot_tree import EpochConfig, NodeLabel, path_to_root

CLIENT_ID_LEN = 32


@dataclass(frozen=True)
class Latchkey:
    """A (label, signature) pair binding one pseudonym to one tree node."""

    label: NodeLabel
    sig: bytes


@dataclass(frozen=True)
class Rrp:
    """Range-revocable pseudonym.

    ``cid`` and the private half of ``keypair`` are secrets shared only by
    the client and the manager; neither ever appears in a capability.
    """

    cid: bytes
    epoch_id: int
    instance: int
    keypair: KeyPair
    endorsement: bytes


@dataclass(frozen=True)
class Capability:
    """Slot-bound authentication token.

    ``latchkeys`` runs leaf first, root last; its length is tree height + 1.
    """

    epoch_id: int
    pseudonym_pub: bytes
    endorsement: bytes
    latchkeys: tuple[Latchkey, ...]

    @property
    def slot(self) -> int:
        """Slot index encoded by the leaf latchkey."""
        return self.latchkeys[0].label.index


def endorsement_message(epoch_id: int, public: bytes) -> bytes:
    """The exact bytes the manager signs: epoch_id u64 BE || public key."""
    return epoch_id.to_bytes(8, "big") + public


def pseudonym_keypair(cid: bytes, epoch_id: int, instance: int) -> KeyPair:
    """Key pair of pseudonym instance i: det_keygen(digest(cid, epoch, i))."""
    return det_keygen(seed_from_parts(cid, epoch_id, instance))


def create_rrp(cid: bytes, epoch_id: int, instance: int, pm_key: KeyPair,
               max_instances: int) -> Rrp:
    """Issue pseudonym instance ``instance`` of a client for an epoch.

    Pure and deterministic: identical inputs reproduce the identical
    pseudonym, endorsement included.
    """
    if len(cid) != CLIENT_ID_LEN:
        raise ValueError(f"cid must be {CLIENT_ID_LEN} bytes")
    if not 1 <= instance <= max_instances:
        raise ValueError(f"instance {instance} outside [1, {max_instances}]")
    keypair = pseudonym_keypair(cid, epoch_id, instance)
    endorsement = det_sign(pm_key, endorsement_message(epoch_id, keypair.public))
    return Rrp(cid, epoch_id, instance, keypair, endorsement)


def get_capability(rrp: Rrp, slot: int, cfg: EpochConfig) -> Capability:
    """Capability of ``rrp`` for one slot; latchkeys are generated on demand.

    Capabilities from the same pseudonym share latchkey bytes near the root
    (they are linkable by design); capabilities from different pseudonyms
    share nothing.
    """
    if rrp.epoch_id != cfg.epoch_id:
        raise ValueError(
            f"pseudonym epoch {rrp.epoch_id} does not match config epoch {cfg.epoch_id}")
    latchkeys = tuple(
        Latchkey(label, det_sign(rrp.keypair, label.canonical_bytes))
        for label in path_to_root(cfg, slot)
    )
    return Capability(rrp.epoch_id, rrp.keypair.public, rrp.endorsement, latchkeys)


def verify_capability(cap: Capability, pm_public: bytes, expected_slot: int,
                      cfg: EpochConfig) -> bool:
    """Genuineness check; revocation is a separate, later check.

    True iff the endorsement verifies under the manager key, the labels are
    exactly the expected slot's root-to-leaf path, and every latchkey
    verifies under the pseudonym key.  Any failure, malformed input
    included, yields False.  The per-latchkey checks are independent and may
    run in parallel.
    """
    try:
        expected_path = path_to_root(cfg, expected_slot)
    except ValueError:
        return False
    if cap.epoch_id != cfg.epoch_id:
        return False
    if [lk.label for lk in cap.latchkeys] != expected_path:
        return False
    if not ver_sign(pm_public, endorsement_message(cap.epoch_id, cap.pseudonym_pub),
                    cap.endorsement):
        return False
    return all(
        ver_sign(cap.pseudonym_pub, lk.label.canonical_bytes, lk.sig)
        for lk in cap.latchkeys
    )


def pseudonym_public_keys_of(cid: bytes, epoch_id: int, max_instances: int) -> list[bytes]:
    """Public keys of all pseudonym instances a client can hold in an epoch.

    Lets the manager recognize a presented capability as belonging to a
    known client without storing any per-pseudonym state.
    """
    return [
        pseudonym_keypair(cid, epoch_id, i).public
        for i in range(1, max_instances + 1)
    ]
