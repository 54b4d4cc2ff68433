"""Time geometry: the d-ary tree over an epoch's time slots.

An epoch of length ``epoch_len`` is divided into ``T = ceil(epoch_len/delta)``
slots.  Slots are the leaves of a d-ary tree of height ``h = ceil(log_d T)``;
the root covers the whole epoch.  Node labels are a pure function of
(epoch_id, level, index) and carry no child material: this is deliberately
*not* a Merkle tree.

When T is not a power of the fanout the tree is built over ``fanout**h``
virtual leaves and leaves with index >= T simply do not exist.  A node may
stand in for a slot range only if *all of its real leaf descendants* fall in
the range; virtual leaves are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property


@dataclass(frozen=True)
class EpochConfig:
    """Public time geometry shared by every party.

    Equal configs produce identical trees and labels on all nodes, which is
    what makes independently computed covers and filters compatible.
    Durations are in seconds (any consistent unit works).
    """

    epoch_id: int
    epoch_len: int
    delta: int
    fanout: int = 2

    def __post_init__(self) -> None:
        if self.epoch_len <= 0 or self.delta <= 0:
            raise ValueError("epoch_len and delta must be positive")
        if self.delta > self.epoch_len:
            raise ValueError("slot length exceeds epoch length")
        if self.fanout < 2:
            raise ValueError("fanout must be >= 2")

    @cached_property
    def slots(self) -> int:
        """T: number of time slots in the epoch."""
        return -(-self.epoch_len // self.delta)

    @cached_property
    def height(self) -> int:
        """h = ceil(log_d T); leaves live at level h, the root at level 0."""
        h = 0
        while self.fanout**h < self.slots:
            h += 1
        return h

    def with_epoch(self, epoch_id: int) -> "EpochConfig":
        """Same geometry for another epoch."""
        return EpochConfig(epoch_id, self.epoch_len, self.delta, self.fanout)

    def real_nodes_at(self, level: int) -> int:
        """Number of existing (non-virtual) nodes at a level."""
        return -(-self.slots // self.fanout ** (self.height - level))


@dataclass(frozen=True, order=True)
class NodeLabel:
    """Position of a tree node: (epoch_id, level, index), root = (·, 0, 0)."""

    epoch_id: int
    level: int
    index: int

    @property
    def canonical_bytes(self) -> bytes:
        """Injective binary form, the exact message signed for a latchkey:
        epoch_id u64 BE || level u8 || index u64 BE."""
        return (
            self.epoch_id.to_bytes(8, "big")
            + self.level.to_bytes(1, "big")
            + self.index.to_bytes(8, "big")
        )

    def name(self, fanout: int = 2) -> str:
        """Human-readable label: root is "e", children append their digit,
        e.g. "e01" is the left child's right child."""
        digits = []
        idx = self.index
        for _ in range(self.level):
            digits.append(str(idx % fanout))
            idx //= fanout
        return "e" + "".join(reversed(digits))


@dataclass(frozen=True)
class SlotRange:
    """Inclusive range of slot indices within one epoch."""

    first: int
    last: int

    def __post_init__(self) -> None:
        if not 0 <= self.first <= self.last:
            raise ValueError(f"invalid slot range [{self.first}, {self.last}]")

    def __contains__(self, slot: int) -> bool:
        return self.first <= slot <= self.last


def tree_height(cfg: EpochConfig) -> int:
    return cfg.height


def path_to_root(cfg: EpochConfig, slot: int) -> list[NodeLabel]:
    """Labels from the slot's leaf up to the root (leaf first, root last)."""
    if not 0 <= slot < cfg.slots:
        raise ValueError(f"slot {slot} out of range for T={cfg.slots}")
    path = []
    idx = slot
    for level in range(cfg.height, -1, -1):
        path.append(NodeLabel(cfg.epoch_id, level, idx))
        idx //= cfg.fanout
    return path


def parent_label(cfg: EpochConfig, label: NodeLabel) -> NodeLabel | None:
    if label.level == 0:
        return None
    return NodeLabel(label.epoch_id, label.level - 1, label.index // cfg.fanout)


def _leaf_span(cfg: EpochConfig, label: NodeLabel) -> tuple[int, int]:
    """Real leaves under a node: [first, last] leaf indices, clamped to T."""
    width = cfg.fanout ** (cfg.height - label.level)
    first = label.index * width
    last = min(first + width - 1, cfg.slots - 1)
    return first, last


def labels_under(cfg: EpochConfig, label: NodeLabel) -> set[NodeLabel]:
    """All real descendant labels, the node itself included."""
    if not (0 <= label.level <= cfg.height):
        raise ValueError(f"level {label.level} out of range")
    if label.index >= cfg.real_nodes_at(label.level):
        raise ValueError(f"node {label} does not exist (virtual)")
    out = set()
    frontier = [label]
    while frontier:
        node = frontier.pop()
        out.add(node)
        if node.level < cfg.height:
            child_level = node.level + 1
            limit = cfg.real_nodes_at(child_level)
            for j in range(cfg.fanout):
                child = node.index * cfg.fanout + j
                if child < limit:
                    frontier.append(NodeLabel(cfg.epoch_id, child_level, child))
    return out


def leaves_under(cfg: EpochConfig, label: NodeLabel) -> range:
    """Slot indices of the real leaves below a node."""
    first, last = _leaf_span(cfg, label)
    return range(first, last + 1)


def safe_cover(cfg: EpochConfig, rng: SlotRange) -> set[NodeLabel]:
    """Minimal label set revoking exactly the slots in ``rng``.

    Every root-to-leaf path of an in-range slot meets the set; no path of an
    out-of-range slot does.  Built bottom-up: start from the range's leaves
    and replace a complete sibling group by its parent whenever every real
    leaf under that parent lies in the range.
    """
    if rng.last >= cfg.slots:
        raise ValueError(f"range end {rng.last} beyond T={cfg.slots}")
    current = {NodeLabel(cfg.epoch_id, cfg.height, s) for s in range(rng.first, rng.last + 1)}
    for level in range(cfg.height, 0, -1):
        at_level = {lb for lb in current if lb.level == level}
        by_parent: dict[int, list[NodeLabel]] = {}
        for lb in at_level:
            by_parent.setdefault(lb.index // cfg.fanout, []).append(lb)
        for parent_idx, group in by_parent.items():
            parent = NodeLabel(cfg.epoch_id, level - 1, parent_idx)
            first, last = _leaf_span(cfg, parent)
            if first in rng and last in rng:
                # all real leaves of the parent are revoked: collapse
                current -= set(group)
                current.add(parent)
    return current
