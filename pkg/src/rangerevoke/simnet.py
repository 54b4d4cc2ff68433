"""Deterministic discrete-event simulation of the whole system.

One seeded event loop drives manager nodes, verifiers, clients and the
administrator under partial synchrony: bounded message delay in stable
windows, arbitrary delay in unstable ones, per-node clock skew, scripted
crash/recovery of managers.  Identical (config, seed) pairs reproduce
byte-identical reports.

Time is integer microseconds.  Messages between nodes are round-tripped
through the wire codec on delivery, so every run also exercises the
serialization formats end to end (skipped only for exact-set filters,
which have no wire form).

The module also hosts the synthetic workload generator and the linkage
adversary that post-processes a run's verifier transcripts.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from dataclasses import dataclass, field

from . import codec
from .crypto import det_keygen, det_sign, seed_from_parts
from .ercset import BloomFilter, ErcSet, FilterParams
from .manager import PmMode, PmNode, TrustedCore
from .messages import (
    EpochReport,
    ErcPullReq,
    ErcPullResp,
    ErcPush,
    RequestRrp,
    RevocationOrder,
    RrpResponse,
)
from .pseudonym import Capability, Rrp, create_rrp, get_capability
from .slot_tree import EpochConfig
from .verifier import Decision, VerifierNode

MICRO = 1_000_000


@dataclass(frozen=True)
class Window:
    start: int
    end: int

    def __contains__(self, t: int) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class CrashWindow:
    node: str
    start: int
    end: int


@dataclass(frozen=True)
class Action:
    """Scripted workload step; ``kind`` is one of
    register | request | authenticate | revoke | clock_jump."""

    at: int
    kind: str
    args: dict = field(default_factory=dict)


@dataclass
class SimConfig:
    seed: int = 0
    n_pms: int = 4
    fault_bound: int = 1
    n_verifiers: int = 1
    n_clients: int = 1
    epoch_len: int = 60 * MICRO
    delta: int = 15 * MICRO
    fanout: int = 2
    delta_net: int = 100_000          # max delay in stable windows
    epsilon: int = 0                  # max clock skew
    unstable: tuple[Window, ...] = ()
    crashes: tuple[CrashWindow, ...] = ()
    script: tuple[Action, ...] = ()
    horizon: int = 2 * 60 * MICRO
    gossip_timeout: int = 5 * MICRO
    pull_period: int = 5 * MICRO
    filter_m: int = 8192
    filter_k: int = 4
    max_instances: int = 8
    exact_filters: bool = False
    event_budget: int = 200_000

    def geometry(self) -> EpochConfig:
        return EpochConfig(0, self.epoch_len, self.delta, self.fanout)


@dataclass(frozen=True)
class IssuanceRecord:
    at: int
    pm: str
    client: int
    epoch_id: int
    granted: bool
    reason: str
    count: int


@dataclass(frozen=True)
class AuthRecord:
    at: int
    verifier: str
    client: int
    slot: int
    epoch_id: int
    decision: str
    pseudonym_pub: bytes


@dataclass
class SimReport:
    """Everything observable after a run, in deterministic order."""

    seed: int
    horizon: int
    events_processed: int
    pm_state: list[tuple[str, int, str, str, str]]  # id, epoch, mode, cur, next
    verifier_state: list[tuple[str, str, str]]      # id, mode, filter digest
    issuance: list[IssuanceRecord]
    auths: list[AuthRecord]
    revocations: list[tuple[int, int, int]]         # at, client, rts
    revocation_latency: list[tuple[int, int]]       # client, latency (µs, -1 if never denied)
    messages: dict[str, int]

    def as_text(self) -> str:
        lines = [f"seed={self.seed} horizon={self.horizon} events={self.events_processed}"]
        lines.append("[managers]")
        for node, epoch, mode, cur, nxt in self.pm_state:
            lines.append(f"{node}\tepoch={epoch}\tmode={mode}\tcurrent={cur}\tnext={nxt}")
        lines.append("[verifiers]")
        for node, mode, digest_hex in self.verifier_state:
            lines.append(f"{node}\tmode={mode}\tfilter={digest_hex}")
        lines.append("[issuance]")
        for r in self.issuance:
            lines.append(f"{r.at}\t{r.pm}\tclient{r.client}\tepoch={r.epoch_id}\t"
                         f"granted={int(r.granted)}\treason={r.reason}\tcount={r.count}")
        lines.append("[authentications]")
        for a in self.auths:
            lines.append(f"{a.at}\t{a.verifier}\tclient{a.client}\tslot={a.slot}\t"
                         f"epoch={a.epoch_id}\t{a.decision}\t{a.pseudonym_pub.hex()}")
        lines.append("[revocations]")
        for at, client, rts in self.revocations:
            lines.append(f"{at}\tclient{client}\trts={rts}")
        lines.append("[revocation-latency]")
        for client, latency in self.revocation_latency:
            lines.append(f"client{client}\t{latency}")
        lines.append("[messages]")
        for key in sorted(self.messages):
            lines.append(f"{key}\t{self.messages[key]}")
        return "\n".join(lines) + "\n"

    def auth_csv(self) -> str:
        rows = ["at,verifier,client,slot,epoch,decision"]
        rows += [f"{a.at},{a.verifier},{a.client},{a.slot},{a.epoch_id},{a.decision}"
                 for a in self.auths]
        return "\n".join(rows) + "\n"


def _filter_digest(erc: ErcSet | None) -> str:
    if erc is None:
        return "-"
    flt = erc.filter
    if isinstance(flt, BloomFilter):
        material = bytes(flt.bits)
    else:
        material = b"".join(sorted(flt.items))
    return hashlib.sha256(material).hexdigest()[:16]


class _Client:
    """Client-side state: secret id and the unused pseudonyms per epoch."""

    def __init__(self, index: int, cid: bytes):
        self.index = index
        self.cid = cid
        self.unused: dict[int, list[Rrp]] = {}
        self.last_proof: tuple[Capability, int] | None = None

    def take(self, epoch_id: int) -> Rrp | None:
        pool = self.unused.get(epoch_id)
        return pool.pop(0) if pool else None


class Simulation:
    """One deterministic run; build, then call ``run()``."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.now = 0
        self._seq = itertools.count()
        self._queue: list = []
        self.events_processed = 0
        self.messages: dict[str, int] = {}

        geometry = cfg.geometry()
        self.geometry = geometry
        params = FilterParams(cfg.filter_m, cfg.filter_k)
        self.params = params

        self.admin_key = det_keygen(seed_from_parts(b"admin", cfg.seed))
        self.pm_key = det_keygen(seed_from_parts(b"manager", cfg.seed))

        pm_ids = [f"pm{i}" for i in range(cfg.n_pms)]
        self.pms: dict[str, PmNode] = {}
        for node_id in pm_ids:
            core = TrustedCore(self.pm_key, self.admin_key.public, geometry,
                               params, cfg.max_instances,
                               exact_filters=cfg.exact_filters)
            self.pms[node_id] = PmNode(
                node_id, core, pm_ids, cfg.fault_bound,
                random.Random(self.rng.getrandbits(64)),
                gossip_timeout=cfg.gossip_timeout)

        self.verifiers: dict[str, VerifierNode] = {}
        for i in range(cfg.n_verifiers):
            node_id = f"v{i}"
            self.verifiers[node_id] = VerifierNode(
                node_id, self.pm_key.public, geometry, pm_ids,
                random.Random(self.rng.getrandbits(64)),
                pull_period=cfg.pull_period, epsilon=cfg.epsilon)

        self.clients = [
            _Client(i, seed_from_parts(b"client", cfg.seed, i))
            for i in range(cfg.n_clients)
        ]
        for client in self.clients:
            for pm in self.pms.values():
                pm.core.register(client.cid)

        self.clock_offset: dict[str, int] = {}
        all_ids = pm_ids + list(self.verifiers)
        for node_id in all_ids:
            self.clock_offset[node_id] = (
                self.rng.randint(-cfg.epsilon, cfg.epsilon) if cfg.epsilon else 0)

        self._last_update: dict[str, int] = {p: 0 for p in pm_ids}
        self.issuance: list[IssuanceRecord] = []
        self.auths: list[AuthRecord] = []
        self.revocations: list[tuple[int, int, int]] = []
        self.presented: list[tuple[int, Capability]] = []  # (client, capability)
        self.pub_owner: dict[bytes, int] = {}

        for action in cfg.script:
            self._schedule(action.at, ("action", action))
        for pm_id in pm_ids:
            self._schedule(cfg.gossip_timeout, ("pm_timer", pm_id))
            self._schedule(self._next_boundary(0), ("clock", pm_id))
        for v_id in self.verifiers:
            self._schedule(1, ("verifier_pull", v_id))
        for crash in cfg.crashes:
            # recovering managers immediately pull-gossip
            self._schedule(crash.end, ("recover", crash.node))

    # -- plumbing ---------------------------------------------------------

    def _next_boundary(self, t: int) -> int:
        return (t // self.cfg.epoch_len + 1) * self.cfg.epoch_len + 1

    def _schedule(self, at: int, item) -> None:
        heapq.heappush(self._queue, (at, next(self._seq), item))

    def _crashed(self, node: str, t: int) -> bool:
        return any(c.node == node and c.start <= t < c.end for c in self.cfg.crashes)

    def _delay(self) -> int:
        base = self.rng.randint(1, self.cfg.delta_net)
        deliver_at = self.now + base
        for w in self.cfg.unstable:
            if deliver_at in w or self.now in w:
                # unstable window: hold the message until stability returns
                deliver_at = w.end + self.rng.randint(1, self.cfg.delta_net)
        return deliver_at - self.now

    def _send(self, src: str, dst: str, msg) -> None:
        if self._crashed(src, self.now):
            return
        self.messages[type(msg).__name__] = self.messages.get(type(msg).__name__, 0) + 1
        if not self.cfg.exact_filters:
            msg = codec.decode_message(codec.encode_message(msg))  # wire round-trip
        self._schedule(self.now + self._delay(), ("deliver", src, dst, msg))

    def _emit(self, src: str, outgoing) -> None:
        for out in outgoing:
            self._send(src, out.dst, out.msg)

    def local_time(self, node: str) -> int:
        return self.now + self.clock_offset.get(node, 0)

    # -- event handlers ---------------------------------------------------

    def run(self) -> SimReport:
        while self._queue:
            at, _, item = heapq.heappop(self._queue)
            if at > self.cfg.horizon:
                break
            self.now = at
            self.events_processed += 1
            if self.events_processed > self.cfg.event_budget:
                raise RuntimeError("event budget exceeded; divergent schedule")
            kind = item[0]
            if kind == "deliver":
                self._on_deliver(item[1], item[2], item[3])
            elif kind == "action":
                self._on_action(item[1])
            elif kind == "pm_timer":
                self._on_pm_timer(item[1])
            elif kind == "verifier_pull":
                self._on_verifier_pull(item[1])
            elif kind == "clock":
                self._on_clock(item[1])
            elif kind == "recover":
                self._on_recover(item[1])
        return self._report()

    def _on_deliver(self, src: str, dst: str, msg) -> None:
        if self._crashed(dst, self.now):
            return
        if dst in self.pms:
            pm = self.pms[dst]
            if isinstance(msg, (ErcPush, ErcPullResp)):
                self._last_update[dst] = self.now
                self._emit(dst, pm.handle_ercsets(msg.current, msg.next))
            elif isinstance(msg, ErcPullReq):
                self._emit(dst, pm.handle_pull_request(src))
            elif isinstance(msg, RevocationOrder):
                self._emit(dst, pm.handle_revoke(msg))
            elif isinstance(msg, EpochReport):
                self._last_update[dst] = self.now
                self._emit(dst, pm.handle_epoch_report(src, msg))
            elif isinstance(msg, RequestRrp):
                resp = pm.handle_request(msg)
                client = self._client_by_cid(msg.cid)
                self.issuance.append(IssuanceRecord(
                    self.now, dst, client.index, msg.epoch_id, resp.granted,
                    "-" if resp.granted else resp.reason.name.lower(),
                    len(resp.endorsements)))
                self._send(dst, f"client{client.index}", resp)
        elif dst in self.verifiers:
            v = self.verifiers[dst]
            if isinstance(msg, ErcPullResp):
                v.handle_pull_response(msg, self.local_time(dst))
        elif dst.startswith("client"):
            client = self.clients[int(dst.removeprefix("client"))]
            if isinstance(msg, RrpResponse) and msg.granted:
                pool = client.unused.setdefault(msg.epoch_id, [])
                for instance, endorsement in msg.endorsements:
                    rrp = create_rrp(client.cid, msg.epoch_id, instance,
                                     self.pm_key, self.cfg.max_instances)
                    assert rrp.endorsement == endorsement
                    pool.append(rrp)
                    self.pub_owner[rrp.keypair.public] = client.index

    def _on_pm_timer(self, pm_id: str) -> None:
        self._schedule(self.now + self.cfg.gossip_timeout, ("pm_timer", pm_id))
        if self._crashed(pm_id, self.now):
            return
        if self.now - self._last_update[pm_id] >= self.cfg.gossip_timeout:
            self._emit(pm_id, self.pms[pm_id].on_gossip_timeout())

    def _on_verifier_pull(self, v_id: str) -> None:
        self._schedule(self.now + self.cfg.pull_period, ("verifier_pull", v_id))
        v = self.verifiers[v_id]
        target, req = v.make_pull(self.local_time(v_id))
        self._send(v_id, target, req)

    def _on_clock(self, pm_id: str) -> None:
        self._schedule(self._next_boundary(self.now), ("clock", pm_id))
        if self._crashed(pm_id, self.now):
            return
        self._emit(pm_id, self.pms[pm_id].on_clock(self.local_time(pm_id)))

    def _on_recover(self, pm_id: str) -> None:
        pm = self.pms[pm_id]
        self._emit(pm_id, pm.on_clock(self.local_time(pm_id)))  # missed boundary?
        self._emit(pm_id, pm.on_gossip_timeout())

    # -- scripted workload ------------------------------------------------

    def _client_by_cid(self, cid: bytes) -> _Client:
        for c in self.clients:
            if c.cid == cid:
                return c
        raise KeyError("unknown cid")

    def _on_action(self, action: Action) -> None:
        args = action.args
        if action.kind == "request":
            client = self.clients[args["client"]]
            epoch_id = args.get("epoch", self.now // self.cfg.epoch_len)
            proof, proof_slot = client.last_proof or (None, None)
            req = RequestRrp(client.cid, epoch_id, args.get("count", 4),
                             proof, proof_slot)
            pm = args.get("pm") or self.rng.choice(sorted(self.pms))
            self._send(f"client{client.index}", pm, req)
        elif action.kind == "authenticate":
            client = self.clients[args["client"]]
            v_id = args.get("verifier", "v0")
            v = self.verifiers[v_id]
            epoch_id = self.now // self.cfg.epoch_len
            slot = (self.now % self.cfg.epoch_len) // self.cfg.delta
            rrp = client.take(epoch_id)
            if rrp is None:
                return
            cap = get_capability(rrp, slot, self.geometry.with_epoch(epoch_id))
            client.last_proof = (cap, slot)
            decision = v.authenticate(cap, self.local_time(v_id))
            self.presented.append((client.index, cap))
            self.auths.append(AuthRecord(self.now, v_id, client.index, slot,
                                         epoch_id, decision.value,
                                         cap.pseudonym_pub))
        elif action.kind == "revoke":
            client = self.clients[args["client"]]
            epoch_id = args.get("epoch", self.now // self.cfg.epoch_len)
            rts = args.get("rts", (self.now % self.cfg.epoch_len) // self.cfg.delta)
            order = RevocationOrder(
                client.cid, rts, epoch_id,
                det_sign(self.admin_key,
                         client.cid + rts.to_bytes(8, "big") + epoch_id.to_bytes(8, "big")))
            self.revocations.append((self.now, client.index, rts))
            central = args.get("pm", "pm0")
            self._send("admin", central, order)
        elif action.kind == "clock_jump":
            self.clock_offset[args["node"]] = \
                self.clock_offset.get(args["node"], 0) + args["by"]
        elif action.kind != "register":
            raise ValueError(f"unknown action kind {action.kind!r}")

    # -- reporting --------------------------------------------------------

    def correct_pms(self) -> list[str]:
        crashed_ever = {c.node for c in self.cfg.crashes if c.end > self.cfg.horizon}
        return [p for p in sorted(self.pms) if p not in crashed_ever]

    def _report(self) -> SimReport:
        pm_state = []
        for node_id in sorted(self.pms):
            pm = self.pms[node_id]
            pm_state.append((node_id, pm.core.epoch_now, pm.mode.value,
                             _filter_digest(pm.core.erc_current),
                             _filter_digest(pm.core.erc_next)))
        verifier_state = []
        for v_id in sorted(self.verifiers):
            v = self.verifiers[v_id]
            mode = "safe" if v.is_stale(self.local_time(v_id)) else "serving"
            verifier_state.append((v_id, mode, _filter_digest(v.erc_local)))
        latency = []
        for at, client_idx, _rts in self.revocations:
            denied = [a.at for a in self.auths
                      if a.client == client_idx and a.decision == "revoked"
                      and a.at >= at]
            latency.append((client_idx, min(denied) - at if denied else -1))
        return SimReport(
            seed=self.cfg.seed, horizon=self.cfg.horizon,
            events_processed=self.events_processed,
            pm_state=pm_state, verifier_state=verifier_state,
            issuance=self.issuance, auths=self.auths,
            revocations=self.revocations, revocation_latency=latency,
            messages=self.messages,
        )


def run_scenario(cfg: SimConfig) -> SimReport:
    return Simulation(cfg).run()


# -- linkage adversary -----------------------------------------------------

@dataclass(frozen=True)
class LinkageStats:
    """What a transcript-collecting adversary can and cannot conclude."""

    presented: int
    linked_pairs: int           # pairs sharing any token (key or latchkey bytes)
    same_client_pairs: int      # ground truth
    linked_and_same_client: int
    revoked_prerts_hits: int    # revoked client's pre-revocation latchkeys in filter
    revoked_prerts_probes: int
    random_hits: int            # fresh random strings against the same filter
    random_probes: int


def linkage_adversary(sim: Simulation, revoked_client: int | None = None,
                      rts: int | None = None,
                      random_probes: int = 10_000) -> LinkageStats:
    """Pairwise linking over all presented capabilities plus the
    backward-unlinkability probe: do the revoked client's pre-revocation
    latchkeys hit the published filter more often than random strings?"""
    caps = sim.presented
    linked = same = both = 0
    for (ca_client, ca), (cb_client, cb) in itertools.combinations(caps, 2):
        tokens_a = {ca.pseudonym_pub} | {lk.sig for lk in ca.latchkeys}
        tokens_b = {cb.pseudonym_pub} | {lk.sig for lk in cb.latchkeys}
        is_linked = bool(tokens_a & tokens_b)
        is_same = ca_client == cb_client
        linked += is_linked
        same += is_same
        both += is_linked and is_same
    pre_hits = pre_probes = rnd_hits = 0
    if revoked_client is not None and rts is not None and rts > 0:
        erc = next(iter(sim.pms.values())).core.erc_current
        client = sim.clients[revoked_client]
        epoch = erc.epoch_id
        cfg = sim.geometry.with_epoch(epoch)
        seen: set[bytes] = set()
        for instance in range(1, sim.cfg.max_instances + 1):
            rrp = create_rrp(client.cid, epoch, instance, sim.pm_key,
                             sim.cfg.max_instances)
            for slot in range(rts):
                for lk in get_capability(rrp, slot, cfg).latchkeys:
                    seen.add(lk.sig)
        for sig in sorted(seen):
            pre_probes += 1
            pre_hits += erc.filter.query(sig)
        probe_rng = random.Random(sim.cfg.seed ^ 0x5EED)
        for _ in range(random_probes):
            rnd_hits += erc.filter.query(probe_rng.randbytes(64))
    return LinkageStats(
        presented=len(caps), linked_pairs=linked, same_client_pairs=same,
        linked_and_same_client=both,
        revoked_prerts_hits=pre_hits, revoked_prerts_probes=pre_probes,
        random_hits=rnd_hits, random_probes=random_probes,
    )


# -- synthetic workload ----------------------------------------------------

@dataclass(frozen=True)
class TraceEvent:
    at: int
    client: int


@dataclass(frozen=True)
class Trace:
    events: tuple[TraceEvent, ...]

    def demand_per_client(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for ev in self.events:
            out[ev.client] = out.get(ev.client, 0) + 1
        return out

    def max_demand(self) -> int:
        demand = self.demand_per_client()
        return max(demand.values()) if demand else 0


def generate_trace(fleet: int, trips_per_client: int,
                   changes_per_trip: float, epoch_len: int,
                   seed: int = 0, max_client_demand: int | None = None) -> Trace:
    """Synthetic access trace: each pseudonym-change event is one access.

    Trip lengths are heavy-tailed (Pareto), so a few clients need far more
    pseudonyms per epoch than the median.  ``max_client_demand`` scales the
    heaviest client to a target daily demand.
    """
    rng = random.Random(seed)
    events: list[TraceEvent] = []
    per_client: list[int] = []
    for client in range(fleet):
        n = 0
        for _ in range(trips_per_client):
            # pareto(2.5) has mean ~1.7; scale to the requested average
            length = changes_per_trip * rng.paretovariate(2.5) / 1.7
            n += max(1, round(length))
        per_client.append(n)
    if max_client_demand is not None and per_client:
        heaviest = max(per_client)
        idx = per_client.index(heaviest)
        per_client[idx] = max_client_demand
    for client, n in enumerate(per_client):
        for _ in range(n):
            events.append(TraceEvent(rng.randrange(epoch_len), client))
    events.sort(key=lambda e: (e.at, e.client))
    return Trace(tuple(events))
