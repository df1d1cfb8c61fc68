"""Discrete-event epidemic-routing simulator.

Two forwarding policies share one engine:

``sir``
    Plain flooding. A holder sends to every in-range node lacking the copy
    without asking whether the receiver can keep it; a receiver with a full
    buffer discards the arriving copy and stays susceptible.

``ciser``
    Resource-aware forwarding. A fresh holder (I) decides once, at its first
    forwarding opportunity, to become a carrier (C) with probability ``rho``
    or to stop propagating (R). Before sending, the receiver's free buffer
    and energy are checked; a receiver that cannot take the copy becomes
    exposed (E) and is offered the copy again on later contacts.

Both policies deliver to a destination on contact, and a node that delivers
a message recovers (R) and releases its copy. Contacts are sampled every
``scan_interval`` seconds; transfers take ``size / tx_speed`` seconds and are
discarded if the link is gone when they would complete.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..metrics import CensusRow
from ..traces import TraceDataset, TraceReplay
from .config import SimConfig, config_hash

log = logging.getLogger(__name__)

RWP_OMEGA = 1.3683

COMPARTMENTS = "SEICR"
_RANK = {c: k for k, c in enumerate(COMPARTMENTS)}

# event kinds, in tie-break order at equal times
TRANSFER_COMPLETE = 0
TTL_EXPIRY = 1
WAYPOINT_ARRIVAL = 2
MESSAGE_CREATION = 3
SCAN_TICK = 4
SIM_END = 5

# substream keys for the seed sequence
_STREAM_TRAFFIC = 0
_STREAM_MOBILITY = 1
_STREAM_BRANCH = 2
_STREAM_CHANNEL = 3


class TransferAborted(RuntimeError):
    """A transfer lost its link before completing. Logged, never raised out of a run."""


def contact_rate_rwp(area_side: float, tx_range: float, mean_rel_speed: float) -> float:
    """Pairwise contact rate 2*w*r*E[V]/A^2 for random-waypoint mobility (w = 1.3683)."""
    return 2.0 * RWP_OMEGA * tx_range * mean_rel_speed / area_side**2


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream derived from ``seed`` and a spawn key."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class Leg:
    waypoint: tuple[float, float]
    speed: float
    pause: float


def rwp_next_leg(config: SimConfig, rng: np.random.Generator) -> Leg:
    """Draw the next random-waypoint leg. Draw order: x, y, speed, pause."""
    w, h = config.area
    x = rng.uniform(0.0, w)
    y = rng.uniform(0.0, h)
    lo, hi = config.node_speed
    speed = lo if lo == hi else rng.uniform(lo, hi)
    plo, phi = config.wait_time
    pause = plo if plo == phi else rng.uniform(plo, phi)
    return Leg((float(x), float(y)), float(speed), float(pause))


@dataclass
class Message:
    id: int
    source: int
    destination: int | None
    size: int
    created_at: float
    ttl_expiry: float
    delivered_at: float | None = None
    relays: int = 0


@dataclass
class Transfer:
    id: int
    sender: int
    receiver: int
    msg_id: int
    start: float
    end: float
    stores: bool


@dataclass
class NodeState:
    id: int
    energy: float
    alive: bool = True
    buffer: dict[int, int] = field(default_factory=dict)
    used: int = 0
    reserved: int = 0
    busy: int | None = None
    compartments: dict[int, str] = field(default_factory=dict)
    peak_used: int = 0

    def compartment(self, msg_id: int) -> str:
        return self.compartments.get(msg_id, "S")

    def free(self, capacity: int) -> int:
        return capacity - self.used - self.reserved


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    config_hash: str
    created: int
    delivered: int
    relayed: int
    relayed_non_destination: int
    direct_deliveries: int
    discarded_on_arrival: int
    aborted: int
    messages: tuple[Message, ...]
    relay_times: tuple[float, ...]
    census_times: tuple[float, ...]
    census: tuple[CensusRow, ...]
    dead_series: tuple[tuple[float, int], ...]
    final_energy: tuple[float, ...]
    peak_buffer: tuple[int, ...]
    transitions: dict[tuple[str, str], int]
    events: tuple[tuple[float, str, int, int, int], ...] | None = None

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def policy(self) -> str:
        return self.config.policy

    def deliveries(self, horizon: float | None = None) -> list[tuple[float, float]]:
        return [
            (m.created_at, m.delivered_at)
            for m in self.messages
            if m.delivered_at is not None and (horizon is None or m.delivered_at <= horizon)
        ]


class Simulator:
    """One run of one policy. Use :func:`run_simulation` for the common case."""

    def __init__(
        self,
        config: SimConfig,
        trace: TraceDataset | None = None,
        record_events: bool = False,
    ):
        self.cfg = config
        self.n = config.n_nodes
        self.now = 0.0
        self.nodes = [NodeState(id=k, energy=config.energy_initial) for k in range(self.n)]
        self.messages: list[Message] = []
        self.transfers: dict[int, Transfer] = {}
        self._heap: list[tuple] = []
        self._seq = 0
        self._transfer_seq = 0
        self._adj: list[list[int]] = [[] for _ in range(self.n)]
        self._events: list[tuple[float, str, int, int, int]] | None = [] if record_events else None

        seed = config.seed
        self._traffic = substream(seed, _STREAM_TRAFFIC)
        self._channel = substream(seed, _STREAM_CHANNEL)
        self._mob_rng = [substream(seed, _STREAM_MOBILITY, k) for k in range(self.n)]
        self._branch_rng = [substream(seed, _STREAM_BRANCH, k) for k in range(self.n)]

        self.replay: TraceReplay | None = None
        if config.is_trace:
            if trace is None:
                raise ValueError("trace connectivity requires a dataset")
            if trace.n_nodes > self.n:
                raise ValueError(
                    f"trace has {trace.n_nodes} nodes but the scenario has {self.n}"
                )
            self.replay = TraceReplay(trace)

        self._origin = np.zeros((self.n, 2))
        self._target = np.zeros((self.n, 2))
        self._depart = np.zeros(self.n)
        self._speed = np.ones(self.n)
        self._dist = np.zeros(self.n)

        self.created = 0
        self.delivered = 0
        self.relayed = 0
        self.relayed_non_destination = 0
        self.direct_deliveries = 0
        self.discarded_on_arrival = 0
        self.aborted = 0
        self.relay_times: list[float] = []
        self.census_times: list[float] = []
        self.census: list[CensusRow] = []
        self.dead_series: list[tuple[float, int]] = []
        self.transitions: dict[tuple[str, str], int] = {}
        self.dead_count = 0

    # -- event plumbing -------------------------------------------------

    def _push(self, t: float, kind: int, node: int = -1, msg: int = -1, payload: object = None):
        self._seq += 1
        heapq.heappush(self._heap, (t, kind, node, msg, self._seq, payload))

    def _log(self, kind: str, a: int = -1, b: int = -1, msg: int = -1) -> None:
        if self._events is not None:
            self._events.append((self.now, kind, a, b, msg))

    # -- node state -----------------------------------------------------

    def _set_compartment(self, node: NodeState, msg_id: int, new: str) -> None:
        old = node.compartment(msg_id)
        if old == new:
            return
        if _RANK[new] <= _RANK[old]:
            raise RuntimeError(f"illegal transition {old}->{new} at node {node.id} msg {msg_id}")
        node.compartments[msg_id] = new
        key = (old, new)
        self.transitions[key] = self.transitions.get(key, 0) + 1

    def _store(self, node: NodeState, msg: Message) -> None:
        node.buffer[msg.id] = msg.size
        node.used += msg.size
        node.peak_used = max(node.peak_used, node.used + node.reserved)
        if node.used + node.reserved > self.cfg.buffer_capacity:
            raise RuntimeError(f"buffer overflow at node {node.id}")

    def _release(self, node: NodeState, msg_id: int) -> None:
        size = node.buffer.pop(msg_id, None)
        if size is not None:
            node.used -= size

    def _spend(self, node: NodeState, amount: float) -> None:
        if not node.alive or amount == 0:
            return
        node.energy -= amount
        if node.energy < self.cfg.energy_dead_threshold:
            self._kill(node)

    def _kill(self, node: NodeState) -> None:
        node.alive = False
        self.dead_count += 1
        self._log("dead", node.id)
        if node.busy is not None:
            self._abort(self.transfers[node.busy], "dead")
        for msg_id in list(node.buffer):
            self._release(node, msg_id)
        for other in self._adj[node.id]:
            self._adj[other] = [x for x in self._adj[other] if x != node.id]
        self._adj[node.id] = []

    # -- mobility -------------------------------------------------------

    def _start_leg(self, k: int, t: float) -> None:
        leg = rwp_next_leg(self.cfg, self._mob_rng[k])
        here = self._position(k, t)
        self._origin[k] = here
        self._target[k] = leg.waypoint
        self._depart[k] = t + leg.pause
        self._speed[k] = leg.speed
        d = math.hypot(leg.waypoint[0] - here[0], leg.waypoint[1] - here[1])
        self._dist[k] = d
        self._push(t + leg.pause + d / leg.speed, WAYPOINT_ARRIVAL, k)

    def _position(self, k: int, t: float) -> np.ndarray:
        d = self._dist[k]
        if d == 0.0:
            return self._target[k].copy()
        frac = min(max((t - self._depart[k]) * self._speed[k] / d, 0.0), 1.0)
        return self._origin[k] + (self._target[k] - self._origin[k]) * frac

    def positions(self, t: float) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(
                self._dist > 0, (t - self._depart) * self._speed / self._dist, 1.0
            )
        frac = np.clip(frac, 0.0, 1.0)[:, None]
        return self._origin + (self._target - self._origin) * frac

    def _linked(self, a: int, b: int, t: float) -> bool:
        if self.replay is not None:
            return self.replay.linked(a, b, t)
        pa, pb = self._position(a, t), self._position(b, t)
        return math.hypot(pa[0] - pb[0], pa[1] - pb[1]) <= self.cfg.tx_range

    # -- scanning -------------------------------------------------------

    def scan_tick(self, t: float) -> list[tuple[int, int]]:
        """Charge the scan cost and return the sorted contact pairs among alive nodes."""
        for node in self.nodes:
            self._spend(node, self.cfg.energy_scan)
        alive = np.array([node.alive for node in self.nodes])
        if self.replay is not None:
            pairs = [(a, b) for a, b in self.replay.links(t) if b < self.n and alive[a] and alive[b]]
        else:
            pos = self.positions(t)
            idx = np.nonzero(alive)[0]
            if idx.size < 2:
                pairs = []
            else:
                p = pos[idx]
                diff = p[:, None, :] - p[None, :, :]
                dist = np.sqrt((diff**2).sum(axis=2))
                ii, jj = np.nonzero(np.triu(dist <= self.cfg.tx_range, k=1))
                pairs = sorted(zip(idx[ii].tolist(), idx[jj].tolist()))
        if self.cfg.contact_miss > 0 and pairs:
            keep = self._channel.random(len(pairs)) >= self.cfg.contact_miss
            pairs = [pr for pr, ok in zip(pairs, keep) if ok]
        return pairs

    def _on_scan(self, t: float) -> None:
        pairs = self.scan_tick(t)
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in pairs:
            adj[a].append(b)
            adj[b].append(a)
        self._adj = adj
        linked = set(pairs)
        for tr in sorted(self.transfers.values(), key=lambda x: x.id):
            key = (min(tr.sender, tr.receiver), max(tr.sender, tr.receiver))
            if key not in linked:
                self._abort(tr, "range")
        for node in self.nodes:
            self._try_start(node.id, t)
        self._sample_census(t)

    def _sample_census(self, t: float) -> None:
        self.census_times.append(t)
        self.dead_series.append((t, self.dead_count))
        limit = min(self.cfg.tracked_messages, len(self.messages))
        alive = [node for node in self.nodes if node.alive]
        for msg_id in range(limit):
            counts = dict.fromkeys(COMPARTMENTS, 0)
            for node in alive:
                counts[node.compartment(msg_id)] += 1
            self.census.append(
                CensusRow(
                    t=t,
                    msg_id=msg_id,
                    s=counts["S"],
                    e=counts["E"],
                    i=counts["I"],
                    c=counts["C"],
                    r=counts["R"],
                    dead=self.dead_count,
                )
            )

    # -- forwarding -----------------------------------------------------

    def _forwarding(self, node: NodeState, msg_id: int) -> bool:
        comp = node.compartment(msg_id)
        if self.cfg.policy == "sir":
            return comp == "I"
        return comp in ("I", "C")

    def _try_start(self, a: int, t: float) -> bool:
        sender = self.nodes[a]
        if not sender.alive or sender.busy is not None or not sender.buffer:
            return False
        neighbours = sorted(self._adj[a])
        if not neighbours:
            return False
        # deliverable messages first, then relays
        for deliver_pass in (True, False):
            for b in neighbours:
                receiver = self.nodes[b]
                if not receiver.alive or receiver.busy is not None:
                    continue
                for msg_id in sorted(sender.buffer):
                    msg = self.messages[msg_id]
                    if (msg.destination == b) != deliver_pass:
                        continue
                    if not self._forwarding(sender, msg_id):
                        continue
                    if receiver.compartment(msg_id) not in ("S", "E"):
                        continue
                    if not self._linked(a, b, t):
                        break
                    if self.on_contact(sender, receiver, msg, t):
                        return True
                    if not sender.alive or not sender.buffer:
                        return False
        return False

    def on_contact(self, a: NodeState, b: NodeState, msg: Message, t: float) -> bool:
        """Apply the policy to one (holder, neighbour, message) opportunity.

        Returns True when a transfer was started.
        """
        cfg = self.cfg
        to_destination = msg.destination == b.id
        if cfg.policy == "sir":
            stores = to_destination or b.free(cfg.buffer_capacity) >= msg.size
            self._begin_transfer(a, b, msg, t, stores)
            return True

        if not to_destination and a.compartment(msg.id) == "I":
            if self._branch_rng[a.id].random() < cfg.rho:
                self._set_compartment(a, msg.id, "C")
                self._log("carrier", a.id, -1, msg.id)
            else:
                self._set_compartment(a, msg.id, "R")
                self._release(a, msg.id)
                self._log("retire", a.id, -1, msg.id)
                return False
        if a.energy - cfg.energy_tx < cfg.energy_dead_threshold:
            return False
        room = to_destination or b.free(cfg.buffer_capacity) >= msg.size
        power = b.energy - cfg.energy_rx >= cfg.energy_dead_threshold
        if not (room and power):
            if b.compartment(msg.id) == "S":
                self._set_compartment(b, msg.id, "E")
                self._log("expose", a.id, b.id, msg.id)
            return False
        self._begin_transfer(a, b, msg, t, stores=True)
        return True

    def _begin_transfer(self, a: NodeState, b: NodeState, msg: Message, t: float, stores: bool):
        self._transfer_seq += 1
        tr = Transfer(
            id=self._transfer_seq,
            sender=a.id,
            receiver=b.id,
            msg_id=msg.id,
            start=t,
            end=t + msg.size / self.cfg.tx_speed,
            stores=stores,
        )
        self.transfers[tr.id] = tr
        a.busy = b.busy = tr.id
        if stores and msg.destination != b.id:
            b.reserved += msg.size
            b.peak_used = max(b.peak_used, b.used + b.reserved)
        self._log("start", a.id, b.id, msg.id)
        self._push(tr.end, TRANSFER_COMPLETE, a.id, msg.id, tr.id)

    def _finish_transfer(self, tr: Transfer) -> None:
        self.transfers.pop(tr.id, None)
        a, b = self.nodes[tr.sender], self.nodes[tr.receiver]
        if a.busy == tr.id:
            a.busy = None
        if b.busy == tr.id:
            b.busy = None
        msg = self.messages[tr.msg_id]
        if tr.stores and msg.destination != b.id:
            b.reserved -= msg.size

    def _abort(self, tr: Transfer, reason: str) -> None:
        self._finish_transfer(tr)
        self.aborted += 1
        self._log("abort", tr.sender, tr.receiver, tr.msg_id)
        log.debug("%s", TransferAborted(f"transfer {tr.id} aborted: {reason}"))

    def _on_transfer_complete(self, tid: int, t: float) -> None:
        tr = self.transfers.get(tid)
        if tr is None:
            return
        a, b = self.nodes[tr.sender], self.nodes[tr.receiver]
        if not (a.alive and b.alive) or not self._linked(a.id, b.id, t):
            self._abort(tr, "range")
            return
        self._finish_transfer(tr)
        msg = self.messages[tr.msg_id]
        self.relayed += 1
        msg.relays += 1
        self.relay_times.append(t)
        self._log("relay", a.id, b.id, msg.id)

        if msg.destination == b.id:
            if msg.delivered_at is None:
                msg.delivered_at = t
                self.delivered += 1
                if a.id == msg.source:
                    self.direct_deliveries += 1
                self._log("deliver", a.id, b.id, msg.id)
            self._set_compartment(b, msg.id, "R")
            # the delivering node recovers and frees its copy
            self._set_compartment(a, msg.id, "R")
            self._release(a, msg.id)
        else:
            self.relayed_non_destination += 1
            if tr.stores:
                self._store(b, msg)
                self._set_compartment(b, msg.id, "I")
            else:
                self.discarded_on_arrival += 1
                self._log("discard", a.id, b.id, msg.id)

        self._spend(a, self.cfg.energy_tx)
        self._spend(b, self.cfg.energy_rx)
        self._reschedule_around(a.id, b.id, t)

    def _reschedule_around(self, a: int, b: int, t: float) -> None:
        candidates = sorted({a, b, *self._adj[a], *self._adj[b]})
        for k in candidates:
            self._try_start(k, t)

    # -- traffic --------------------------------------------------------

    def _on_creation(self, t: float) -> None:
        rng = self._traffic
        lo, hi = self.cfg.message_interval
        gap = lo if lo == hi else float(rng.uniform(lo, hi))
        source = int(rng.integers(self.n))
        if self.n > 1:
            dest: int | None = int(rng.integers(self.n - 1))
            if dest >= source:
                dest += 1
        else:
            dest = None
        smin, smax = self.cfg.message_size
        size = int(rng.integers(smin, smax + 1))
        msg = Message(
            id=len(self.messages),
            source=source,
            destination=dest,
            size=size,
            created_at=t,
            ttl_expiry=t + self.cfg.ttl,
        )
        self.messages.append(msg)
        self.created += 1
        self._log("create", source, -1 if dest is None else dest, msg.id)
        node = self.nodes[source]
        if node.alive and node.free(self.cfg.buffer_capacity) >= size:
            self._store(node, msg)
            self._set_compartment(node, msg.id, "I")
            self._try_start(source, t)
        else:
            self._set_compartment(node, msg.id, "R")
            self._log("drop", source, -1, msg.id)
        self._push(msg.ttl_expiry, TTL_EXPIRY, source, msg.id)
        if t + gap <= self.cfg.sim_duration:
            self._push(t + gap, MESSAGE_CREATION)

    def _on_ttl_expiry(self, msg_id: int) -> None:
        for tr in sorted(self.transfers.values(), key=lambda x: x.id):
            if tr.msg_id == msg_id:
                self._abort(tr, "ttl")
        for node in self.nodes:
            comp = node.compartment(msg_id)
            if msg_id in node.buffer:
                self._release(node, msg_id)
                self._set_compartment(node, msg_id, "R")
            elif comp == "E":
                self._set_compartment(node, msg_id, "R")
        self._log("expire", -1, -1, msg_id)

    # -- main loop ------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.cfg
        if self.replay is None:
            for k in range(self.n):
                rng = self._mob_rng[k]
                w, h = cfg.area
                start = (float(rng.uniform(0.0, w)), float(rng.uniform(0.0, h)))
                self._origin[k] = start
                self._target[k] = start
                self._start_leg(k, 0.0)
        lo, hi = cfg.message_interval
        first = lo if lo == hi else float(self._traffic.uniform(lo, hi))
        if first <= cfg.sim_duration:
            self._push(first, MESSAGE_CREATION)
        self._push(0.0, SCAN_TICK, payload=0)
        self._push(cfg.sim_duration, SIM_END)

        handlers: dict[int, Callable[[tuple], None]] = {
            TRANSFER_COMPLETE: lambda ev: self._on_transfer_complete(ev[5], ev[0]),
            TTL_EXPIRY: lambda ev: self._on_ttl_expiry(ev[3]),
            WAYPOINT_ARRIVAL: lambda ev: self._on_waypoint(ev[2], ev[0]),
            MESSAGE_CREATION: lambda ev: self._on_creation(ev[0]),
            SCAN_TICK: lambda ev: self._on_scan_event(ev[5], ev[0]),
        }
        while self._heap:
            ev = heapq.heappop(self._heap)
            t, kind = ev[0], ev[1]
            if t > cfg.sim_duration or kind == SIM_END:
                break
            self.now = t
            handlers[kind](ev)
        self.now = cfg.sim_duration
        return self._result()

    def _on_waypoint(self, k: int, t: float) -> None:
        if self.nodes[k].alive:
            self._start_leg(k, t)

    def _on_scan_event(self, tick: int, t: float) -> None:
        self._on_scan(t)
        nxt = (tick + 1) * self.cfg.scan_interval
        if nxt <= self.cfg.sim_duration:
            self._push(nxt, SCAN_TICK, payload=tick + 1)

    def _result(self) -> SimResult:
        return SimResult(
            config=self.cfg,
            config_hash=config_hash(self.cfg),
            created=self.created,
            delivered=self.delivered,
            relayed=self.relayed,
            relayed_non_destination=self.relayed_non_destination,
            direct_deliveries=self.direct_deliveries,
            discarded_on_arrival=self.discarded_on_arrival,
            aborted=self.aborted,
            messages=tuple(self.messages),
            relay_times=tuple(self.relay_times),
            census_times=tuple(self.census_times),
            census=tuple(self.census),
            dead_series=tuple(self.dead_series),
            final_energy=tuple(n.energy for n in self.nodes),
            peak_buffer=tuple(n.peak_used for n in self.nodes),
            transitions=dict(self.transitions),
            events=tuple(self._events) if self._events is not None else None,
        )


def run_simulation(
    config: SimConfig,
    trace: TraceDataset | None = None,
    record_events: bool = False,
) -> SimResult:
    """Run one seeded simulation. Trace connectivity loads the file named in
    ``config.connectivity`` unless a dataset is passed in."""
    if config.is_trace and trace is None:
        from ..traces import parse_contact_trace

        with open(config.trace_path, encoding="utf-8") as fh:  # type: ignore[arg-type]
            trace = parse_contact_trace(fh, "csv", source=config.trace_path or "")
    return Simulator(config, trace=trace, record_events=record_events).run()
