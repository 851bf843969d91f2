"""Slot-by-slot packet simulation of a TSCH network.

Every non-sink node generates one packet per data interval and forwards
everything it holds to its parent in the forwarding tree. In each timeslot
a node transmits if it owns a cell toward its parent and has a packet
queued. A transmission is received iff the receiver listens on that cell
and no other transmitter on the same physical channel is within
interference range of the receiver. Without retransmissions a failed
attempt loses the packet.

Energy is charged per radio event; a scheduled Rx cell in which nothing
arrives costs one idle listen. Reported mean power adds the always-on
baseline ``P_0`` so that it is comparable with the analytic model.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError
from .metrics import LPM_MA, SUPPLY_V, EnergyProfile, MetricsReport
from .netmodel import ForwardingTree, NetworkGraph, build_forwarding_tree
from .schedule import TschSchedule

DELIVERED, DROPPED, LOST, IN_FLIGHT = "delivered", "dropped", "lost", "in_flight"


@dataclass(frozen=True)
class SimConfig:
    duration_s: float = 60.0
    data_interval_s: float = 1.0
    packet_size: int = 12
    queue_capacity: int = 8
    retransmissions: int = 0
    phase: str = "random"  # "random": per-node offset, "aligned": everyone at t = 0
    seed: int = 0
    trace: bool = False

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ConfigurationError("duration must be positive")
        if not self.data_interval_s > 0:
            raise ConfigurationError("data interval must be positive")
        if self.queue_capacity < 1 or self.retransmissions < 0 or self.packet_size < 1:
            raise ConfigurationError("queue capacity and packet size must be positive")
        if self.phase not in ("random", "aligned"):
            raise ConfigurationError(f"unknown generation phase {self.phase!r}")


# --------------------------------------------------------------- schedulers


class CellScheduler:
    """Explicit cells ``(src, dst, channel offset)`` per timeslot offset."""

    name = "file"
    shared = False

    def __init__(self, slotframe_size: int, num_channels: int, cells_by_slot: dict):
        if slotframe_size < 1 or num_channels < 1:
            raise ConfigurationError("slotframe size and channel count must be positive")
        self.slotframe_size = slotframe_size
        self.num_channels = num_channels
        self._cells = [tuple(cells_by_slot.get(u, ())) for u in range(slotframe_size)]

    def cells(self, u: int) -> tuple:
        return self._cells[u]

    def nodes(self) -> set:
        return {n for cells in self._cells for src, dst, _ in cells for n in (src, dst)}


def from_schedule(schedule: TschSchedule) -> CellScheduler:
    by_slot: dict = {}
    for e in schedule.entries:
        by_slot.setdefault(e.u, []).append((e.src, e.dst, e.ch))
    return CellScheduler(schedule.slotframe_size, schedule.num_channels, by_slot)


def orchestra_like(tree: ForwardingTree, slotframe_size: int = 11, num_channels: int = 2) -> CellScheduler:
    """Receiver-based rule: node ``n`` listens at ``(n mod SF, n mod Z)``; children send there."""
    if slotframe_size < 2:
        raise ConfigurationError("orchestra-like slotframe needs at least 2 timeslots")
    by_slot: dict = {}
    for child, parent in sorted(tree.parent.items()):
        by_slot.setdefault(parent % slotframe_size, []).append(
            (child, parent, parent % num_channels)
        )
    sched = CellScheduler(slotframe_size, num_channels, by_slot)
    sched.name = "orchestra"
    return sched


class SharedCellScheduler(CellScheduler):
    """Every node contends in cell (0, 0); one random contender gets through."""

    name = "shared-cell"
    shared = True

    def __init__(self, tree: ForwardingTree, slotframe_size: int = 3, num_channels: int = 2):
        if slotframe_size < 1:
            raise ConfigurationError("shared-cell slotframe needs at least 1 timeslot")
        cells = [(c, p, 0) for c, p in sorted(tree.parent.items())]
        super().__init__(slotframe_size, num_channels, {0: cells})
        self.all_nodes = tuple(tree.nodes)


def shared_cell(tree: ForwardingTree, slotframe_size: int = 3, num_channels: int = 2):
    return SharedCellScheduler(tree, slotframe_size, num_channels)


# ------------------------------------------------------------------- report


@dataclass
class NodeStats:
    generated: int = 0
    delivered: int = 0
    dropped: int = 0
    lost: int = 0
    in_flight: int = 0
    forwarded: int = 0  # successful transmissions toward the parent
    received: int = 0
    collisions: int = 0
    latency_mean_ms: float = 0.0
    latency_max_ms: float = 0.0
    jitter_ms: float = 0.0
    tx_events: int = 0
    rx_events: int = 0
    rx_failed: int = 0
    idle_listens: int = 0
    sleep_slots: int = 0
    energy_tx_mj: float = 0.0
    energy_rx_mj: float = 0.0
    energy_listen_mj: float = 0.0
    energy_sleep_mj: float = 0.0
    mean_power_mw: float = 0.0
    throughput: float = 0.0  # forwarded (or received, at the sink) packets per second

    @property
    def plr(self) -> float:
        settled = self.generated - self.in_flight
        return (self.dropped + self.lost) / settled if settled else 0.0


@dataclass
class SimReport:
    scheduler: str
    config: SimConfig
    duration_s: float
    nodes: dict  # node id -> NodeStats
    generated: int
    delivered: int
    dropped: int
    lost: int
    in_flight: int
    collisions: int
    plr: float
    latency_mean_ms: float
    latency_max_ms: float
    jitter_ms: float
    mean_power_mw: float
    throughput: float  # mean over nodes, comparable with the analytic T
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("nodes", "trace", "config")}
        d["config"] = asdict(self.config)
        d["nodes"] = {str(n): {**asdict(s), "plr": s.plr} for n, s in sorted(self.nodes.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    def save_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["packet_id", "src", "gen_asn", "delivered_asn", "hops", "outcome"])
            for row in self.trace:
                w.writerow(row)


# --------------------------------------------------------------- simulation


class _Packet:
    __slots__ = ("pid", "src", "gen_asn", "hops", "tries")

    def __init__(self, pid, src, gen_asn):
        self.pid, self.src, self.gen_asn = pid, src, gen_asn
        self.hops = 0
        self.tries = 0


def run(graph: NetworkGraph, scheduler, cfg: SimConfig = SimConfig(),
        tree: ForwardingTree | None = None, energy: EnergyProfile = EnergyProfile(),
        slot_duration_ms: float = 10.0) -> SimReport:
    """Simulate ``cfg.duration_s`` seconds; ``scheduler`` may be a schedule or a scheduler."""
    tree = tree if tree is not None else build_forwarding_tree(graph)
    if isinstance(scheduler, TschSchedule):
        slot_duration_ms = scheduler.slot_duration_ms
        scheduler = from_schedule(scheduler)
    unknown = scheduler.nodes() - set(graph.node_ids)
    if unknown:
        raise ConfigurationError(f"schedule refers to nodes {sorted(unknown)} not in the topology")

    rng = np.random.default_rng(cfg.seed)
    nodes = tree.nodes
    sink = tree.sink
    parent = tree.parent
    size = scheduler.slotframe_size
    n_ch = scheduler.num_channels
    slot_s = slot_duration_ms / 1000.0
    n_slots = int(round(cfg.duration_s / slot_s))
    interference = {(a, b): graph.in_interference_range(a, b) for a in nodes for b in nodes}

    sources = [n for n in nodes if n != sink]
    if cfg.phase == "random":
        phase = {n: float(rng.uniform(0, cfg.data_interval_s)) for n in sources}
    else:
        phase = {n: 0.0 for n in sources}
    next_gen = {n: int(np.floor(phase[n] / slot_s + 1e-9)) for n in sources}
    gen_k = {n: 0 for n in sources}

    queues = {n: [] for n in nodes}
    stats = {n: NodeStats() for n in nodes}
    latencies = {n: [] for n in nodes}
    trace = []
    pid = 0
    collisions = 0

    def settle(pkt, outcome, asn=""):
        st = stats[pkt.src]
        if outcome == DELIVERED:
            st.delivered += 1
            latencies[pkt.src].append((asn - pkt.gen_asn) * slot_duration_ms)
        elif outcome == DROPPED:
            st.dropped += 1
        else:
            st.lost += 1
        if cfg.trace:
            trace.append((pkt.pid, pkt.src, pkt.gen_asn, asn, pkt.hops, outcome))

    def enqueue(node, pkt):
        if len(queues[node]) >= cfg.queue_capacity:
            settle(pkt, DROPPED)
        else:
            queues[node].append(pkt)

    backoff = {n: 0 for n in nodes}

    def failed(src, pkt):
        pkt.tries += 1
        if pkt.tries > cfg.retransmissions:
            queues[src].pop(0)
            settle(pkt, LOST)
        else:
            # skip a random number of own Tx opportunities, window doubling per try
            backoff[src] = int(rng.integers(0, 2 ** min(pkt.tries, 5)))

    for asn in range(n_slots):
        # generation at the start of the slot
        for n in sources:
            while next_gen[n] <= asn:
                pkt = _Packet(pid, n, asn)
                pid += 1
                stats[n].generated += 1
                enqueue(n, pkt)
                gen_k[n] += 1
                next_gen[n] = int(np.floor((phase[n] + gen_k[n] * cfg.data_interval_s) / slot_s + 1e-9))

        u = asn % size
        cells = scheduler.cells(u)
        active = set()
        tx = []  # (src, dst, physical channel)
        for src, dst, ch in cells:
            if queues[src] and parent.get(src) == dst and src not in active:
                active.add(src)
                if backoff[src]:
                    backoff[src] -= 1
                    continue
                tx.append((src, dst, (asn + ch) % n_ch))
        transmitters = {s for s, _, _ in tx}
        if scheduler.shared:
            listeners = {n: 0 for n in scheduler.all_nodes if n not in transmitters}
            ch0 = asn % n_ch
            listeners = {n: ch0 for n in listeners}
        else:
            listeners = {}
            for src, dst, ch in cells:
                if dst not in transmitters:
                    listeners.setdefault(dst, (asn + ch) % n_ch)

        heard = set()
        collided = set()
        if scheduler.shared and tx:
            winner = tx[int(rng.integers(len(tx)))]
            if len(tx) > 1:
                collisions += 1
            for attempt in tx:
                src, dst, _ = attempt
                st = stats[src]
                st.tx_events += 1
                pkt = queues[src][0]
                if attempt is winner and dst in listeners:
                    queues[src].pop(0)
                    _deliver(pkt, src, dst, asn, stats, sink, settle, enqueue)
                    heard.add(dst)
                else:
                    if len(tx) > 1:
                        st.collisions += 1
                    failed(src, pkt)
        else:
            for src, dst, phys in tx:
                st = stats[src]
                st.tx_events += 1
                pkt = queues[src][0]
                ok = listeners.get(dst) == phys
                if ok:
                    rivals = sum(1 for s2, _, p2 in tx if p2 == phys and interference[(s2, dst)])
                    if rivals > 1:
                        ok = False
                        st.collisions += 1
                        if dst not in collided:
                            collided.add(dst)
                            collisions += 1
                            stats[dst].rx_failed += 1
                        heard.add(dst)
                if ok:
                    queues[src].pop(0)
                    _deliver(pkt, src, dst, asn, stats, sink, settle, enqueue)
                    heard.add(dst)
                else:
                    failed(src, pkt)

        for n in listeners:
            if n not in heard:
                stats[n].idle_listens += 1
        busy = transmitters | set(listeners)
        for n in nodes:
            if n not in busy:
                stats[n].sleep_slots += 1

    for n in nodes:
        for pkt in queues[n]:
            stats[pkt.src].in_flight += 1
            if cfg.trace:
                trace.append((pkt.pid, pkt.src, pkt.gen_asn, "", pkt.hops, IN_FLIGHT))

    duration = n_slots * slot_s
    sleep_uj = LPM_MA * SUPPLY_V * slot_duration_ms  # mA * V * ms = uJ
    for n in nodes:
        st = stats[n]
        st.energy_tx_mj = st.tx_events * energy.per_tx / 1000.0
        st.energy_rx_mj = (st.rx_events * energy.per_rx + st.rx_failed * energy.e_rx) / 1000.0
        st.energy_listen_mj = st.idle_listens * energy.e_listen / 1000.0
        st.energy_sleep_mj = st.sleep_slots * sleep_uj / 1000.0
        active_mj = st.energy_tx_mj + st.energy_rx_mj + st.energy_listen_mj
        st.mean_power_mw = energy.p0_mw + active_mj / duration
        st.throughput = (st.received if n == sink else st.forwarded) / duration
        lat = latencies[n]
        if lat:
            st.latency_mean_ms = float(np.mean(lat))
            st.latency_max_ms = float(np.max(lat))
            if len(lat) > 1:
                st.jitter_ms = float(np.mean(np.abs(np.diff(lat))))

    tot = lambda attr: sum(getattr(s, attr) for s in stats.values())
    all_lat = [x for n in nodes for x in latencies[n]]
    jit = [stats[n].jitter_ms for n in sources if len(latencies[n]) > 1]
    generated, in_flight = tot("generated"), tot("in_flight")
    settled = generated - in_flight
    return SimReport(
        scheduler=scheduler.name,
        config=cfg,
        duration_s=duration,
        nodes=stats,
        generated=generated,
        delivered=tot("delivered"),
        dropped=tot("dropped"),
        lost=tot("lost"),
        in_flight=in_flight,
        collisions=collisions,
        plr=(tot("dropped") + tot("lost")) / settled if settled else 0.0,
        latency_mean_ms=float(np.mean(all_lat)) if all_lat else 0.0,
        latency_max_ms=float(np.max(all_lat)) if all_lat else 0.0,
        jitter_ms=float(np.mean(jit)) if jit else 0.0,
        mean_power_mw=float(np.mean([stats[n].mean_power_mw for n in nodes])),
        throughput=float(np.mean([stats[n].throughput for n in nodes])),
        trace=trace,
    )


def _deliver(pkt, src, dst, asn, stats, sink, settle, enqueue):
    pkt.hops += 1
    pkt.tries = 0
    stats[src].forwarded += 1
    stats[dst].received += 1
    stats[dst].rx_events += 1
    if dst == sink:
        settle(pkt, DELIVERED, asn)
    else:
        enqueue(dst, pkt)


# ------------------------------------------------------------------ compare


def _rel(sim: float, ref: float) -> float:
    if ref == 0:
        return 0.0 if sim == 0 else float("inf")
    return (sim - ref) / ref


def compare(analytic: MetricsReport, sim: SimReport) -> list[dict]:
    """Relative deviation of simulated T, P and mean latency from the analytic report."""
    rows = []
    for n in sorted(analytic.node_t):
        s = sim.nodes[n]
        rows.append({
            "node": n,
            "T_analytic": analytic.node_t[n], "T_sim": s.throughput,
            "T_dev": _rel(s.throughput, analytic.node_t[n]),
            "P_analytic": analytic.node_p[n], "P_sim": s.mean_power_mw,
            "P_dev": _rel(s.mean_power_mw, analytic.node_p[n]),
            "D_analytic": analytic.node_d[n], "D_sim": s.latency_mean_ms,
            "D_dev": _rel(s.latency_mean_ms, analytic.node_d[n]),
        })
    rows.append({
        "node": "network",
        "T_analytic": analytic.T, "T_sim": sim.throughput, "T_dev": _rel(sim.throughput, analytic.T),
        "P_analytic": analytic.P, "P_sim": sim.mean_power_mw,
        "P_dev": _rel(sim.mean_power_mw, analytic.P),
        "D_analytic": analytic.D, "D_sim": sim.latency_mean_ms,
        "D_dev": _rel(sim.latency_mean_ms, analytic.D),
    })
    return rows
