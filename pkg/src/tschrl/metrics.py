"""Analytic throughput, power and worst-case delay of a schedule.

Units used throughout: energies in microjoules per event, powers in
milliwatts, delays in milliseconds, throughput in packets per second.
Multiplying a per-event energy (uJ) by an event rate (1/s) gives uW; every
such product goes through :func:`uj_rate_to_mw`.

The sink generates no traffic. Its throughput is the inflow it receives
from its children, it never transmits, and it has no delay of its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError
from .netmodel import ForwardingTree, path_links
from .schedule import TschSchedule, rx_slot_count, tx_slot_count

# low-power-mode current (mA) at a 3 V supply, used for reported sleep energy
SUPPLY_V = 3.0
LPM_MA = 0.0545


def uj_rate_to_mw(energy_uj: float, rate_per_s: float) -> float:
    return energy_uj * rate_per_s / 1000.0


@dataclass(frozen=True)
class EnergyProfile:
    e_tx: float = 140.0
    e_rx: float = 160.0
    e_tx_ack: float = 55.0
    e_rx_ack: float = 70.0
    e_listen: float = 110.0
    p0_mw: float = 0.57

    def __post_init__(self):
        for name in ("e_tx", "e_rx", "e_tx_ack", "e_rx_ack", "e_listen", "p0_mw"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")

    @property
    def per_tx(self) -> float:
        """Energy of one data transmission including the ack reception."""
        return self.e_tx + self.e_rx_ack

    @property
    def per_rx(self) -> float:
        return self.e_rx + self.e_tx_ack


@dataclass(frozen=True)
class TrafficProfile:
    t0: float = 1.0
    k_ms: float = 1000.0
    sigma_t: float = 0.0
    sigma_p: float = 0.0
    sigma_d: float = 0.0

    def __post_init__(self):
        if not self.t0 > 0:
            raise ConfigurationError("t0 must be positive")
        if not self.k_ms > 0:
            raise ConfigurationError("k_ms must be positive")
        if min(self.sigma_t, self.sigma_p, self.sigma_d) < 0:
            raise ConfigurationError("noise sigmas must be non-negative")

    @property
    def noisy(self) -> bool:
        return bool(self.sigma_t or self.sigma_p or self.sigma_d)


# ---------------------------------------------------------------- throughput


def max_throughput(n: int, schedule: TschSchedule) -> float:
    """Packets per second node ``n`` can push through its Tx timeslots."""
    return tx_slot_count(schedule, n) / (schedule.slotframe_size * schedule.slot_seconds)


def max_rx_throughput(n: int, schedule: TschSchedule) -> float:
    return rx_slot_count(schedule, n) / (schedule.slotframe_size * schedule.slot_seconds)


@dataclass(frozen=True)
class Flows:
    """Per-node rates of the saturating flow model."""

    throughput: dict  # T_n
    inflow: dict  # T_children,n
    sent: dict  # rate actually transmitted (0 for the sink)
    tx_capacity: dict
    rx_capacity: dict


def compute_flows(schedule: TschSchedule, tree: ForwardingTree, t0: float) -> Flows:
    """Bottom-up saturating flow model over the forwarding tree.

    Only cells pointing at a node's parent carry forwarding capacity; a node
    still listens in every Rx cell addressed to it.
    """
    cap_scale = 1.0 / (schedule.slotframe_size * schedule.slot_seconds)
    tx_slots: dict[int, set] = {}
    rx_slots: dict[int, set] = {}
    parent = tree.parent
    for e in schedule.entries:
        if parent.get(e.src) == e.dst:
            tx_slots.setdefault(e.src, set()).add(e.u)
        rx_slots.setdefault(e.dst, set()).add(e.u)

    thr, inflow, sent, txc, rxc = {}, {}, {}, {}, {}
    for n in tree.bottom_up():
        txc[n] = len(tx_slots.get(n, ())) * cap_scale
        rxc[n] = len(rx_slots.get(n, ())) * cap_scale
        t_children = sum(thr[c] for c in tree.children(n))
        inflow[n] = t_children
        if n == tree.sink:
            thr[n] = t_children
            sent[n] = 0.0
            continue
        if t_children < txc[n] - t0:
            thr[n] = t0 + t_children
        else:
            thr[n] = txc[n]
        sent[n] = thr[n]
    return Flows(thr, inflow, sent, txc, rxc)


def node_throughput(n: int, schedule: TschSchedule, tree: ForwardingTree, t0: float = 1.0) -> float:
    return compute_flows(schedule, tree, t0).throughput[n]


def network_throughput(
    schedule: TschSchedule, tree: ForwardingTree, traffic: TrafficProfile, rng=None
) -> float:
    flows = compute_flows(schedule, tree, traffic.t0)
    vals = np.array([flows.throughput[n] for n in tree.nodes])
    return float(np.mean(vals + _noise(rng, traffic.sigma_t, len(vals))))


def _noise(rng, sigma: float, size: int) -> np.ndarray:
    if sigma == 0:
        return np.zeros(size)
    if rng is None:
        raise ConfigurationError("a random generator is required when noise is enabled")
    return rng.normal(0.0, sigma, size)


# --------------------------------------------------------------------- power


@dataclass(frozen=True)
class NodePower:
    p0: float
    p_tx: float
    p_rx: float
    idle_rate: float  # idle Rx cells per second

    @property
    def total(self) -> float:
        return self.p0 + self.p_tx + self.p_rx


def _node_power(n: int, flows: Flows, energy: EnergyProfile) -> NodePower:
    idle = max(0.0, flows.rx_capacity[n] - flows.inflow[n])
    p_tx = uj_rate_to_mw(energy.per_tx, flows.sent[n])
    p_rx = uj_rate_to_mw(energy.per_rx, flows.inflow[n]) + uj_rate_to_mw(energy.e_listen, idle)
    return NodePower(energy.p0_mw, p_tx, p_rx, idle)


def node_power(
    n: int,
    schedule: TschSchedule,
    tree: ForwardingTree,
    energy: EnergyProfile = EnergyProfile(),
    traffic: TrafficProfile = TrafficProfile(),
) -> NodePower:
    """Breakdown of node ``n``'s power (mW) without the noise term."""
    return _node_power(n, compute_flows(schedule, tree, traffic.t0), energy)


# --------------------------------------------------------------------- delay


def queue_delay_ms(arrival: float, service: float, k_ms: float = 1000.0) -> float:
    """M/M/1 waiting time in ms, or ``k_ms`` once the queue is unstable."""
    if arrival < service:
        return arrival / (service * (service - arrival)) * 1e3
    return k_ms


def _wait_table(schedule: TschSchedule, node: int, dst: int):
    """Slots to wait at each slotframe offset for the next cell ``node -> dst``."""
    size = schedule.slotframe_size
    slots = {e.u for e in schedule.entries if e.src == node and e.dst == dst}
    if not slots:
        return None
    # backward sweep over two slotframes: distance to the next owned slot
    table = np.zeros(size, dtype=np.int64)
    nxt = None
    for p in range(2 * size - 1, -1, -1):
        if p % size in slots:
            nxt = p
        if p < size:
            table[p] = nxt - p
    return table


def _delay_from(n, schedule, tree, flows, k_ms, tables) -> float:
    path = path_links(tree, n)
    if not path:
        return 0.0
    size = schedule.slotframe_size
    t = np.arange(size)
    start = t.copy()
    missing = 0
    for link in path:
        tab = tables[link]
        if tab is None:
            missing += 1
            continue
        t = t + tab[t % size]
    worst = int((t - start).max())
    queue = sum(
        queue_delay_ms(flows.inflow[f], flows.throughput[f], k_ms) for _, f in path if f != tree.sink
    )
    return worst * schedule.slot_duration_ms + missing * k_ms + queue


def node_delay(
    n: int,
    schedule: TschSchedule,
    tree: ForwardingTree,
    traffic: TrafficProfile = TrafficProfile(),
) -> float:
    """Worst-case delay (ms) of a packet generated at ``n``.

    Slot waits follow the nearest-upcoming-cell rule hop by hop, maximized
    over every generation timeslot; a hop with no cell toward the parent
    costs ``k_ms``. Queueing at each forwarding node (not ``n`` itself, not
    the sink) adds the M/M/1 term.
    """
    flows = compute_flows(schedule, tree, traffic.t0)
    tables = {l: _wait_table(schedule, *l) for l in path_links(tree, n)}
    return _delay_from(n, schedule, tree, flows, traffic.k_ms, tables)


# ---------------------------------------------------------------------- loss


def loss_rate(schedule: TschSchedule, tree: ForwardingTree, traffic: TrafficProfile) -> float:
    flows = compute_flows(schedule, tree, traffic.t0)
    return _loss(flows, tree, traffic.t0)


def _loss(flows: Flows, tree: ForwardingTree, t0: float) -> float:
    offered = (len(tree.nodes) - 1) * t0
    if offered <= 0:
        return 0.0
    return float(np.clip(1.0 - flows.inflow[tree.sink] / offered, 0.0, 1.0))


# -------------------------------------------------------------------- report


@dataclass(frozen=True)
class Normalized:
    p: float
    d: float
    t: float
    l: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p, self.d, self.t, self.l)


@dataclass(frozen=True)
class MetricsReport:
    node_t: dict
    node_p: dict
    node_d: dict
    T: float
    P: float
    D: float
    L: float
    power_breakdown: dict = field(repr=False, default_factory=dict)
    normalized: Normalized | None = None


def evaluate(
    schedule: TschSchedule,
    tree: ForwardingTree,
    energy: EnergyProfile = EnergyProfile(),
    traffic: TrafficProfile = TrafficProfile(),
    rng=None,
    bounds: "NormalizationBounds | None" = None,
) -> MetricsReport:
    """Full analytic evaluation; noise is drawn from ``rng`` when enabled."""
    flows = compute_flows(schedule, tree, traffic.t0)
    nodes = tree.nodes
    tables = {l: _wait_table(schedule, *l) for l in tree.edges}
    power = {n: _node_power(n, flows, energy) for n in nodes}
    node_p = {n: power[n].total for n in nodes}
    node_d = {n: _delay_from(n, schedule, tree, flows, traffic.k_ms, tables) for n in nodes}
    node_t = dict(flows.throughput)

    size = len(nodes)
    T = float(np.mean([node_t[n] for n in nodes] + _noise(rng, traffic.sigma_t, size)))
    P = float(np.mean([node_p[n] for n in nodes] + _noise(rng, traffic.sigma_p, size)))
    D = float(np.mean([node_d[n] for n in nodes] + _noise(rng, traffic.sigma_d, size)))
    report = MetricsReport(
        node_t, node_p, node_d, T, P, D, _loss(flows, tree, traffic.t0), power_breakdown=power
    )
    if bounds is not None:
        report = MetricsReport(
            node_t, node_p, node_d, T, P, D, report.L, power, normalize(report, bounds)
        )
    return report


# ------------------------------------------------------------- normalization


@dataclass(frozen=True)
class NormalizationBounds:
    p_min: float
    p_max: float
    d_cap: float
    t_ub: float


def normalization_bounds(
    tree: ForwardingTree,
    slotframe_size: int,
    slot_duration_ms: float,
    energy: EnergyProfile = EnergyProfile(),
    traffic: TrafficProfile = TrafficProfile(),
) -> NormalizationBounds:
    """Per-topology bounds used to map metrics into [0, 1].

    Power runs from the idle floor ``P_0`` to the ceiling reached when every
    timeslot of a node carries its most expensive radio event. Delay is
    capped at ``K`` per hop of the deepest path. Throughput is scaled by the
    rate of a node transmitting in all timeslots.
    """
    slots_per_s = 1000.0 / slot_duration_ms
    per_slot = max(energy.per_tx, energy.per_rx, energy.e_listen)
    p_max = energy.p0_mw + uj_rate_to_mw(per_slot, slots_per_s)
    return NormalizationBounds(
        p_min=energy.p0_mw,
        p_max=p_max,
        d_cap=traffic.k_ms * tree.max_hops(),
        t_ub=slotframe_size / (slotframe_size * slot_duration_ms / 1000.0),
    )


def _scale(value: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    return float(np.clip((value - lo) / (hi - lo), 0.0, 1.0))


def normalize(report: MetricsReport, bounds: NormalizationBounds) -> Normalized:
    return Normalized(
        p=_scale(report.P, bounds.p_min, bounds.p_max),
        d=_scale(min(report.D, bounds.d_cap), 0.0, bounds.d_cap),
        t=_scale(report.T, 0.0, bounds.t_ub),
        l=float(np.clip(report.L, 0.0, 1.0)),
    )
