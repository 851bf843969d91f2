"""Two-level scheduling environment.

The high level picks a link and a direction (add a cell, remove a cell);
the low level picks the cell. Both levels share the same schedule, metric
evaluation and cost. Penalized actions end the episode with a fixed
negative reward and leave the schedule untouched.

Action encodings:

* high action id ``a`` in ``[0, 2|E|)``: ``a < |E|`` adds a cell to link
  ``a``, otherwise removes a cell from link ``a - |E|``;
* low action id ``k`` in ``[0, |Z||U|)``: channel-major, ``k = ch * |U| + u``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError, ContractError, EpisodeError
from .metrics import (
    EnergyProfile,
    NormalizationBounds,
    TrafficProfile,
    evaluate,
    normalization_bounds,
)
from .netmodel import ForwardingTree, NetworkGraph, build_forwarding_tree
from .schedule import Cell, TschSchedule, add_link, remove_link

ADD, REMOVE = "add", "rm"
KINDS = (ADD, REMOVE)


@dataclass(frozen=True)
class Requirements:
    """Weights on normalized power, delay and throughput."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        w = (self.alpha, self.beta, self.gamma)
        if any(not 0.0 <= x <= 1.0 for x in w):
            raise ContractError(f"requirement weights must lie in [0, 1], got {w}")
        if abs(math.fsum(w) - 1.0) > 1e-9:
            raise ContractError(f"requirement weights must sum to 1, got {math.fsum(w):.12g}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    @classmethod
    def parse(cls, text: str) -> "Requirements":
        try:
            a, b, g = (float(x) for x in text.split(","))
        except ValueError:
            raise ContractError(f"expected three comma-separated weights, got {text!r}") from None
        return cls(a, b, g)

    def __str__(self) -> str:
        return f"{self.alpha:g},{self.beta:g},{self.gamma:g}"


def phi_grid(step: float = 0.1) -> list[Requirements]:
    """Every weight triple on the simplex lattice with spacing ``step``.

    Weights are built from integer compositions so each triple sums to
    exactly 1.0 in floating point after rounding.
    """
    parts = round(1.0 / step)
    if parts <= 0 or abs(parts * step - 1.0) > 1e-9:
        raise ConfigurationError(f"grid step {step} must divide 1 evenly")
    out = []
    for i in range(parts + 1):
        for j in range(parts + 1 - i):
            a, b = round(i / parts, 10), round(j / parts, 10)
            out.append(Requirements(a, b, round(1.0 - a - b, 10)))
    return out


def cost(p_hat: float, d_hat: float, t_hat: float, phi: Requirements) -> float:
    for v in (p_hat, d_hat, t_hat):
        if not 0.0 <= v <= 1.0:
            raise ContractError(f"normalized metric {v} outside [0, 1]")
    return phi.alpha * p_hat + phi.beta * d_hat - phi.gamma * t_hat


class HighAction(NamedTuple):
    kind: str
    link_index: int


def decode_high(action: int, n_links: int) -> HighAction:
    if not 0 <= action < 2 * n_links:
        raise ContractError(f"high action {action} outside [0, {2 * n_links})")
    return HighAction(ADD if action < n_links else REMOVE, action % n_links)


def encode_high(kind: str, link_index: int, n_links: int) -> int:
    return link_index + (n_links if kind == REMOVE else 0)


def decode_cell(action: int, slotframe_size: int, num_channels: int) -> Cell:
    if not 0 <= action < slotframe_size * num_channels:
        raise ContractError(f"low action {action} outside [0, {slotframe_size * num_channels})")
    return Cell(action % slotframe_size, action // slotframe_size)


class StepOutcome(NamedTuple):
    state: np.ndarray
    reward: float
    terminal: bool
    cost: float
    penalized: bool


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 50
    penalty: float = -1.0
    upsilon: float = 2.0
    slotframe_size: int = 17
    num_channels: int = 2
    slot_duration_ms: float = 10.0
    phi_step: float = 0.1
    reset_retries: int = 200
    energy: EnergyProfile = field(default_factory=EnergyProfile)
    traffic: TrafficProfile = field(default_factory=TrafficProfile)

    def __post_init__(self):
        if self.max_steps < 0:
            raise ConfigurationError("max_steps must be non-negative")
        if not self.upsilon > 1.0:
            raise ConfigurationError("upsilon must exceed the largest possible cost (1)")
        if self.reset_retries < 1:
            raise ConfigurationError("reset_retries must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        data = dict(data)
        try:
            energy = EnergyProfile(**data.pop("energy", {}))
            traffic = TrafficProfile(**data.pop("traffic", {}))
            return cls(energy=energy, traffic=traffic, **data)
        except TypeError as exc:
            raise ConfigurationError(f"bad environment config: {exc}") from None

    def noiseless(self) -> "EnvConfig":
        t = self.traffic
        return replace(self, traffic=TrafficProfile(t.t0, t.k_ms))


class SchedulingEnv:
    """Shared state of one episode over a fixed topology.

    ``step_high`` checks the link choice and, when it passes, arms the low
    level; ``step_low`` applies the cell choice and scores the result. For
    training one low-level policy in isolation, call :meth:`fix_task` and
    drive the episode with ``step_low`` only.
    """

    def __init__(self, graph: NetworkGraph, tree: ForwardingTree | None = None,
                 config: EnvConfig | None = None):
        self.graph = graph
        self.tree = tree if tree is not None else build_forwarding_tree(graph)
        self.config = config or EnvConfig()
        cfg = self.config
        self.links = graph.links
        self.n_links = len(self.links)
        self.n_cells = cfg.slotframe_size * cfg.num_channels
        self.tree_edges = frozenset(self.tree.edges)
        self.bounds: NormalizationBounds = normalization_bounds(
            self.tree, cfg.slotframe_size, cfg.slot_duration_ms, cfg.energy, cfg.traffic
        )
        self._adjacency = graph.adjacency_matrix().ravel().astype(np.float64)
        self._node_pos = {n: i for i, n in enumerate(graph.node_ids)}
        self._grid = phi_grid(cfg.phi_step)
        self._cells = tuple(self._cell(k) for k in range(self.n_cells))
        self.rng = np.random.default_rng()
        self.schedule: TschSchedule | None = None
        self.phi: Requirements | None = None
        self.steps = 0
        self.done = True
        self.pending: HighAction | None = None
        self._fixed: HighAction | None = None
        self._last_link = -1
        self._metrics = (0.0, 0.0, 0.0, 0.0)

    # ----------------------------------------------------------- sizes

    @property
    def n_high_actions(self) -> int:
        return 2 * self.n_links

    @property
    def high_state_size(self) -> int:
        return 3 + 3 + self._adjacency.size + self.n_cells + 1

    @property
    def low_state_size(self) -> int:
        return 3 + 3 + self._adjacency.size + 3 * self.n_cells + 1

    # ------------------------------------------------------- lifecycle

    def reset(self, seed=None, phi: Requirements | None = None) -> np.ndarray:
        """Start an episode from one random feasible cell per tree edge."""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.phi = phi if phi is not None else self._grid[self.rng.integers(len(self._grid))]
        self.schedule = self._initial_schedule()
        self.steps = 0
        self.done = False
        self.pending = None
        self._last_link = -1
        self._refresh_metrics()
        return self.high_state()

    def _initial_schedule(self) -> TschSchedule:
        cfg = self.config
        edges = sorted(self.tree_edges)
        for _ in range(cfg.reset_retries):
            s = TschSchedule(cfg.slotframe_size, cfg.num_channels, cfg.slot_duration_ms)
            for src, dst in edges:
                # first feasible cell of a random permutation = uniform over feasible cells
                for k in self.rng.permutation(self.n_cells):
                    s, ok = add_link(s, src, dst, self._cells[k])
                    if ok:
                        break
                else:
                    break
            else:
                return s
        raise EpisodeError(
            f"no feasible initial placement after {cfg.reset_retries} attempts; "
            "the slotframe is too small for this tree"
        )

    def load(self, schedule: TschSchedule, phi: Requirements, seed=None) -> np.ndarray:
        """Start an episode from a given schedule instead of a random one."""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.phi = phi
        self.schedule = schedule
        self.steps = 0
        self.done = False
        self.pending = None
        self._last_link = -1
        self._refresh_metrics()
        return self.high_state()

    def fix_task(self, link_index: int, kind: str) -> None:
        """Pin the low-level task so ``step_low`` can run without ``step_high``."""
        if kind not in KINDS or not 0 <= link_index < self.n_links:
            raise ContractError(f"bad low-level task ({link_index}, {kind})")
        self._fixed = HighAction(kind, link_index)

    @property
    def task(self) -> HighAction | None:
        """The (kind, link) the next ``step_low`` will act on."""
        return self.pending or self._fixed

    def _cell(self, k: int) -> Cell:
        return decode_cell(k, self.config.slotframe_size, self.config.num_channels)

    @property
    def cells(self) -> tuple[Cell, ...]:
        return self._cells

    # ------------------------------------------------------- penalties

    def penalized_high(self, action: HighAction | int) -> bool:
        if not isinstance(action, HighAction):
            action = decode_high(action, self.n_links)
        link = self.links[action.link_index]
        if action.kind == ADD:
            return link not in self.tree_edges
        return link in self.tree_edges and self.schedule.cells_of(*link) <= 1

    def apply_low(self, task: HighAction, cell: Cell) -> TschSchedule | None:
        """Schedule after the cell operation, or None if it is penalized."""
        src, dst = self.links[task.link_index]
        if task.kind == ADD:
            nxt, ok = add_link(self.schedule, src, dst, cell, graph=self.graph)
            return nxt if ok else None
        nxt, ok = remove_link(self.schedule, cell, dst)
        if not ok:
            return None
        victim = self.schedule.at(cell)
        edge = (victim.src, victim.dst)
        if edge in self.tree_edges and nxt.cells_of(*edge) == 0:
            return None
        return nxt

    # ----------------------------------------------------------- steps

    def _require_active(self):
        if self.done or self.schedule is None:
            raise EpisodeError("episode is finished; call reset() first")

    def step_high(self, action: int) -> StepOutcome | None:
        """Returns a terminal outcome if the choice is penalized, else arms the low level."""
        self._require_active()
        if self.pending is not None:
            raise EpisodeError("a low-level action is pending")
        ha = decode_high(action, self.n_links)
        if self.penalized_high(ha):
            return self._penalize(self.high_state)
        self.pending = ha
        return None

    def step_low(self, action: int) -> StepOutcome:
        """Apply the cell choice; the outcome carries the high-level state."""
        self._require_active()
        task = self.task
        if task is None:
            raise EpisodeError("no low-level task; call step_high() or fix_task() first")
        encode = self.high_state if self.pending is not None else self.low_state
        self.pending = None
        nxt = self.apply_low(task, self._cell(action))
        self._last_link = task.link_index
        if nxt is None:
            return self._penalize(encode)
        self.schedule = nxt
        self.steps += 1
        self._refresh_metrics()
        c = self.current_cost()
        self.done = self.steps >= self.config.max_steps
        return StepOutcome(encode(), self.config.upsilon - c, self.done, c, False)

    def _penalize(self, encode) -> StepOutcome:
        self.done = True
        self.pending = None
        return StepOutcome(encode(), self.config.penalty, True, self.current_cost(), True)

    # --------------------------------------------------------- metrics

    def _refresh_metrics(self) -> None:
        cfg = self.config
        rep = evaluate(self.schedule, self.tree, cfg.energy, cfg.traffic,
                       self.rng if cfg.traffic.noisy else None, self.bounds)
        self._metrics = rep.normalized.as_tuple()

    @property
    def normalized(self) -> tuple[float, float, float, float]:
        """(P, D, T, L) of the current schedule, each in [0, 1]."""
        return self._metrics

    def current_cost(self, phi: Requirements | None = None) -> float:
        p, d, t, _ = self._metrics
        return cost(p, d, t, phi or self.phi)

    # ---------------------------------------------------------- states

    def _cell_plane(self) -> np.ndarray:
        size = self.config.slotframe_size
        plane = np.zeros(self.n_cells)
        denom = self.n_links + 1
        for e in self.schedule.entries:
            plane[e.ch * size + e.u] = (self.graph.link_index((e.src, e.dst)) + 1) / denom
        return plane

    def _link_code(self, index: int) -> float:
        return 0.0 if index < 0 else (index + 1) / self.n_links

    def high_state(self) -> np.ndarray:
        p, d, t, _ = self._metrics
        return np.concatenate((
            [p, d, t], self.phi.as_tuple(), self._adjacency, self._cell_plane(),
            [self._link_code(self._last_link)],
        ))

    def low_state(self, task: HighAction | None = None) -> np.ndarray:
        task = task or self.task
        if task is None:
            raise EpisodeError("no low-level task to encode")
        src, dst = self.links[task.link_index]
        size = self.config.slotframe_size
        src_plane = np.zeros(self.n_cells)
        dst_plane = np.zeros(self.n_cells)
        occupied = np.zeros(self.n_cells)
        for e in self.schedule.entries:
            k = e.ch * size + e.u
            occupied[k] = 1.0
            for plane, node in ((src_plane, src), (dst_plane, dst)):
                if e.src == node:
                    plane[k] = 1.0
                elif e.dst == node:
                    plane[k] = 0.5
        p, d, _, loss = self._metrics
        return np.concatenate((
            [p, d, loss], self.phi.as_tuple(), self._adjacency, src_plane, dst_plane, occupied,
            [self._link_code(task.link_index)],
        ))

