"""Policy hierarchy: one cell-picking policy per (link, direction), one link picker.

Low-level policies are trained first and independently. The link picker is
then trained on top of them, with every cell decision delegated to the
frozen greedy low-level policy of the chosen link. Inference runs the whole
hierarchy greedily and keeps the cheapest schedule seen along the way.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dqn import DQNAgent, EpisodeLog, QNetwork, TrainConfig
from .env import ADD, KINDS, REMOVE, EnvConfig, Requirements, SchedulingEnv, decode_high
from .exceptions import ConfigurationError, PolicyBankError
from .netmodel import ForwardingTree, NetworkGraph, build_forwarding_tree, graph_from_dict
from .schedule import TschSchedule, add_link

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def policy_seed(base_seed: int, *parts: int) -> int:
    """Independent, order-free seed for one policy of a bank."""
    return int(np.random.SeedSequence([base_seed, *parts]).generate_state(1)[0])


def low_key(link_index: int, kind: str) -> str:
    return f"{kind}-{link_index}"


# -------------------------------------------------------------------- tasks


class LowTask:
    """Episodes that exercise one low-level policy in isolation.

    Each episode starts from the usual one-cell-per-tree-edge schedule plus
    up to three random extra cells on tree edges. For removal tasks the
    target link also gets one to three cells so there is something to take
    away.
    """

    def __init__(self, env: SchedulingEnv, link_index: int, kind: str, seed: int):
        self.env = env
        self.link_index = link_index
        self.kind = kind
        self.rng = np.random.default_rng(seed)
        env.rng = np.random.default_rng(policy_seed(seed, 1))
        self._edges = sorted(env.tree_edges)

    def _place(self, s: TschSchedule, src: int, dst: int) -> TschSchedule:
        env = self.env
        for k in self.rng.permutation(env.n_cells):
            s, ok = add_link(s, src, dst, env.cells[k], graph=env.graph)
            if ok:
                break
        return s

    def reset(self) -> np.ndarray:
        env = self.env
        env.reset()
        s = env.schedule
        if self.kind == REMOVE:
            src, dst = env.links[self.link_index]
            for _ in range(self.rng.integers(1, 4)):
                s = self._place(s, src, dst)
        for _ in range(self.rng.integers(0, 4)):
            s = self._place(s, *self._edges[self.rng.integers(len(self._edges))])
        env.load(s, env.phi)
        env.fix_task(self.link_index, self.kind)
        return env.low_state()

    def step(self, action: int):
        out = self.env.step_low(action)
        return out.state, out.reward, out.terminal


class HighTask:
    """Episodes for the link picker; cell choices come from frozen low policies."""

    def __init__(self, env: SchedulingEnv, bank: "PolicyBank", seed: int):
        self.env = env
        self.bank = bank
        env.rng = np.random.default_rng(seed)

    def reset(self) -> np.ndarray:
        return self.env.reset()

    def step(self, action: int):
        out = self.env.step_high(action)
        if out is None:
            ha = self.env.pending
            net = self.bank.low_policy(ha.link_index, ha.kind)
            out = self.env.step_low(int(np.argmax(net.forward(self.env.low_state()))))
        return out.state, out.reward, out.terminal


# --------------------------------------------------------------------- bank


@dataclass
class LowSummary:
    """Learning-curve digest kept with every low-level checkpoint."""

    episodes: int
    first_decile: float
    last_decile: float
    heldout_feasible: float

    @property
    def improved(self) -> bool:
        return self.last_decile > self.first_decile


def decile_means(rewards) -> tuple[float, float]:
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        return float("nan"), float("nan")
    k = max(1, r.size // 10)
    return float(r[:k].mean()), float(r[-k:].mean())


@dataclass
class PolicyBank:
    graph: NetworkGraph
    env_config: EnvConfig
    train_config: TrainConfig
    tree: ForwardingTree = None
    low: dict = field(default_factory=dict)  # low_key -> DQNAgent
    high: DQNAgent | None = None
    summaries: dict = field(default_factory=dict)  # low_key -> LowSummary
    high_log: EpisodeLog | None = None

    def __post_init__(self):
        if self.tree is None:
            self.tree = build_forwarding_tree(self.graph)

    @property
    def n_links(self) -> int:
        return len(self.graph.links)

    @property
    def fingerprint(self) -> str:
        return self.graph.fingerprint()

    @property
    def config_hash(self) -> str:
        blob = json.dumps(
            {"env": self.env_config.to_dict(), "train": self.train_config.to_dict(),
             "topology": self.fingerprint},
            sort_keys=True,
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def missing_low(self) -> list[tuple[int, str]]:
        return [(i, k) for k in KINDS for i in range(self.n_links) if low_key(i, k) not in self.low]

    @property
    def complete(self) -> bool:
        return not self.missing_low() and self.high is not None

    def low_policy(self, link_index: int, kind: str) -> QNetwork:
        agent = self.low.get(low_key(link_index, kind))
        if agent is None:
            link = self.graph.links[link_index]
            raise PolicyBankError(f"no low-level policy for link {link[0]}->{link[1]} ({kind})")
        return agent.net

    def make_env(self, noiseless: bool = False) -> SchedulingEnv:
        cfg = self.env_config.noiseless() if noiseless else self.env_config
        return SchedulingEnv(self.graph, self.tree, cfg)

    # ----------------------------------------------------------- persistence

    def save(self, directory: str | Path) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files = {}
        for key, agent in sorted(self.low.items()):
            name = f"low_{key}.npz"
            agent.save(d / name, extra={"key": key})
            files[key] = name
        if self.high is not None:
            self.high.save(d / "high.npz", extra={"key": "high"})
        manifest = {
            "topology": self.graph.to_dict(),
            "fingerprint": self.fingerprint,
            "config_hash": self.config_hash,
            "env_config": self.env_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "low": files,
            "high": "high.npz" if self.high is not None else None,
            "summaries": {k: vars(v) for k, v in sorted(self.summaries.items())},
        }
        (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return d

    @classmethod
    def load(cls, directory: str | Path, require_complete: bool = True) -> "PolicyBank":
        d = Path(directory)
        try:
            manifest = json.loads((d / MANIFEST).read_text())
        except FileNotFoundError:
            raise PolicyBankError(f"no policy bank manifest in {d}") from None
        graph = graph_from_dict(manifest["topology"])
        if graph.fingerprint() != manifest["fingerprint"]:
            raise PolicyBankError("bank topology does not match its recorded fingerprint")
        bank = cls(graph, EnvConfig.from_dict(manifest["env_config"]),
                   TrainConfig.from_dict(manifest["train_config"]))
        for key, name in manifest["low"].items():
            bank.low[key] = DQNAgent.load(d / name)
        if manifest.get("high"):
            bank.high = DQNAgent.load(d / manifest["high"])
        bank.summaries = {k: LowSummary(**v) for k, v in manifest.get("summaries", {}).items()}
        if require_complete:
            bank.check_complete()
        return bank

    def check_complete(self) -> None:
        missing = self.missing_low()
        if missing:
            i, kind = missing[0]
            link = self.graph.links[i]
            raise PolicyBankError(
                f"policy bank incomplete: {len(missing)} low-level policies missing, "
                f"first is link {link[0]}->{link[1]} ({kind})"
            )
        if self.high is None:
            raise PolicyBankError("policy bank has no high-level policy")


# ----------------------------------------------------------------- training


def heldout_feasibility(env: SchedulingEnv, net: QNetwork, link_index: int, kind: str,
                        seed: int, n_states: int = 100) -> float:
    """Share of fresh task states where the greedy cell is not penalized."""
    task = LowTask(env, link_index, kind, seed)
    ok = total = 0
    while total < n_states:
        s = task.reset()
        task_action = int(np.argmax(net.forward(s)))
        if not any(env.apply_low(env.task, c) is not None for c in env.cells):
            continue
        total += 1
        ok += env.apply_low(env.task, env.cells[task_action]) is not None
    return ok / total


def train_low(graph: NetworkGraph, link_index: int, kind: str, env_config: EnvConfig,
              train_config: TrainConfig, tree: ForwardingTree | None = None):
    """Train one low-level policy; returns ``(agent, summary)``."""
    if kind not in KINDS:
        raise ConfigurationError(f"unknown action kind {kind!r}")
    env = SchedulingEnv(graph, tree, env_config)
    kind_id = KINDS.index(kind)
    seed = policy_seed(train_config.seed, 1, link_index, kind_id)
    agent = DQNAgent(env.low_state_size, env.n_cells, train_config.with_seed(seed))
    curve = agent.train(LowTask(env, link_index, kind, seed))
    agent.release_buffer()
    first, last = decile_means(curve.rewards)
    feas = heldout_feasibility(env, agent.net, link_index, kind, policy_seed(seed, 99))
    summary = LowSummary(len(curve.rewards), first, last, feas)
    if feas < 0.95:
        src, dst = graph.links[link_index]
        log.warning("low policy %d->%d (%s): greedy cell feasible on %.0f%% of held-out states",
                    src, dst, kind, 100 * feas)
    return agent, summary


def _train_low_job(args):
    graph_dict, link_index, kind, env_dict, train_dict = args
    agent, summary = train_low(graph_from_dict(graph_dict), link_index, kind,
                               EnvConfig.from_dict(env_dict), TrainConfig.from_dict(train_dict))
    return link_index, kind, agent, summary


def train_low_bank(bank: PolicyBank, jobs: int = 1, tasks=None, progress=None) -> PolicyBank:
    """Fill in every missing low-level policy, optionally across processes."""
    todo = tasks if tasks is not None else bank.missing_low()
    args = [(bank.graph.to_dict(), i, k, bank.env_config.to_dict(), bank.train_config.to_dict())
            for i, k in todo]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(_train_low_job, args)
            for done, (i, k, agent, summary) in enumerate(results, 1):
                bank.low[low_key(i, k)] = agent
                bank.summaries[low_key(i, k)] = summary
                if progress:
                    progress(done, len(args))
    else:
        for done, a in enumerate(args, 1):
            i, k, agent, summary = _train_low_job(a)
            bank.low[low_key(i, k)] = agent
            bank.summaries[low_key(i, k)] = summary
            if progress:
                progress(done, len(args))
    return bank


def train_high(bank: PolicyBank, train_config: TrainConfig | None = None) -> DQNAgent:
    """Train the link picker over the frozen low-level policies."""
    missing = bank.missing_low()
    if missing:
        i, kind = missing[0]
        link = bank.graph.links[i]
        raise PolicyBankError(f"missing low-level policy for link {link[0]}->{link[1]} ({kind})")
    cfg = train_config or bank.train_config
    seed = policy_seed(cfg.seed, 2)
    env = bank.make_env()
    agent = DQNAgent(env.high_state_size, env.n_high_actions, cfg.with_seed(seed))
    bank.high_log = agent.train(HighTask(env, bank, seed))
    agent.release_buffer()
    bank.high = agent
    return agent


def train_bank(graph: NetworkGraph, env_config: EnvConfig | None = None,
               train_config: TrainConfig | None = None, jobs: int = 1, progress=None) -> PolicyBank:
    bank = PolicyBank(graph, env_config or EnvConfig(), train_config or TrainConfig.desk())
    train_low_bank(bank, jobs=jobs, progress=progress)
    train_high(bank)
    return bank


# ---------------------------------------------------------------- inference


@dataclass(frozen=True)
class Rollout:
    schedule: TschSchedule  # cheapest schedule visited
    cost: float
    best_step: int
    costs: tuple  # cost after every applied step, starting with the reset state
    schedules: tuple
    stalled: bool  # first action was already penalized


def rollout(bank: PolicyBank, phi: Requirements, budget: int | None = None, seed: int = 0,
            policy: str = "greedy", rng: np.random.Generator | None = None) -> Rollout:
    """Run the hierarchy from a reset state and keep the cheapest visited schedule.

    ``policy="random"`` replaces both levels by uniform random choices drawn
    from ``rng``; it serves as the reference distribution for evaluation.
    """
    env = bank.make_env(noiseless=True)
    env.reset(seed=seed, phi=phi)
    budget = env.config.max_steps if budget is None else budget
    if policy == "greedy":
        bank.check_complete()
    elif policy == "random":
        rng = rng if rng is not None else np.random.default_rng(seed)
    else:
        raise ConfigurationError(f"unknown rollout policy {policy!r}")
    schedules = [env.schedule]
    costs = [env.current_cost()]
    stalled = False
    for step in range(budget):
        if policy == "greedy":
            a = int(np.argmax(bank.high.net.forward(env.high_state())))
        else:
            a = int(rng.integers(env.n_high_actions))
        out = env.step_high(a)
        if out is None:
            ha = env.pending
            if policy == "greedy":
                k = int(np.argmax(bank.low_policy(ha.link_index, ha.kind).forward(env.low_state())))
            else:
                k = int(rng.integers(env.n_cells))
            out = env.step_low(k)
        if out.penalized:
            stalled = step == 0
            break
        schedules.append(env.schedule)
        costs.append(out.cost)
        if out.terminal:
            break
    best = int(np.argmin(costs))
    return Rollout(schedules[best], costs[best], best, tuple(costs), tuple(schedules), stalled)


def synthesize(bank: PolicyBank, phi: Requirements, budget: int | None = None,
               seed: int = 0) -> Rollout:
    """Schedule for requirements ``phi`` from a greedy run of the trained hierarchy."""
    return rollout(bank, phi, budget, seed, "greedy")


def dispatch(bank: PolicyBank, action: int) -> tuple[int, str]:
    """(link index, kind) of the low-level policy that serves high action ``action``."""
    ha = decode_high(action, bank.n_links)
    bank.low_policy(ha.link_index, ha.kind)
    return ha.link_index, ha.kind

