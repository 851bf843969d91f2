"""Deep Q-learning on numpy: dense network, replay memory, target network.

Gradients are derived by hand for a ReLU multilayer perceptron trained on
mean squared TD error. The whole training path draws randomness from one
``numpy.random.Generator`` so a run is bit-reproducible from its seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, ContractError, PolicyBankError

CHECKPOINT_VERSION = 1


# ----------------------------------------------------------------- network


class QNetwork:
    """Fully connected ReLU network mapping a state to one value per action."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, zero_last: bool = False):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ConfigurationError(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        if zero_last:
            self.weights[-1][:] = 0.0

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "QNetwork":
        twin = QNetwork.__new__(QNetwork)
        twin.sizes = self.sizes
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def load_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def _check(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if s.shape[-1] != self.sizes[0]:
            raise ContractError(f"state width {s.shape[-1]} != network input {self.sizes[0]}")
        return s

    def forward(self, s) -> np.ndarray:
        h = self._check(s)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def forward_cached(self, s):
        acts = [self._check(s)]
        last = len(self.weights) - 1
        h = acts[0]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def backward(self, acts, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of a scalar loss given ``dL/d(output)``, ordered like :attr:`params`."""
        grads = [None] * (2 * len(self.weights))
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        return grads

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params)


def td_loss_and_grads(net: QNetwork, states, actions, targets):
    """Mean squared error between Q(s, a) and fixed targets, with its gradient."""
    acts = net.forward_cached(states)
    q = acts[-1]
    idx = np.arange(len(actions))
    err = q[idx, actions] - targets
    loss = float(np.mean(err**2))
    grad_q = np.zeros_like(q)
    grad_q[idx, actions] = 2.0 * err / len(actions)
    return loss, net.backward(acts, grad_q)


# -------------------------------------------------------------- optimizers


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g

    def state(self) -> dict:
        return {}

    def load_state(self, state: dict) -> None:
        pass


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params, grads) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        if self.m is None:
            return {"t": np.array(self.t)}
        out = {"t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"], out[f"v{i}"] = m, v
        return out

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        n = sum(1 for k in state if k.startswith("m"))
        if n:
            self.m = [np.array(state[f"m{i}"]) for i in range(n)]
            self.v = [np.array(state[f"v{i}"]) for i in range(n)]


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ConfigurationError(f"unknown optimizer {name!r}")


# ------------------------------------------------------------------ replay


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, state_size: int):
        if capacity < 1:
            raise ConfigurationError("replay capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_size))
        self.next_states = np.zeros((capacity, state_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._pos = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a: int, r: float, s2, terminal: bool) -> None:
        i = self._pos
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s2
        self.terminals[i] = terminal
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.size, size=batch)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = self.sample_indices(batch, rng)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminals[idx])


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 500_000
    buffer_size: int = 100_000
    batch_size: int = 512
    learning_rate: float = 1e-3
    gamma: float = 0.8
    learning_starts: int = 5000
    exploration_fraction: float = 0.7
    eps_start: float = 1.0
    eps_min: float = 0.01
    target_update_interval: int = 10_000
    train_freq: int = 4
    hidden: tuple[int, ...] = (128, 128)
    optimizer: str = "sgd"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ConfigurationError("discount must lie in [0, 1]")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning rate must be positive")
        if self.batch_size > self.buffer_size:
            raise ConfigurationError("batch size cannot exceed replay capacity")
        if min(self.total_steps, self.train_freq, self.target_update_interval, self.batch_size) < 1:
            raise ConfigurationError("step counts and batch size must be positive")
        if not 0 < self.exploration_fraction <= 1 or not 0 <= self.eps_min <= self.eps_start <= 1:
            raise ConfigurationError("invalid exploration schedule")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Budget that trains one policy in well under a minute on one core."""
        base = dict(total_steps=20_000, buffer_size=20_000, batch_size=64,
                    learning_starts=1000, target_update_interval=1000, optimizer="adam")
        base.update(overrides)
        return cls(**base)

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigurationError(f"unknown training options: {sorted(extra)}")
        return cls(**data)


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Linear decay from ``eps_start`` to ``eps_min`` over the exploration window."""
    horizon = cfg.exploration_fraction * cfg.total_steps
    frac = min(1.0, step / horizon)
    return cfg.eps_start + frac * (cfg.eps_min - cfg.eps_start)


def select_action(net: QNetwork, s, eps: float, rng: np.random.Generator) -> int:
    n_actions = net.sizes[-1]
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(n_actions))
    return int(np.argmax(net.forward(s)))


def bellman_targets(target: QNetwork, rewards, next_states, terminals, gamma: float) -> np.ndarray:
    if gamma == 0:
        return rewards.astype(np.float64)
    boot = target.forward(next_states).max(axis=1)
    return rewards + gamma * np.where(terminals, 0.0, boot)


def train_step(net: QNetwork, target: QNetwork, buffer: ReplayBuffer, cfg: TrainConfig,
               rng: np.random.Generator, optimizer) -> float | None:
    """One minibatch update; returns the loss, or None when the buffer is empty."""
    if len(buffer) == 0:
        return None
    s, a, r, s2, done = buffer.sample(min(cfg.batch_size, len(buffer)), rng)
    y = bellman_targets(target, r, s2, done, cfg.gamma)
    loss, grads = td_loss_and_grads(net, s, a, y)
    optimizer.step(net.params, grads)
    if not net.all_finite():
        raise FloatingPointError("non-finite network parameters after update")
    return loss


# ------------------------------------------------------------------- agent


@dataclass
class EpisodeLog:
    rewards: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    losses: list = field(default_factory=list)


class DQNAgent:
    """Online network, target network, replay memory and schedule counters."""

    def __init__(self, state_size: int, n_actions: int, cfg: TrainConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.net = QNetwork((state_size, *cfg.hidden, n_actions), self.rng)
        self.target = self.net.copy()
        self._buffer: ReplayBuffer | None = None
        self.optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
        self.steps = 0
        self.updates = 0

    @property
    def buffer(self) -> ReplayBuffer:
        if self._buffer is None:
            self._buffer = ReplayBuffer(self.cfg.buffer_size, self.net.sizes[0])
        return self._buffer

    def release_buffer(self) -> None:
        """Drop the replay memory once training is over."""
        self._buffer = None

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.steps, self.cfg)

    def act(self, s, explore: bool = True) -> int:
        return select_action(self.net, s, self.epsilon if explore else 0.0, self.rng)

    def greedy(self, s) -> int:
        return int(np.argmax(self.net.forward(s)))

    def observe(self, s, a: int, r: float, s2, terminal: bool) -> float | None:
        """Store a transition and run the update schedule for this env step."""
        self.buffer.add(s, a, r, s2, terminal)
        self.steps += 1
        loss = None
        if self.steps > self.cfg.learning_starts and self.steps % self.cfg.train_freq == 0:
            loss = train_step(self.net, self.target, self.buffer, self.cfg, self.rng, self.optimizer)
            self.updates += 1
        if self.steps % self.cfg.target_update_interval == 0:
            self.target.load_from(self.net)
        return loss

    def train(self, task, total_steps: int | None = None) -> EpisodeLog:
        """Run epsilon-greedy episodes on ``task`` until the step budget is spent.

        ``task`` needs ``reset() -> state`` and ``step(a) -> (state, reward, terminal)``.
        """
        budget = self.cfg.total_steps if total_steps is None else total_steps
        log = EpisodeLog()
        s = task.reset()
        ep_reward, ep_len = 0.0, 0
        for _ in range(budget):
            a = self.act(s)
            s2, r, done = task.step(a)
            loss = self.observe(s, a, r, s2, done)
            if loss is not None:
                log.losses.append(loss)
            ep_reward += r
            ep_len += 1
            s = s2
            if done:
                log.rewards.append(ep_reward)
                log.lengths.append(ep_len)
                ep_reward, ep_len = 0.0, 0
                s = task.reset()
        return log

    # ------------------------------------------------------------ persistence

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        arrays = {}
        for i, p in enumerate(self.net.params):
            arrays[f"theta_{i}"] = p
        for i, p in enumerate(self.target.params):
            arrays[f"target_{i}"] = p
        for k, v in self.optimizer.state().items():
            arrays[f"opt_{k}"] = v
        meta = {
            "version": CHECKPOINT_VERSION,
            "sizes": list(self.net.sizes),
            "steps": self.steps,
            "updates": self.updates,
            "config": self.cfg.to_dict(),
            "rng": self.rng.bit_generator.state,
            "extra": extra or {},
        }
        arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "DQNAgent":
        try:
            data = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise PolicyBankError(f"cannot read checkpoint {path}: {exc}") from None
        with data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise PolicyBankError(f"checkpoint {path} has unsupported version {meta.get('version')}")
            sizes = meta["sizes"]
            cfg = TrainConfig.from_dict(meta["config"])
            agent = cls(sizes[0], sizes[-1], cfg)
            for i, p in enumerate(agent.net.params):
                p[...] = data[f"theta_{i}"]
            for i, p in enumerate(agent.target.params):
                p[...] = data[f"target_{i}"]
            opt = {k[4:]: data[k] for k in data.files if k.startswith("opt_")}
            if opt:
                agent.optimizer.load_state(opt)
        agent.steps = meta["steps"]
        agent.updates = meta["updates"]
        agent.rng.bit_generator.state = meta["rng"]
        agent.meta = meta["extra"]
        return agent
