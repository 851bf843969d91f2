import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tschrl.dqn import (
    DQNAgent,
    QNetwork,
    ReplayBuffer,
    SGD,
    TrainConfig,
    bellman_targets,
    epsilon_at,
    select_action,
    td_loss_and_grads,
    train_step,
)
from tschrl.exceptions import ConfigurationError, ContractError


def fixed_q(values):
    """Single linear layer whose output ignores the input."""
    net = QNetwork((1, len(values)), zero_last=True)
    net.biases[0][:] = values
    return net


def test_zero_last_layer_gives_zero_q():
    net = QNetwork((5, 8, 3), np.random.default_rng(0), zero_last=True)
    assert np.array_equal(net.forward(np.random.default_rng(1).normal(size=5)), np.zeros(3))


def test_forward_is_deterministic():
    s = np.linspace(0, 1, 7)
    a = QNetwork((7, 16, 4), np.random.default_rng(3)).forward(s)
    b = QNetwork((7, 16, 4), np.random.default_rng(3)).forward(s)
    assert a.tobytes() == b.tobytes()


def test_input_width_is_checked():
    with pytest.raises(ContractError):
        QNetwork((4, 3)).forward(np.zeros(5))


def loss_at(net, s, a, y):
    return td_loss_and_grads(net, s, a, y)[0]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), depth=st.integers(1, 3), batch=st.integers(1, 6))
def test_gradients_match_central_differences(seed, depth, batch):
    rng = np.random.default_rng(seed)
    sizes = (int(rng.integers(2, 6)), *[int(rng.integers(2, 7)) for _ in range(depth)], int(rng.integers(2, 5)))
    net = QNetwork(sizes, rng)
    for b in net.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    s = rng.normal(size=(batch, sizes[0]))
    a = rng.integers(0, sizes[-1], size=batch)
    y = rng.normal(size=batch)
    _, grads = td_loss_and_grads(net, s, a, y)
    h = 1e-5
    for p, g in zip(net.params, grads):
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_at(net, s, a, y)
            p[idx] = old - h
            down = loss_at(net, s, a, y)
            p[idx] = old
            fd[idx] = (up - down) / (2 * h)
        scale = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-8)
        assert np.linalg.norm(fd - g) / scale <= 1e-4


def test_greedy_tie_takes_lowest_index():
    assert select_action(fixed_q([0.1, 0.9, 0.9]), [0.0], 0.0, np.random.default_rng(0)) == 1


def test_full_exploration_is_uniform():
    rng = np.random.default_rng(0)
    net = fixed_q([0.0, 5.0, 0.0, 0.0])
    n = 100_000
    counts = np.bincount([select_action(net, [0.0], 1.0, rng) for _ in range(n)], minlength=4)
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) <= 3 * sigma)


def test_epsilon_schedule():
    cfg = TrainConfig(total_steps=1000, eps_min=0.01, exploration_fraction=0.7)
    assert epsilon_at(0, cfg) == 1.0
    assert epsilon_at(350, cfg) == pytest.approx(0.505)
    assert epsilon_at(700, cfg) == pytest.approx(0.01)
    assert epsilon_at(999, cfg) == pytest.approx(0.01)


def test_single_terminal_transition_update():
    net = QNetwork((2, 3), zero_last=True)
    target = net.copy()
    buf = ReplayBuffer(4, 2)
    buf.add([1.0, 0.0], 1, 2.0, [0.0, 1.0], True)
    cfg = TrainConfig(batch_size=1, buffer_size=4, learning_rate=0.1, gamma=0.8)
    loss = train_step(net, target, buf, cfg, np.random.default_rng(0), SGD(cfg.learning_rate))
    assert loss == pytest.approx(4.0)
    q = net.forward([1.0, 0.0])[1]
    assert 0.0 < q <= 2.0


def test_zero_discount_targets_are_rewards():
    target = QNetwork((3, 4, 2), np.random.default_rng(0))
    r = np.array([0.5, -1.0, 2.0])
    out = bellman_targets(target, r, np.ones((3, 3)), np.array([False, False, True]), 0.0)
    assert np.array_equal(out, r)


def test_terminal_transitions_ignore_bootstrap():
    low = fixed_q([0.0, 0.0])
    high = fixed_q([50.0, 80.0])
    r = np.array([1.0, 1.0])
    s2 = np.zeros((2, 1))
    done = np.array([True, False])
    a = bellman_targets(low, r, s2, done, 0.9)
    b = bellman_targets(high, r, s2, done, 0.9)
    assert a[0] == b[0] == 1.0 and b[1] > a[1]


def test_empty_buffer_is_a_noop():
    net = QNetwork((2, 2))
    before = [p.copy() for p in net.params]
    assert train_step(net, net.copy(), ReplayBuffer(4, 2), TrainConfig(batch_size=2, buffer_size=4),
                      np.random.default_rng(0), SGD(0.1)) is None
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params))


def test_replay_sampling_is_uniform():
    buf = ReplayBuffer(50, 1)
    for i in range(120):
        buf.add([i], 0, 0.0, [i], False)
    assert len(buf) == 50
    idx = buf.sample_indices(50_000, np.random.default_rng(7))
    assert stats.chisquare(np.bincount(idx, minlength=50)).pvalue > 0.01


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=10, buffer_size=5)
    with pytest.raises(ConfigurationError):
        TrainConfig(gamma=1.5)
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0.0)


class TwoStateMDP:
    """Deterministic continuing chain: staying in 0 pays 0, jumping to 1 pays 1,
    returning from 1 pays 2, staying in 1 pays 0."""

    nxt = np.array([[0, 1], [0, 1]])
    rew = np.array([[0.0, 1.0], [2.0, 0.0]])

    def reset(self):
        self.s = 0
        return np.eye(2)[self.s]

    def step(self, a):
        r = self.rew[self.s, a]
        self.s = self.nxt[self.s, a]
        return np.eye(2)[self.s], r, False

    @classmethod
    def q_star(cls, gamma, iters=2000):
        q = np.zeros((2, 2))
        for _ in range(iters):
            q = cls.rew + gamma * q.max(axis=1)[cls.nxt]
        return q


def test_converges_to_value_iteration():
    start = time.perf_counter()
    cfg = TrainConfig(total_steps=30_000, buffer_size=5000, batch_size=32, learning_rate=0.01,
                      gamma=0.8, learning_starts=200, eps_start=1.0, eps_min=1.0,
                      exploration_fraction=1.0, target_update_interval=250, train_freq=1,
                      hidden=(16,), seed=0)
    agent = DQNAgent(2, 2, cfg)
    agent.train(TwoStateMDP())
    q = np.array([agent.net.forward(np.eye(2)[i]) for i in range(2)])
    assert np.max(np.abs(q - TwoStateMDP.q_star(0.8))) < 0.05
    assert time.perf_counter() - start < 30


class Bandit:
    def __init__(self):
        self.rng = np.random.default_rng(0)

    def reset(self):
        return self.rng.normal(size=3)

    def step(self, a):
        return self.rng.normal(size=3), float(a == 2), True


def test_training_is_reproducible_and_checkpoints_roundtrip(tmp_path):
    cfg = TrainConfig(total_steps=600, buffer_size=200, batch_size=16, learning_starts=50,
                      target_update_interval=100, hidden=(8,), seed=11)
    a, b = DQNAgent(3, 4, cfg), DQNAgent(3, 4, cfg)
    a.train(Bandit())
    b.train(Bandit())
    assert all(np.array_equal(x, y) for x, y in zip(a.net.params, b.net.params))
    path = tmp_path / "agent.npz"
    a.save(path)
    c = DQNAgent.load(path)
    assert c.steps == a.steps and c.cfg == a.cfg
    assert all(np.array_equal(x, y) for x, y in zip(a.target.params, c.target.params))
    s = np.ones(3)
    assert [a.act(s) for _ in range(20)] == [c.act(s) for _ in range(20)]
