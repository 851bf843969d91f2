import random
import sys

import pytest

from tschrl.dqn import TrainConfig
from tschrl.env import EnvConfig
from tschrl.hrl import train_bank
from tschrl.netmodel import NodePosition, build_forwarding_tree, build_graph, default_topology
from tschrl.schedule import TschSchedule, add_link


@pytest.fixture(scope="session")
def grid10():
    return default_topology()


@pytest.fixture(scope="session")
def grid10_tree(grid10):
    return build_forwarding_tree(grid10)


def chain(n, spacing=30.0, tx_range=50.0, if_range=100.0):
    """Sink at the origin and ``n - 1`` nodes in a straight line."""
    pos = [NodePosition(i + 1, 0.0, spacing * i) for i in range(n)]
    return build_graph(pos, tx_range, if_range)


def random_connected_topology(rng: random.Random, n_nodes: int):
    """Nodes grown one at a time, each within range of an earlier node."""
    pts = [(0.0, 0.0)]
    while len(pts) < n_nodes:
        bx, by = rng.choice(pts)
        x, y = bx + rng.uniform(-45, 45), by + rng.uniform(-45, 45)
        if (x - bx) ** 2 + (y - by) ** 2 <= 50.0**2 and (x, y) not in pts:
            pts.append((round(x, 3), round(y, 3)))
    g = build_graph([NodePosition(i + 1, x, y) for i, (x, y) in enumerate(pts)], 50.0, 100.0)
    return g, build_forwarding_tree(g)


def random_tree_schedule(rng: random.Random, tree, size=17, channels=2, max_cells=4):
    """Random feasible schedule using only (child, parent) links."""
    s = TschSchedule(size, channels, 10.0)
    for link in tree.edges:
        for _ in range(rng.randint(0, max_cells)):
            cell = (rng.randrange(size), rng.randrange(channels))
            s, _ = add_link(s, link[0], link[1], cell)
    return s


# just enough training to exercise the machinery on a three-node chain
TINY = TrainConfig(total_steps=400, buffer_size=400, batch_size=16, learning_starts=50,
                   target_update_interval=100, hidden=(16,), optimizer="adam", seed=3)


@pytest.fixture(scope="session")
def small_bank():
    return train_bank(chain(3), EnvConfig(), TINY)


@pytest.fixture(scope="session")
def small_bank_dir(small_bank, tmp_path_factory):
    return small_bank.save(tmp_path_factory.mktemp("bank") / "chain3")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: (int(k.rstrip("ab")), k)):
        passed, detail = results[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key:>3}  {detail}")
