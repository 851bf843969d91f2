import math
import random
from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tschrl.exceptions import ConfigurationError, TopologyError, UnknownNodeError
from tschrl.netmodel import (
    NodePosition,
    build_forwarding_tree,
    build_graph,
    graph_from_dict,
    load_topology,
    path_links,
    save_topology,
)

from conftest import random_connected_topology


def bfs_depths(g):
    depth = {1: 0}
    q = deque([1])
    while q:
        cur = q.popleft()
        for a, b in g.links:
            if a == cur and b not in depth:
                depth[b] = depth[cur] + 1
                q.append(b)
    return depth


def test_grid10_links_by_distance(grid10):
    assert grid10.has_link(3, 4)  # 30 m apart
    assert grid10.has_link(1, 3)
    assert not grid10.has_link(1, 6)  # 70 m apart
    assert grid10.has_link(2, 6)  # 30-40-50 triangle sits on the boundary
    assert not grid10.has_link(2, 4)  # 60 m
    assert len(grid10.links) == 46


def test_out_of_range_pair_has_no_links():
    g = build_graph([NodePosition(1, 0, 0), NodePosition(2, 0, 60)], 50, 100)
    assert g.links == ()


@pytest.mark.parametrize(
    "positions, tx",
    [
        ([NodePosition(1, 0, 0), NodePosition(1, 0, 10)], 50),
        ([NodePosition(1, 0, 0), NodePosition(2, 0, 10)], 0),
        ([NodePosition(1, 0, 0), NodePosition(2, 0, 10)], -5),
        ([NodePosition(1, 0, 0)], 50),
    ],
)
def test_build_graph_rejects_bad_config(positions, tx):
    with pytest.raises(ConfigurationError):
        build_graph(positions, tx, 100)


def test_grid10_tree(grid10_tree):
    assert grid10_tree.parent[5] == 2
    assert grid10_tree.parent[2] == grid10_tree.parent[3] == grid10_tree.parent[4] == 1
    assert path_links(grid10_tree, 8) == [(8, 5), (5, 2), (2, 1)]
    assert path_links(grid10_tree, 1) == []
    assert path_links(grid10_tree, 3) == [(3, 1)]


def test_two_node_chain():
    g = build_graph([NodePosition(1, 0, 0), NodePosition(2, 20, 0)], 50, 100)
    assert build_forwarding_tree(g).parent == {2: 1}


def test_unreachable_node_is_named():
    g = build_graph([NodePosition(1, 0, 0), NodePosition(2, 20, 0), NodePosition(7, 500, 0)], 50, 100)
    with pytest.raises(TopologyError, match="node 7"):
        build_forwarding_tree(g)


def test_path_links_unknown_node(grid10_tree):
    with pytest.raises(UnknownNodeError):
        path_links(grid10_tree, 42)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 12))
def test_symmetry_tree_optimality_determinism(seed, n):
    g, tree = random_connected_topology(random.Random(seed), n)
    links = set(g.links)
    assert all((b, a) in links for a, b in links)
    assert len(links) % 2 == 0
    for a, b in links:
        assert math.dist(*[(g.position(x).x, g.position(x).y) for x in (a, b)]) <= 50 + 1e-9

    depth = bfs_depths(g)
    for node in g.node_ids:
        path = path_links(tree, node)
        assert len(path) == depth[node]
        assert all(l in links for l in path)

    g2, tree2 = random_connected_topology(random.Random(seed), n)
    assert g2 == g and tree2.parent == tree.parent


def test_topology_roundtrip(tmp_path, grid10):
    path = tmp_path / "topo.json"
    save_topology(grid10, path)
    assert load_topology(path) == grid10


def test_topology_missing_field():
    with pytest.raises(ConfigurationError):
        graph_from_dict({"nodes": [{"id": 1, "x": 0, "y": 0}]})
