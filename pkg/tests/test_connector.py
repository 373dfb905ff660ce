import random

import pytest

from dynmatch.connector import (
    LevelSpec,
    Network,
    complete_bipartite,
    default_graph_factory,
)
from dynmatch.dynamic import FFPMatcher, ffp_premises_hold
from dynmatch.strategy import FirstFreeMatcher


def test_depth_one_is_the_complete_stage():
    net = Network(4, 1, seed=0)
    assert net.N == 4 and not net.levels
    assert net.edge_count() == net.C * 4 * 4
    assert net.edge_count() <= net.edge_bound()
    net.connect(0, 3)
    assert net.last_connect_requests == 0
    assert (1, (), 3) in net.trees.owner


def test_level_shapes_and_bound():
    for B, t in ((2, 2), (3, 2), (2, 3)):
        net = Network(B, t, seed=0)
        for d, spec in net.levels.items():
            assert spec.graph.left_size == net.C * B ** (t - d + 1)
            assert spec.graph.right_size <= net.C * B ** (t - d)
            assert spec.capacity == B ** (t - d)
        assert net.edge_count() <= net.edge_bound()


def test_factory_verifies_sampled_levels():
    make = default_graph_factory(2, 3, seed=0)
    spec = make(1)
    if spec.kind == "sampled":
        ok, _ = ffp_premises_hold(spec.graph, spec.capacity)
        assert ok
    m = spec.matcher_factory()
    assert isinstance(m, (FFPMatcher, FirstFreeMatcher))


def test_single_connect_builds_a_path():
    net = Network(2, 3, seed=0)
    net.connect(5, 6)
    tree = net.trees.trees[5]
    assert tree.outputs == {6}
    # path root -> two gateways -> output leaf
    assert len(tree.nodes) == 4
    assert net.last_connect_requests == 2


def test_tree_extension_reuses_gateways():
    net = Network(2, 3, seed=0)
    net.connect(1, 4)  # digits (1, 0, 0)
    first = net.requests_made
    net.connect(1, 5)  # digits (1, 0, 1): shares levels 1 and 2
    assert net.requests_made == first  # both gateways reused
    net.connect(1, 6)  # digits (1, 1, 0): level-2 gateway differs
    assert net.requests_made == first + 1
    tree = net.trees.trees[1]
    assert tree.outputs == {4, 5, 6}
    net.trees.audit_disjoint()


def test_connect_rejects_taken_output():
    net = Network(2, 2, seed=0)
    net.connect(0, 1)
    with pytest.raises(ValueError, match="already lies"):
        net.connect(2, 1)


def test_disconnect_whole_tree_releases_matchers():
    net = Network(2, 2, seed=0)
    net.connect(0, 1)
    net.connect(0, 2)
    net.disconnect(0)
    assert not net.trees.trees
    assert not net.trees.owner
    for matcher in net._matchers.values():
        records = matcher.matches if hasattr(matcher, "matches") else matcher._records
        assert not records


def test_leaf_prune_keeps_shared_trunk():
    net = Network(2, 3, seed=0)
    net.connect(1, 4)
    net.connect(1, 5)  # shares the trunk through levels 1 and 2
    net.disconnect(1, 5)
    tree = net.trees.trees[1]
    assert tree.outputs == {4}
    net.trees.audit_disjoint()
    net.disconnect(1, 4)
    assert 1 not in net.trees.trees
    assert not net.trees.owner


def test_connection_game_soak_all_shapes():
    for B, t in ((2, 2), (3, 2), (2, 3)):
        net = Network(B, t, seed=1)
        rng = random.Random(13)
        connected = {}
        for _ in range(800):
            if connected and rng.random() < 0.45:
                y = rng.choice(sorted(connected))
                x = connected[y]
                net.disconnect(x)
                connected = {yy: xx for yy, xx in connected.items() if xx != x}
            else:
                free = [y for y in range(net.N) if y not in connected]
                if not free:
                    continue
                y = rng.choice(free)
                x = rng.randrange(net.N)
                net.connect(x, y)
                connected[y] = x
            net.trees.audit_disjoint()
            assert net.last_connect_requests <= t


def test_per_instance_capacity_respected():
    net = Network(2, 2, seed=1)
    # connect every output: each level-1 instance serves at most B outputs
    for y in range(net.N):
        net.connect(y, y)
    for (d, path), matcher in net._matchers.items():
        records = matcher.matches if hasattr(matcher, "matches") else matcher._records
        assert len(records) <= net.levels[d].capacity


def test_dump_format():
    net = Network(2, 2, seed=0)
    net.connect(3, 0)
    lines = net.dump_lines()
    assert lines[0].startswith("network B=2 t=2 N=4")
    assert any(line.startswith("LEVEL 1 ") for line in lines)
    assert any(line == "TREE 3:" for line in lines)
    path_lines = [l for l in lines if l.startswith("  L0")]
    assert path_lines and "->" in path_lines[0]


def test_custom_factory_shape_validation():
    def bad(d):
        return LevelSpec(complete_bipartite(3, 3), 2, lambda: FirstFreeMatcher(
            complete_bipartite(3, 3)), "complete")

    with pytest.raises(ValueError, match="shape"):
        Network(2, 2, graph_factory=bad)
