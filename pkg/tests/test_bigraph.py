import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynmatch.bigraph import (
    BiGraph,
    PrimeHashGraph,
    clone_graph,
    collision_blocks,
    expansion_check,
    expansion_check_fast,
    graph_from_lines,
    graph_to_lines,
    induced,
    max_collision_blocks,
    offline_matching_check,
    prime_hash_graph,
    private_neighbors,
    product,
    sample_random,
    union,
)
from dynmatch.fixtures import incremental_only_graph, offline_only_graph


@st.composite
def small_graphs(draw, max_left=5, max_right=4):
    left = draw(st.integers(0, max_left))
    right = draw(st.integers(0, max_right))
    adjacency = [
        draw(st.lists(st.integers(0, right - 1), max_size=right, unique=True))
        if right else []
        for _ in range(left)
    ]
    return BiGraph(left, right, adjacency)


def complete(n, m):
    return BiGraph(n, m, [tuple(range(m)) for _ in range(n)])


# -- construction -----------------------------------------------------------


def test_build_demo_graphs():
    g = offline_only_graph()
    assert (g.left_size, g.right_size, g.degree) == (3, 2, 2)
    assert not g.left_regular
    h = incremental_only_graph()
    assert h.degree == 2 and not h.left_regular
    assert h.neighbors(1) == (0, 1)


def test_build_empty_graph():
    g = BiGraph(0, 0, [])
    assert g.degree == 0 and g.left_regular
    assert expansion_check(g, 1, 0).holds


def test_build_rejects_bad_adjacency():
    with pytest.raises(ValueError, match="out of range"):
        BiGraph(1, 2, [(0, 2)])
    with pytest.raises(ValueError, match="duplicate"):
        BiGraph(1, 2, [(1, 1)])


# -- clone ---------------------------------------------------------------------


def test_clone_identity_and_indexing():
    g = offline_only_graph()
    assert clone_graph(g, 1) == g
    g2 = clone_graph(g, 2)
    assert g2.right_size == 4 and g2.degree == 4
    assert g2.neighbors(1) == (0, 1, 2, 3)  # u0, v0, u1, v1


def test_clone_rejects_zero():
    with pytest.raises(ValueError):
        clone_graph(offline_only_graph(), 0)


def test_clone_expansion_scaling():
    g = sample_random(12, 12, 3, seed=7)
    w = expansion_check(g, 1, 3)
    c = clone_graph(g, 3)
    assert expansion_check(c, 3, 3).holds == w.holds


@settings(max_examples=40, deadline=None)
@given(small_graphs(), st.integers(1, 3), st.integers(1, 3))
def test_clone_expansion_duality(g, copies, K):
    for e in (1, 2):
        lhs = expansion_check(g, e, K).holds
        rhs = expansion_check(clone_graph(g, copies), e * copies, K).holds
        assert lhs == rhs


# -- product ---------------------------------------------------------------------


def test_product_with_complete_star_is_identity():
    g = offline_only_graph()
    star = complete(3, 1)
    p = product(g, star)
    assert p.adjacency == g.adjacency and p.right_size == g.right_size


def test_product_pairs():
    g = offline_only_graph()
    p = product(g, g)
    # node b: (u,u), (u,v), (v,u), (v,v)
    assert p.neighbors(1) == (0, 1, 2, 3)


@settings(max_examples=40, deadline=None)
@given(small_graphs(), small_graphs())
def test_product_neighborhood_sizes(g1, g2):
    n = min(g1.left_size, g2.left_size)
    g1 = BiGraph(n, g1.right_size, g1.adjacency[:n])
    g2 = BiGraph(n, g2.right_size, g2.adjacency[:n])
    p = product(g1, g2)
    for x in range(n):
        assert len(p.neighbors(x)) == len(g1.neighbors(x)) * len(g2.neighbors(x))


# -- union ------------------------------------------------------------------------


def test_union_with_empty_right():
    g = offline_only_graph()
    empty = BiGraph(3, 0, [(), (), ()])
    assert union(g, empty).adjacency == g.adjacency


def test_union_with_self_equals_two_clone():
    g = incremental_only_graph()
    assert union(g, g) == clone_graph(g, 2)


@settings(max_examples=40, deadline=None)
@given(small_graphs(), small_graphs())
def test_union_edge_count(g1, g2):
    n = min(g1.left_size, g2.left_size)
    g1 = BiGraph(n, g1.right_size, g1.adjacency[:n])
    g2 = BiGraph(n, g2.right_size, g2.adjacency[:n])
    u = union(g1, g2)
    assert u.edge_count() == g1.edge_count() + g2.edge_count()
    assert u.degree <= g1.degree + g2.degree


# -- induced view ------------------------------------------------------------------


def test_induced_full_view_is_identity():
    g = offline_only_graph()
    v = induced(g, set(), set(range(g.right_size)))
    for x in range(3):
        assert v.neighbors(x) == g.neighbors(x)


def test_induced_exclusion():
    g = offline_only_graph()
    v = induced(g, {1}, {0, 1})
    assert v.neighbors(1) == ()
    assert v.neighbors(0) == (0,)
    w = induced(g, set(), {1})
    assert w.neighbors(0) == () and w.neighbors(1) == (1,)
    # base untouched
    assert g.neighbors(1) == (0, 1)


# -- sample_random -------------------------------------------------------------------


def test_sample_complete_when_degree_is_right_size():
    g = sample_random(4, 3, 3, seed=0)
    assert g == complete(4, 3)


def test_sample_determinism():
    a = sample_random(20, 15, 4, seed=42)
    b = sample_random(20, 15, 4, seed=42)
    assert a == b
    c = sample_random(20, 15, 4, seed=43)
    assert a != c


def test_sample_rejects_excess_degree():
    with pytest.raises(ValueError):
        sample_random(3, 2, 3, seed=0)


# -- expansion check -------------------------------------------------------------------


def test_expansion_demo_graph():
    g = offline_only_graph()
    assert expansion_check(g, 1, 2).holds
    w = expansion_check(g, 1, 3)
    assert not w.holds and w.violating_set == (0, 1, 2) and w.neighborhood_size == 2


def test_expansion_complete():
    n = 4
    assert expansion_check(complete(n, n), n, 1).holds


def test_expansion_witness_recomputes():
    g = BiGraph(3, 3, [(0,), (0,), (0, 1, 2)])
    w = expansion_check(g, 2, 2)
    assert not w.holds
    seen = set()
    for x in w.violating_set:
        seen.update(g.neighbors(x))
    assert len(seen) == w.neighborhood_size
    assert len(seen) < 2 * len(w.violating_set)


@settings(max_examples=60, deadline=None)
@given(small_graphs(), st.integers(1, 4))
def test_fast_checker_agrees_with_reference(g, K):
    for e in (1, 1.5, 2, 3):
        assert expansion_check_fast(g, e, K) == expansion_check(g, e, K).holds


def test_fast_checker_wide_graph():
    g = sample_random(25, 300, 6, seed=3)
    for e in (3, 5):
        assert expansion_check_fast(g, e, 4) == expansion_check(g, e, 4).holds


# -- offline matching / Hall ---------------------------------------------------------------


def test_offline_matching_demo():
    g = offline_only_graph()
    assert offline_matching_check(g, 2)
    assert not offline_matching_check(g, 3)


def all_graphs(max_left, max_right):
    from itertools import product as iproduct

    for left in range(max_left + 1):
        for right in range(max_right + 1):
            subsets = []
            for mask in range(1 << right):
                subsets.append(tuple(y for y in range(right) if mask >> y & 1))
            for rows in iproduct(subsets, repeat=left):
                yield BiGraph(left, right, list(rows))


def test_hall_equivalence_small_exhaustive():
    # all graphs with <= 3 left, <= 2 right here; the acceptance suite
    # covers the full <= 4 x <= 3 sweep
    for g in all_graphs(3, 2):
        for K in range(1, g.left_size + 1):
            assert offline_matching_check(g, K) == expansion_check(g, 1, K).holds


@settings(max_examples=60, deadline=None)
@given(small_graphs(), st.integers(1, 4))
def test_hall_equivalence_property(g, K):
    assert offline_matching_check(g, K) == expansion_check(g, 1, K).holds


# -- private neighbors ------------------------------------------------------------------------


def test_private_neighbors_demo():
    g = offline_only_graph()
    assert private_neighbors(g, {1}) == {0, 1}
    assert private_neighbors(g, {0, 1}) == {1}


@settings(max_examples=80, deadline=None)
@given(small_graphs(), st.sets(st.integers(0, 4)))
def test_private_neighbor_lower_bound(g, S):
    S = {x for x in S if x < g.left_size}
    p = private_neighbors(g, S)
    seen = set()
    for x in S:
        seen.update(g.neighbors(x))
    assert len(p) >= 2 * len(seen) - g.degree * len(S)


# -- prime hashing ------------------------------------------------------------------------------


def test_prime_hash_tiny_universe():
    g = prime_hash_graph(2, 2, 2)
    assert g.neighbors(0) == (0, 2)
    assert g.neighbors(1) == (1, 3)
    assert not set(g.neighbors(0)) & set(g.neighbors(1))


def test_prime_hash_collision_count():
    g = PrimeHashGraph(20, 3, 2)  # primes 2, 3, 5
    assert collision_blocks(g, 6, 12) == 2  # agree mod 2 and mod 3
    assert g.primes == (2, 3, 5)


def test_prime_hash_collision_bound_large():
    bound = max_collision_blocks(1 << 16, 17)
    assert bound == 3
    g = PrimeHashGraph(1 << 16, 12, 17)
    rng = np.random.default_rng(1)
    xs = rng.integers(0, 1 << 16, size=400)
    ys = rng.integers(0, 1 << 16, size=400)
    for x, y in zip(xs.tolist(), ys.tolist()):
        if x != y:
            assert collision_blocks(g, x, y) <= bound


def test_prime_hash_materialize_matches_lazy():
    lazy = PrimeHashGraph(30, 4, 3)
    solid = lazy.materialize()
    for x in range(30):
        assert solid.neighbors(x) == lazy.neighbors(x)
        for j in range(4):
            assert lazy.neighbor(x, j) == solid.adjacency[x][j]
    assert solid.left_regular


def test_prime_hash_positions_vectorized():
    g = PrimeHashGraph(100, 5, 7)
    for x in (0, 13, 99):
        assert tuple(g.positions(x).tolist()) == g.neighbors(x)


# -- file format ------------------------------------------------------------------------------------


def test_graph_roundtrip_lines():
    g = incremental_only_graph()
    lines = graph_to_lines(g)
    assert lines[0] == "bigraph 3 2"
    assert graph_from_lines(lines) == g
    assert graph_to_lines(graph_from_lines(lines)) == lines


def test_graph_roundtrip_empty_rows(tmp_path):
    from dynmatch.bigraph import load_graph, save_graph

    g = BiGraph(3, 4, [(), (0, 3), ()])
    path = tmp_path / "g.graph"
    save_graph(g, path)
    assert load_graph(path) == g
    text = path.read_text()
    save_graph(load_graph(path), path)
    assert path.read_text() == text


@settings(max_examples=50, deadline=None)
@given(small_graphs())
def test_graph_roundtrip_property(g):
    assert graph_from_lines(graph_to_lines(g)) == g


def test_graph_rejects_bad_header():
    with pytest.raises(ValueError):
        graph_from_lines(["digraph 1 1", "0"])
    with pytest.raises(ValueError):
        graph_from_lines(["bigraph 2 1", "0"])
