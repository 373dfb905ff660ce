"""Constant-depth non-blocking connectors driven by dynamic matching.

A depth-t network for N = B^t outputs is built recursively: level d
(1-based from the inputs) carries B^d output-disjoint instances, each the
concatenation of a matching graph and the next level; the last hop is a
complete bipartite stage.  Requests are routed by the digits of the
output index: entering an instance, the tree either reuses its existing
matched gateway (tree extension) or asks the instance's matcher for a new
one, so a connect costs at most t matching requests and the trees stay
node-disjoint because every matcher runs at load 1.

Matching graphs come from a per-level factory.  The default samples a
nearly complete graph and brute-force-verifies the offline premises the
deletion matcher needs, falling back to the complete bipartite graph
when sampling odds are hopeless at the tiny right sizes involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bigraph import BiGraph, sample_random
from .dynamic import FFPMatcher, ffp_premises_hold
from .strategy import FirstFreeMatcher, MatcherInvariantError
from .util import derive_seed

__all__ = ["Network", "TreeSet", "Tree", "LevelSpec", "default_graph_factory",
           "complete_bipartite"]


def complete_bipartite(left: int, right: int) -> BiGraph:
    return BiGraph(left, right, [tuple(range(right)) for _ in range(left)])


@dataclass
class LevelSpec:
    """One level's matching graph and how its matchers are created."""

    graph: BiGraph
    capacity: int
    matcher_factory: object
    kind: str  # "sampled" or "complete"
    seed_attempt: int = -1


def _premises_trivial(left: int, right: int, K: int) -> bool:
    """Complete bipartite graphs satisfy the deletion-matcher premises
    whenever the right side holds 3K nodes."""
    return right >= 3 * K and right >= 1


def default_graph_factory(B: int, t: int, seed: int, C: int = 3,
                          sample_tries: int = 40):
    """Per-level graphs: left C*B^(t-d+1), right C*B^(t-d), matching up to
    B^(t-d).  Tries nearly complete sampled graphs first (verified), then
    the complete graph, whose premises hold structurally."""

    def make(d: int) -> LevelSpec:
        K = B ** (t - d)
        left = C * B ** (t - d + 1)
        right = C * B ** (t - d)
        if K <= 4 and right <= 63:
            degree = right - 1
            if degree >= 1:
                for i in range(sample_tries):
                    g = sample_random(left, right, degree,
                                      derive_seed(seed, "connector", d, i))
                    ok, _ = ffp_premises_hold(g, K)
                    if ok:
                        return LevelSpec(g, K, lambda g=g, K=K: FFPMatcher(g, K, False),
                                         "sampled", i)
            g = complete_bipartite(left, right)
            assert _premises_trivial(left, right, K)
            return LevelSpec(g, K, lambda g=g, K=K: FFPMatcher(g, K, False), "complete")
        g = complete_bipartite(left, right)
        return LevelSpec(g, K, lambda g=g: FirstFreeMatcher(g), "complete")

    return make


@dataclass
class Tree:
    root: int
    nodes: set = field(default_factory=set)
    parent: dict = field(default_factory=dict)
    children: dict = field(default_factory=dict)
    gateways: dict = field(default_factory=dict)  # (d, path) -> [left, right, uses]
    outputs: set = field(default_factory=set)


class TreeSet:
    """All live broadcast trees plus the global node-ownership map."""

    def __init__(self) -> None:
        self.trees: dict[int, Tree] = {}
        self.owner: dict[tuple, int] = {}

    def tree_of_output(self, y: int):
        for tree in self.trees.values():
            if y in tree.outputs:
                return tree
        return None

    def claim(self, node: tuple, root: int) -> None:
        current = self.owner.get(node)
        if current is not None and current != root:
            raise MatcherInvariantError(
                f"node {node} already belongs to the tree of input {current}")
        self.owner[node] = root

    def release(self, node: tuple) -> None:
        del self.owner[node]

    def audit_disjoint(self) -> None:
        seen: dict[tuple, int] = {}
        for root, tree in self.trees.items():
            for node in tree.nodes:
                assert node not in seen, (
                    f"node {node} on the trees of {seen[node]} and {root}")
                seen[node] = root
        assert seen == self.owner, "ownership map out of sync with trees"


class Network:
    """Recursive N-connector with per-instance matchers created lazily."""

    def __init__(self, B: int, t: int, seed: int = 0, C: int = 3,
                 graph_factory=None) -> None:
        if B < 2 or t < 1:
            raise ValueError("need B >= 2 and t >= 1")
        self.B = B
        self.t = t
        self.N = B ** t
        self.C = C
        factory = graph_factory or default_graph_factory(B, t, seed, C)
        self.levels: dict[int, LevelSpec] = {}
        for d in range(1, t):
            spec = factory(d)
            expected_left = C * B ** (t - d + 1)
            expected_right = C * B ** (t - d)
            if spec.graph.left_size != expected_left or spec.graph.right_size > expected_right:
                raise ValueError(
                    f"level {d} graph has shape {spec.graph.left_size}x"
                    f"{spec.graph.right_size}, need {expected_left}x<= {expected_right}")
            self.levels[d] = spec
        self.degree_bound = max([1] + [s.graph.degree for s in self.levels.values()])
        self.trees = TreeSet()
        self._matchers: dict[tuple, object] = {}
        self.connects = 0
        self.requests_made = 0
        self.last_connect_requests = 0

    # -- structure ----------------------------------------------------------

    def edge_count(self) -> int:
        total = 0
        for d, spec in self.levels.items():
            total += (self.B ** d) * spec.graph.edge_count()
        # final complete bipartite stage: C*B inputs by B outputs per instance
        total += (self.B ** (self.t - 1)) * (self.C * self.B) * self.B
        return total

    def edge_bound(self) -> int:
        return self.t * self.C * self.degree_bound * self.B ** (self.t + 1)

    def _matcher(self, d: int, path: tuple):
        key = (d, path)
        m = self._matchers.get(key)
        if m is None:
            m = self.levels[d].matcher_factory()
            self._matchers[key] = m
        return m

    def _digits(self, y: int) -> list[int]:
        digits = []
        v = y
        for _ in range(self.t):
            digits.append(v % self.B)
            v //= self.B
        digits.reverse()
        return digits

    @staticmethod
    def node_name(node: tuple) -> str:
        layer, path, local = node
        inside = ".".join(str(p) for p in path)
        return f"L{layer}[{inside}]#{local}"

    # -- the connection game --------------------------------------------------

    def connect(self, x: int, y: int) -> None:
        """Extend (or create) the tree of input x so output y is a leaf."""
        if not 0 <= x < self.N:
            raise ValueError(f"input {x} out of range")
        if not 0 <= y < self.N:
            raise ValueError(f"output {y} out of range")
        holder = self.trees.tree_of_output(y)
        if holder is not None:
            raise ValueError(f"output {y} already lies on the tree of {holder.root}")
        tree = self.trees.trees.get(x)
        created = tree is None
        if created:
            tree = Tree(root=x)
            root_node = (0, (), x)
            self.trees.claim(root_node, x)
            tree.nodes.add(root_node)
            self.trees.trees[x] = tree

        digits = self._digits(y)
        requests = 0
        node = (0, (), x)
        touched = []      # gateways whose use count went up
        fresh = []        # (d, path) of gateways created by this connect
        cur = x
        try:
            for d in range(1, self.t):
                path = tuple(digits[:d])
                gw = tree.gateways.get((d, path))
                if gw is None:
                    matcher = self._matcher(d, path)
                    active = len(matcher.matches) if hasattr(matcher, "matches") \
                        else len(matcher._records)
                    assert active <= self.levels[d].capacity - 1, (
                        f"instance {path} at level {d} already at capacity")
                    (gateway,) = matcher.request(cur)
                    requests += 1
                    gw = [cur, gateway, 0]
                    tree.gateways[(d, path)] = gw
                    fresh.append((d, path))
                    child = (d, path, gateway)
                    self.trees.claim(child, x)
                    tree.nodes.add(child)
                    tree.parent[child] = node
                    tree.children[node] = tree.children.get(node, 0) + 1
                else:
                    assert gw[0] == cur, "tree node mismatch on reused gateway"
                    child = (d, path, gw[1])
                gw[2] += 1
                touched.append((d, path))
                node = child
                cur = gw[1]
            leaf = (self.t, tuple(digits[: self.t - 1]), digits[-1])
            self.trees.claim(leaf, x)
            tree.nodes.add(leaf)
            tree.parent[leaf] = node
            tree.children[node] = tree.children.get(node, 0) + 1
            tree.outputs.add(y)
        except Exception:
            for d, path in touched:
                tree.gateways[(d, path)][2] -= 1
            for d, path in reversed(fresh):
                left, right, _ = tree.gateways.pop((d, path))
                self._matcher(d, path).retract(left, (right,))
                child = (d, path, right)
                parent = tree.parent.pop(child)
                tree.children[parent] -= 1
                tree.nodes.discard(child)
                self.trees.release(child)
            if created and not tree.outputs:
                self.trees.release((0, (), x))
                del self.trees.trees[x]
            raise
        self.connects += 1
        self.requests_made += requests
        self.last_connect_requests = requests
        assert requests <= self.t, "a connect must not exceed t matching requests"

    def disconnect(self, x: int, y: int | None = None) -> None:
        """Remove the whole tree of x, or prune just the leaf path to y."""
        tree = self.trees.trees.get(x)
        if tree is None:
            raise KeyError(f"input {x} has no tree")
        if y is None:
            for (d, path), (left, right, _uses) in tree.gateways.items():
                self._matcher(d, path).retract(left, (right,))
            for node in tree.nodes:
                self.trees.release(node)
            del self.trees.trees[x]
            return
        if y not in tree.outputs:
            raise KeyError(f"output {y} is not a leaf of the tree of {x}")
        digits = self._digits(y)
        leaf = (self.t, tuple(digits[: self.t - 1]), digits[-1])
        tree.outputs.discard(y)
        self._remove_upwards(tree, leaf)
        for d in range(1, self.t):
            path = tuple(digits[:d])
            gw = tree.gateways[(d, path)]
            gw[2] -= 1
            if gw[2] == 0:
                self._matcher(d, path).retract(gw[0], (gw[1],))
                del tree.gateways[(d, path)]
        if not tree.outputs:
            root_node = (0, (), x)
            if root_node in tree.nodes:
                self.trees.release(root_node)
                tree.nodes.discard(root_node)
            del self.trees.trees[x]

    def _remove_upwards(self, tree: Tree, leaf: tuple) -> None:
        node = leaf
        while node in tree.parent:
            parent = tree.parent[node]
            tree.nodes.discard(node)
            self.trees.release(node)
            del tree.parent[node]
            tree.children[parent] -= 1
            if tree.children[parent] > 0:
                break
            node = parent

    # -- snapshots --------------------------------------------------------------

    def dump_lines(self) -> list[str]:
        lines = [f"network B={self.B} t={self.t} N={self.N} C={self.C} "
                 f"D={self.degree_bound} edges={self.edge_count()}"]
        for d, spec in sorted(self.levels.items()):
            lines.append(f"LEVEL {d} kind={spec.kind} capacity={spec.capacity} "
                         f"graph={spec.graph.left_size}x{spec.graph.right_size} "
                         f"degree={spec.graph.degree}")
        for x in sorted(self.trees.trees):
            tree = self.trees.trees[x]
            lines.append(f"TREE {x}:")
            for y in sorted(tree.outputs):
                digits = self._digits(y)
                chain = [(0, (), x)]
                for d in range(1, self.t):
                    path = tuple(digits[:d])
                    chain.append((d, path, tree.gateways[(d, path)][1]))
                chain.append((self.t, tuple(digits[: self.t - 1]), digits[-1]))
                lines.append("  " + " -> ".join(self.node_name(n) for n in chain))
        return lines
