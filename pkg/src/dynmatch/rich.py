"""Rich matching: requests are answered with most of the neighborhood.

`RichCopyLadder` generalizes the first-free-copy rule: serve from the
first copy in which the requested node still has at least the required
fraction of free neighbors, and hand over *all* free neighbors there.

The product composition pairs a rich strategy on a verified expander with
per-right-node greedy instances on a prime-hash residue graph: whenever
the first factor assigns y, the request is replayed in the y-copy of the
residue graph, and the product positions (y, block) are emitted.  Since
two distinct universe elements can agree in only a few residue blocks,
the greedy side loses at most a bounded fraction of blocks, so richness
of the product is guaranteed arithmetically, not probabilistically.

`shadow_request` answers the counterfactual "what would x be assigned
right now" without touching any state; the one-probe store uses it to
audit non-members.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bigraph import (
    BiGraph,
    PrimeHashGraph,
    expansion_check,
    expansion_check_fast,
    max_collision_blocks,
    sample_random,
)
from .ladder import effective_round_count
from .strategy import MatcherStrategy, NoRichCopyError, StaleEdgeError
from .util import derive_seed

__all__ = [
    "RichCopyLadder",
    "RichIncrementalMatcher",
    "RichExpiringMatcher",
    "ProductRichMatcher",
    "ProductGraph",
    "RichBuild",
    "build_rich_graph",
]


class RichCopyLadder:
    """Per-copy occupancy with the rich first-copy rule."""

    def __init__(self, graph, copies: int) -> None:
        self.graph = graph
        self.copies = copies
        self.taken = [bytearray(graph.right_size) for _ in range(copies)]
        self.records: dict[int, tuple[int, tuple]] = {}
        self.probes = 0
        self.first_copy_hits = 0
        self.assignments = 0

    def _scan(self, x: int, need: int):
        for c in range(self.copies):
            taken = self.taken[c]
            free = []
            for y in self.graph.neighbors(x):
                self.probes += 1
                if not taken[y]:
                    free.append(y)
            if len(free) >= need:
                return c, tuple(free)
        return None

    def assign(self, x: int, need: int) -> tuple[int, tuple]:
        hit = self._scan(x, need)
        if hit is None:
            raise NoRichCopyError(
                f"no copy offers {need} free neighbors for {x}")
        c, free = hit
        taken = self.taken[c]
        for y in free:
            taken[y] = 1
        self.probes += len(free)
        self.records[x] = (c, free)
        self.assignments += 1
        if c == 0:
            self.first_copy_hits += 1
        return c, free

    def shadow(self, x: int, need: int) -> tuple:
        """Read-only variant of assign: nothing is marked."""
        hit = self._scan(x, need)
        if hit is None:
            raise NoRichCopyError(
                f"shadow request found no copy with {need} free neighbors for {x}")
        return hit[1]

    def free(self, x: int) -> None:
        c, ys = self.records.pop(x)
        taken = self.taken[c]
        for y in ys:
            taken[y] = 0
        self.probes += len(ys)

    def is_empty(self) -> bool:
        return not self.records

    def clear(self) -> None:
        for t in self.taken:
            t[:] = bytes(len(t))
        self.records.clear()


class RichIncrementalMatcher(MatcherStrategy):
    """Incremental rich matching on 1 + ceil(log2 K) copies.

    With parameter eps on a ((1-eps)D)-expander, the chosen copy always
    offers a (1-2*eps) fraction of free neighbors, all of which are
    assigned.
    """

    requires_left_regular = True

    def __init__(self, graph, K: int, eps: float) -> None:
        super().__init__()
        self.K = K
        self.eps = eps
        self.copies = 1 + math.ceil(math.log2(K)) if K > 1 else 1
        self.need = math.ceil((1 - 2 * eps) * graph.degree)
        self.ladder = RichCopyLadder(graph, self.copies)
        self.right_size = graph.right_size
        self.load_bound = self.copies
        self.served = 0

    def request(self, x: int):
        if self.served >= self.K:
            raise NoRichCopyError(f"incremental rich matcher already served {self.K}")
        _, ys = self.ladder.assign(x, self.need)
        self.served += 1
        return ys

    def retract(self, x: int, ys) -> None:
        raise NoRichCopyError("incremental rich matcher cannot retract")

    def reset(self) -> None:
        self.ladder.clear()
        self.served = 0

    def work(self) -> int:
        return self.probes + self.ladder.probes

    @property
    def first_copy_share(self) -> float:
        if not self.ladder.assignments:
            return 1.0
        return self.ladder.first_copy_hits / self.ladder.assignments


class RichExpiringMatcher(MatcherStrategy):
    """Rich matching with T-expiration: two alternating rich ladders.

    `min_fraction` is the free-neighbor fraction a copy must offer to be
    chosen, hence also the per-reply richness guarantee.
    """

    requires_left_regular = True

    def __init__(self, graph, capacity: int, T: int, min_fraction: float,
                 name: str = "") -> None:
        super().__init__()
        self.capacity = capacity
        self.switch_period = max(T, 1)
        self.T_effective = effective_round_count(capacity, max(T, capacity))
        self.copies_per_half = (1 + int(math.log2(self.T_effective))
                                if self.T_effective > 1 else 1)
        self.need = math.ceil(min_fraction * graph.degree)
        self.min_fraction = min_fraction
        self.halves = (
            RichCopyLadder(graph, self.copies_per_half),
            RichCopyLadder(graph, self.copies_per_half),
        )
        self.load_bound = 2 * self.copies_per_half
        self.right_size = graph.right_size
        self.rounds = 0
        self._current = 0
        self._owner: dict[int, int] = {}
        self.name = name

    def _half_for_next(self) -> int:
        return (self.rounds // self.switch_period) % 2

    def request(self, x: int):
        half = self._half_for_next()
        if half != self._current:
            incoming = self.halves[half]
            if not incoming.is_empty():
                raise StaleEdgeError(
                    f"rich half {half} not empty at switch: {sorted(incoming.records)}")
            self._current = half
        _, ys = self.halves[self._current].assign(x, self.need)
        self._owner[x] = self._current
        self.rounds += 1
        return ys

    def shadow_request(self, x: int):
        """Stateless probe: the set x would receive right now."""
        return self.halves[self._half_for_next()].shadow(x, self.need)

    def retract(self, x: int, ys) -> None:
        half = self._owner.pop(x)
        self.halves[half].free(x)

    def reset(self) -> None:
        for h in self.halves:
            h.clear()
        self.rounds = 0
        self._current = 0
        self._owner.clear()

    def work(self) -> int:
        return self.probes + sum(h.probes for h in self.halves)


class ProductGraph:
    """Lazy product of a materialized factor and a residue graph.

    Right node (y1, y2) is encoded as y1 * R2 + y2.  Adjacency rows are
    produced on demand; `neighbor(x, j)` is O(1), which is all a one-probe
    query needs.
    """

    __slots__ = ("first", "second", "left_size", "right_size", "degree", "left_regular")

    def __init__(self, first, second: PrimeHashGraph) -> None:
        if first.left_size != second.left_size:
            raise ValueError("product requires equal left sizes")
        self.first = first
        self.second = second
        self.left_size = first.left_size
        self.right_size = first.right_size * second.right_size
        self.degree = first.degree * second.degree
        self.left_regular = first.left_regular and second.left_regular

    def neighbor(self, x: int, j: int) -> int:
        s = self.second.degree
        y1 = self.first.neighbor(x, j // s)
        y2 = self.second.neighbor(x, j % s)
        return y1 * self.second.right_size + y2

    def neighbors(self, x: int):
        r2 = self.second.right_size
        pos2 = self.second.neighbors(x)
        return tuple(y1 * r2 + y2 for y1 in self.first.neighbors(x) for y2 in pos2)


class ProductRichMatcher(MatcherStrategy):
    """Rich matching on a product graph, composed per right node.

    Runs the first factor's rich strategy; for every right node y it
    assigns, the same request is served greedily in the y-copy of the
    residue graph (all blocks not taken by another active assignment in
    that copy).  Product positions are disjoint across active assignments
    by construction.
    """

    requires_left_regular = True

    def __init__(self, first_matcher: RichExpiringMatcher, hashes: PrimeHashGraph,
                 eps_total: float, min_block_fraction: float) -> None:
        super().__init__()
        self.first = first_matcher
        self.hashes = hashes
        self.r2 = hashes.right_size
        self.s = hashes.degree
        self.eps_total = eps_total
        self.need2 = math.ceil(min_block_fraction * self.s)
        self.degree = None  # set once both factors are known
        self.right_size = first_matcher.right_size * self.r2
        self.load_bound = 1
        self.quota = None
        self._taken: dict[int, set] = {}
        self._assigned: dict[int, list] = {}

    def bind_product(self, graph: ProductGraph) -> None:
        self.degree = graph.degree
        self.quota = math.ceil((1 - self.eps_total) * graph.degree)

    def _blocks_for(self, x: int, y: int, mutate: bool):
        pos = self.hashes.positions(x)
        taken = self._taken.get(y)
        self.probes += self.s
        if taken:
            mask = ~np.isin(pos, np.fromiter(taken, dtype=np.int64, count=len(taken)))
            free = pos[mask]
        else:
            free = pos
        if len(free) < self.need2:
            raise NoRichCopyError(
                f"residue copy {y} offers {len(free)} free blocks; need {self.need2}")
        if mutate:
            self._taken.setdefault(y, set()).update(free.tolist())
        return free

    def _positions(self, pairs) -> np.ndarray:
        return np.concatenate([y * self.r2 + free for y, free in pairs])

    def request(self, x: int):
        ys = self.first.request(x)
        pairs = [(y, self._blocks_for(x, y, mutate=True)) for y in ys]
        self._assigned[x] = pairs
        out = self._positions(pairs)
        assert self.quota is None or len(out) >= self.quota, (
            f"assignment of {len(out)} positions is below the rich quota {self.quota}")
        return out

    def shadow_request(self, x: int) -> np.ndarray:
        ys = self.first.shadow_request(x)
        pairs = [(y, self._blocks_for(x, y, mutate=False)) for y in ys]
        out = self._positions(pairs)
        assert self.quota is None or len(out) >= self.quota
        return out

    def retract(self, x: int, ys=None) -> None:
        pairs = self._assigned.pop(x)
        for y, free in pairs:
            taken = self._taken[y]
            taken.difference_update(free.tolist())
            if not taken:
                del self._taken[y]
        self.first.retract(x, tuple(y for y, _ in pairs))

    def active_position_sets(self):
        return {x: self._positions(pairs) for x, pairs in self._assigned.items()}

    def reset(self) -> None:
        self.first.reset()
        self._taken.clear()
        self._assigned.clear()

    def work(self) -> int:
        return self.probes + self.first.work()


@dataclass
class RichBuild:
    """A rich product matcher together with its graph and build metadata."""

    graph: ProductGraph
    matcher: ProductRichMatcher
    meta: dict = field(default_factory=dict)


def _pick_first_factor(N: int, capacity: int, eps: float, seed: int,
                       max_tries: int = 200):
    """Sample-and-verify a lossless-style expander for the first factor.

    Verification is exhaustive inside the desk-scale envelope, sampled
    spot checks outside it; the returned status says which one happened.
    """
    degree = max(16, 2 * math.ceil(math.log2(max(N, 2))))
    right = max(2048, 1 << math.ceil(math.log2(8 * degree * capacity)))
    target = (1 - eps / 2) * degree
    if target != int(target):
        target = math.ceil(target)
    exhaustive = N <= 48 and capacity <= 5
    for attempt in range(max_tries):
        g = sample_random(N, right, degree, derive_seed(seed, "factor1", attempt))
        if exhaustive:
            if expansion_check(g, target, capacity).holds:
                return g, attempt, "exhaustive"
        else:
            if _spot_check_expansion(g, target, capacity, derive_seed(seed, "spot", attempt)):
                return g, attempt, "sampled"
    raise RuntimeError(f"no expander found within {max_tries} seeds")


def _spot_check_expansion(g, e, K: int, seed: int, samples: int = 4000) -> bool:
    import random as _random

    rng = _random.Random(seed)
    for _ in range(samples):
        size = rng.randint(2, K)
        subset = rng.sample(range(g.left_size), size)
        seen = set()
        for x in subset:
            seen.update(g.neighbors(x))
        if len(seen) < e * size:
            return False
    return True


def build_rich_graph(N: int, K: int, eps: float, seed: int,
                     T: int | None = None, capacity: int | None = None,
                     prime_floor: int = 17) -> RichBuild:
    """Build the product graph and its composed rich strategy.

    The total richness budget eps is split evenly: the expander side is
    chosen from the first copy offering a (1 - eps/2) fraction of free
    neighbors, and the residue side is sized so that greedy assignment
    among the first factor's load never blocks more than an eps/2
    fraction of blocks.  The product quota (1 - eps) * degree follows
    from the two factors multiplied.
    """
    capacity = capacity if capacity is not None else K
    T = T if T is not None else max(K, capacity)
    if T < 1:
        raise ValueError("expiration must be positive")
    first_graph, attempt, status = _pick_first_factor(N, capacity, eps, seed)
    first = RichExpiringMatcher(first_graph, capacity, T, min_fraction=1 - eps / 2)
    collisions = max_collision_blocks(N, prime_floor)
    blocks = math.ceil((2 / eps) * first.load_bound * max(collisions, 1))
    hashes = PrimeHashGraph(N, blocks, prime_floor)
    # greedy feasibility: other actives in a residue copy never block more
    # than an eps/2 fraction of blocks
    worst_blocked = (first.load_bound - 1) * collisions
    assert worst_blocked <= (eps / 2) * blocks, (
        f"{blocks} blocks cannot absorb {worst_blocked} collisions")
    matcher = ProductRichMatcher(first, hashes, eps_total=eps,
                                 min_block_fraction=1 - eps / 2)
    graph = ProductGraph(first_graph, hashes)
    matcher.bind_product(graph)
    meta = {
        "n": N,
        "k": K,
        "eps": eps,
        "seed": seed,
        "capacity": capacity,
        "expiration": T,
        "factor1_degree": first_graph.degree,
        "factor1_right": first_graph.right_size,
        "factor1_seed_attempt": attempt,
        "factor1_verification": status,
        "factor1_load": first.load_bound,
        "blocks": blocks,
        "prime_floor": prime_floor,
        "collision_bound": collisions,
        "product_degree": graph.degree,
        "product_right": graph.right_size,
        "rich_quota": matcher.quota,
    }
    return RichBuild(graph=graph, matcher=matcher, meta=meta)
