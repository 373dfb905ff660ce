"""Bipartite graphs with left-indexed adjacency.

Covers the graph algebra (clone / product / union / induced view), the
random and prime-hash generators, and the brute-force structural checkers
(vertex expansion, offline matchability, private neighbors).  The checkers
are exhaustive by design and meant for desk-scale instances; the intended
envelope for `expansion_check` is about 40 left nodes with set sizes up
to 5.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .util import combination_rows, derive_seed, popcount

__all__ = [
    "BiGraph",
    "InducedView",
    "ExpansionWitness",
    "clone_graph",
    "product",
    "union",
    "induced",
    "sample_random",
    "prime_hash_graph",
    "PrimeHashGraph",
    "select_primes",
    "max_collision_blocks",
    "collision_blocks",
    "expansion_check",
    "expansion_check_fast",
    "offline_matching_check",
    "private_neighbors",
    "neighbor_masks",
    "graph_to_lines",
    "graph_from_lines",
    "save_graph",
    "load_graph",
]


class BiGraph:
    """Finite bipartite graph, adjacency indexed by left node.

    `degree` is the maximum left degree and `left_regular` tells whether
    every left node attains it.  Instances are immutable after
    construction and safe to share between threads.
    """

    __slots__ = ("left_size", "right_size", "adjacency", "degree", "left_regular", "_masks")

    def __init__(self, left_size: int, right_size: int, adjacency) -> None:
        if left_size < 0 or right_size < 0:
            raise ValueError("sizes must be nonnegative")
        if len(adjacency) != left_size:
            raise ValueError(f"expected {left_size} adjacency rows, got {len(adjacency)}")
        rows = []
        for x, row in enumerate(adjacency):
            row = tuple(int(y) for y in row)
            seen = set()
            for y in row:
                if not 0 <= y < right_size:
                    raise ValueError(f"left node {x}: neighbor {y} out of range [0, {right_size})")
                if y in seen:
                    raise ValueError(f"left node {x}: duplicate neighbor {y}")
                seen.add(y)
            rows.append(row)
        self.left_size = left_size
        self.right_size = right_size
        self.adjacency = tuple(rows)
        self.degree = max((len(r) for r in rows), default=0)
        self.left_regular = all(len(r) == self.degree for r in rows)
        self._masks = None

    def neighbors(self, x: int):
        return self.adjacency[x]

    def neighbor(self, x: int, j: int) -> int:
        return self.adjacency[x][j]

    def edge_count(self) -> int:
        return sum(len(r) for r in self.adjacency)

    def neighbor_masks(self):
        """Per-left-node neighborhoods as integer bitsets (cached)."""
        if self._masks is None:
            masks = []
            for row in self.adjacency:
                m = 0
                for y in row:
                    m |= 1 << y
                masks.append(m)
            self._masks = tuple(masks)
        return self._masks

    def __eq__(self, other):
        return (
            isinstance(other, BiGraph)
            and self.left_size == other.left_size
            and self.right_size == other.right_size
            and self.adjacency == other.adjacency
        )

    def __hash__(self):
        return hash((self.left_size, self.right_size, self.adjacency))

    def __repr__(self):
        return (
            f"BiGraph(left={self.left_size}, right={self.right_size}, "
            f"D={self.degree}, regular={self.left_regular})"
        )


class InducedView:
    """Read-through view of a graph with left nodes excluded and right nodes filtered.

    Excluded left nodes read as isolated; neighbors outside the enabled
    right set are hidden.  The base graph is never modified and keeps its
    index space, so view coordinates and base coordinates coincide.
    """

    __slots__ = ("base", "excluded_left", "enabled_right", "left_size", "right_size",
                 "degree", "left_regular", "_cache")

    def __init__(self, base, excluded_left, enabled_right) -> None:
        excluded_left = frozenset(excluded_left)
        enabled_right = frozenset(enabled_right)
        for x in excluded_left:
            assert 0 <= x < base.left_size, f"excluded left node {x} out of range"
        for y in enabled_right:
            assert 0 <= y < base.right_size, f"enabled right node {y} out of range"
        self.base = base
        self.excluded_left = excluded_left
        self.enabled_right = enabled_right
        self.left_size = base.left_size
        self.right_size = base.right_size
        self.degree = base.degree
        self.left_regular = False
        self._cache = {}

    def neighbors(self, x: int):
        row = self._cache.get(x)
        if row is None:
            if x in self.excluded_left:
                row = ()
            else:
                row = tuple(y for y in self.base.neighbors(x) if y in self.enabled_right)
            self._cache[x] = row
        return row


@dataclass(frozen=True)
class ExpansionWitness:
    """Outcome of an expansion check; carries the first violating set if any."""

    holds: bool
    violating_set: tuple | None = None
    neighborhood_size: int | None = None

    def __bool__(self):
        return self.holds


# ---------------------------------------------------------------------------
# graph algebra


def clone_graph(g, copies: int) -> BiGraph:
    """Identify `copies` disjoint copies of the right set over one left set.

    Copy i of right node y gets index i * g.right_size + y.
    """
    if copies < 1:
        raise ValueError("clone copy count must be at least 1")
    r = g.right_size
    adjacency = [
        tuple(i * r + y for i in range(copies) for y in row)
        for row in (g.neighbors(x) for x in range(g.left_size))
    ]
    return BiGraph(g.left_size, copies * r, adjacency)


def product(g1, g2) -> BiGraph:
    """Product over a shared left set: x is adjacent to (y1, y2) iff it is
    adjacent to y1 in g1 and to y2 in g2.  Pair (y1, y2) is encoded as
    y1 * g2.right_size + y2."""
    if g1.left_size != g2.left_size:
        raise ValueError("product requires equal left sizes")
    r2 = g2.right_size
    adjacency = [
        tuple(y1 * r2 + y2 for y1 in g1.neighbors(x) for y2 in g2.neighbors(x))
        for x in range(g1.left_size)
    ]
    return BiGraph(g1.left_size, g1.right_size * r2, adjacency)


def union(g1, g2) -> BiGraph:
    """Union over a shared left set with right sets treated as disjoint.

    Right nodes of g2 are offset by g1.right_size, so every edge stays
    traceable to its source graph.
    """
    if g1.left_size != g2.left_size:
        raise ValueError("union requires equal left sizes")
    off = g1.right_size
    adjacency = [
        g1.neighbors(x) + tuple(off + y for y in g2.neighbors(x))
        for x in range(g1.left_size)
    ]
    return BiGraph(g1.left_size, off + g2.right_size, adjacency)


def induced(g, excluded_left, enabled_right) -> InducedView:
    return InducedView(g, excluded_left, enabled_right)


# ---------------------------------------------------------------------------
# generators


def sample_random(left_size: int, right_size: int, degree: int, seed: int) -> BiGraph:
    """Left-regular random graph: each row is `degree` distinct right nodes
    drawn uniformly without replacement.  Deterministic for a fixed seed."""
    if degree > right_size:
        raise ValueError("degree cannot exceed right_size")
    rng = random.Random(derive_seed(seed, "sample_random"))
    adjacency = [tuple(sorted(rng.sample(range(right_size), degree)))
                 for _ in range(left_size)]
    return BiGraph(left_size, right_size, adjacency)


def select_primes(count: int, prime_floor: int) -> list[int]:
    """The first `count` primes that are >= prime_floor, ascending."""
    limit = max(4 * prime_floor, 1 << 12)
    while True:
        sieve = bytearray([1]) * (limit + 1)
        sieve[0:2] = b"\x00\x00"
        for p in range(2, int(limit**0.5) + 1):
            if sieve[p]:
                sieve[p * p :: p] = bytearray(len(sieve[p * p :: p]))
        primes = [p for p in range(prime_floor, limit + 1) if sieve[p]]
        if len(primes) >= count:
            return primes[:count]
        if limit >= (1 << 22):
            raise RuntimeError("prime sieve limit exhausted")
        limit *= 2


def max_collision_blocks(universe_size: int, prime_floor: int) -> int:
    """Largest number of blocks in which two distinct universe elements can
    agree: the colliding primes all divide the difference, so their product
    is below the universe size."""
    if universe_size <= 1:
        return 0
    bound = max(universe_size - 1, 1)
    m = 0
    power = prime_floor
    while power <= bound:
        m += 1
        power *= prime_floor
    return m


class PrimeHashGraph:
    """Residue graph: left node x is adjacent to (block i, x mod p_i).

    Adjacency rows are computed on demand, which keeps large universes
    cheap; `materialize()` produces the equivalent BiGraph for desk-scale
    work.
    """

    __slots__ = ("left_size", "right_size", "degree", "left_regular",
                 "primes", "offsets", "_parr", "_oarr")

    def __init__(self, universe_size: int, block_count: int, prime_floor: int) -> None:
        if universe_size < 0 or block_count < 0:
            raise ValueError("sizes must be nonnegative")
        primes = select_primes(block_count, prime_floor)
        offsets = []
        acc = 0
        for p in primes:
            offsets.append(acc)
            acc += p
        self.left_size = universe_size
        self.right_size = acc
        self.degree = block_count
        self.left_regular = True
        self.primes = tuple(primes)
        self.offsets = tuple(offsets)
        self._parr = np.array(primes, dtype=np.int64) if primes else np.zeros(0, np.int64)
        self._oarr = np.array(offsets, dtype=np.int64) if offsets else np.zeros(0, np.int64)

    def neighbors(self, x: int):
        if not 0 <= x < self.left_size:
            raise IndexError(x)
        return tuple(o + x % p for o, p in zip(self.offsets, self.primes))

    def neighbor(self, x: int, j: int) -> int:
        return self.offsets[j] + x % self.primes[j]

    def positions(self, x: int) -> np.ndarray:
        """All residue positions of x as an array, one per block."""
        return self._oarr + x % self._parr

    def materialize(self) -> BiGraph:
        return BiGraph(self.left_size, self.right_size,
                       [self.neighbors(x) for x in range(self.left_size)])


def prime_hash_graph(universe_size: int, block_count: int, prime_floor: int) -> BiGraph:
    return PrimeHashGraph(universe_size, block_count, prime_floor).materialize()


def collision_blocks(g: PrimeHashGraph | BiGraph, x: int, x2: int) -> int:
    """Number of blocks in which x and x2 share a right node."""
    if isinstance(g, PrimeHashGraph):
        return int(np.count_nonzero(x % g._parr == x2 % g._parr))
    return len(set(g.neighbors(x)) & set(g.neighbors(x2)))


# ---------------------------------------------------------------------------
# structural checkers


def neighbor_masks(g) -> list[int]:
    """Neighborhood bitsets for any graph-like object."""
    if isinstance(g, BiGraph):
        return list(g.neighbor_masks())
    out = []
    for x in range(g.left_size):
        m = 0
        for y in g.neighbors(x):
            m |= 1 << y
        out.append(m)
    return out


def expansion_check(g, e, K: int) -> ExpansionWitness:
    """Exhaustive check that every nonempty left set S with #S <= K has at
    least e * #S right neighbors.

    Enumerates subsets in lexicographic order by size and returns the
    first violator, so the witness is deterministic.  Exponential in K;
    intended for desk-scale instances only.
    """
    e = Fraction(e)
    masks = neighbor_masks(g)
    n = g.left_size
    for size in range(1, min(K, n) + 1):
        need_num = e.numerator * size
        for subset in combinations(range(n), size):
            m = 0
            for x in subset:
                m |= masks[x]
            if m.bit_count() * e.denominator < need_num:
                return ExpansionWitness(False, subset, m.bit_count())
    return ExpansionWitness(True)


def _mask_words(g) -> np.ndarray:
    """Neighborhoods as a (left_size, words) uint64 matrix.

    Right nodes are relabeled compactly first; expansion checking only
    counts neighborhood sizes, and the compaction keeps wide sparse
    graphs down to a few words per row.
    """
    used = sorted({y for x in range(g.left_size) for y in g.neighbors(x)})
    remap = {y: i for i, y in enumerate(used)}
    words = max(1, -(-len(used) // 64))
    out = np.zeros((g.left_size, words), dtype=np.uint64)
    for x in range(g.left_size):
        for y in g.neighbors(x):
            i = remap[y]
            out[x, i >> 6] |= np.uint64(1 << (i & 63))
    return out


def expansion_check_fast(g, e, K: int, batch: int = 200_000) -> bool:
    """Vectorized version of `expansion_check` (boolean only, no witness).

    Kept separate so the subset-enumeration reference above stays the
    oracle; the two are cross-checked in the test suite.
    """
    e = Fraction(e)
    words = _mask_words(g)
    n = g.left_size
    for size in range(1, min(K, n) + 1):
        rows = combination_rows(n, size)
        need = e.numerator * size
        for lo in range(0, len(rows), batch):
            chunk = rows[lo : lo + batch]
            union_ = words[chunk[:, 0]].copy()
            for j in range(1, size):
                np.bitwise_or(union_, words[chunk[:, j]], out=union_)
            counts = popcount(union_).sum(axis=1, dtype=np.int64)
            if np.any(counts * e.denominator < need):
                return False
    return True


def _subset_matchable(adjacency, subset) -> bool:
    """Does `subset` have a system of distinct representatives?  Standard
    augmenting-path matching restricted to the subset."""
    match_of = {}

    def try_augment(x, seen):
        for y in adjacency[x]:
            if y in seen:
                continue
            seen.add(y)
            if y not in match_of or try_augment(match_of[y], seen):
                match_of[y] = x
                return True
        return False

    for x in subset:
        if not try_augment(x, set()):
            return False
    return True


def offline_matching_check(g, K: int) -> bool:
    """True iff every left set of size <= K admits a matching.

    Independent of the expansion checker: decided purely by augmenting-path
    matchings.  If a single maximum matching saturates the whole left set,
    every subset is matchable (restriction of that matching) and the
    subset enumeration is skipped.
    """
    n = g.left_size
    adjacency = [g.neighbors(x) for x in range(n)]
    if _subset_matchable(adjacency, range(n)):
        return True
    for size in range(1, min(K, n) + 1):
        for subset in combinations(range(n), size):
            if not _subset_matchable(adjacency, subset):
                return False
    return True


def private_neighbors(g, S) -> frozenset:
    """Right nodes with exactly one neighbor in S."""
    count: dict[int, int] = {}
    for x in S:
        assert 0 <= x < g.left_size, f"left node {x} out of range"
        for y in g.neighbors(x):
            count[y] = count.get(y, 0) + 1
    return frozenset(y for y, c in count.items() if c == 1)


# ---------------------------------------------------------------------------
# file format: header "bigraph <left> <right>", then one line per left node


def graph_to_lines(g) -> list[str]:
    lines = [f"bigraph {g.left_size} {g.right_size}"]
    for x in range(g.left_size):
        lines.append(" ".join(str(y) for y in g.neighbors(x)))
    return lines


def graph_from_lines(lines) -> BiGraph:
    lines = list(lines)
    if not lines:
        raise ValueError("empty graph file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "bigraph":
        raise ValueError(f"bad header: {lines[0]!r}")
    left, right = int(head[1]), int(head[2])
    body = lines[1 : 1 + left]
    if len(body) != left:
        raise ValueError(f"expected {left} adjacency lines, got {len(body)}")
    adjacency = [tuple(int(tok) for tok in line.split()) for line in body]
    return BiGraph(left, right, adjacency)


def save_graph(g, path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(graph_to_lines(g)) + "\n")


def load_graph(path) -> BiGraph:
    with open(path) as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return graph_from_lines(lines)
