"""Fast matchers built on ordered copies of one base graph.

The shared engine is `CopyLadder`: per-copy occupancy flags over the base
right set, with the first-free-copy rule: serve a request from the lowest
copy in which it still has a free neighbor, taking the lowest-index free
neighbor there.  Replies are base-graph right nodes; the load bound equals
the copy count.

Three strategies wrap the ladder:

* `IncrementalCloneMatcher` -- 1 + ceil(log2 K) copies, no retractions.
* `RoundTMatcher`           -- 1 + floor(log2 T) copies, lives for T rounds.
* `ExpiringMatcher`         -- two round-T ladders used alternately; by the
  time play returns to a half, edge expiration has emptied it.

All per-operation work is counted in probes (one occupancy touch each)
and is at most copies * (degree + 1).
"""

from __future__ import annotations

import math

from .strategy import (
    MatcherInvariantError,
    MatcherStrategy,
    NoFreeNeighborError,
    StaleEdgeError,
)

__all__ = [
    "CopyLadder",
    "IncrementalCloneMatcher",
    "RoundTMatcher",
    "ExpiringMatcher",
    "effective_round_count",
]


def effective_round_count(K: int, T: int) -> int:
    """Round T up to the smallest K * 2^j that is >= max(T, K)."""
    t_eff = K
    while t_eff < T:
        t_eff *= 2
    return t_eff


class CopyLadder:
    """Occupancy bookkeeping for c ordered copies of a base graph."""

    def __init__(self, graph, copies: int) -> None:
        if copies < 1:
            raise ValueError("ladder needs at least one copy")
        self.graph = graph
        self.copies = copies
        self.taken = [bytearray(graph.right_size) for _ in range(copies)]
        self.records: dict[int, tuple[int, int]] = {}
        self.probes = 0
        self.max_copy_used = -1

    def assign(self, x: int) -> tuple[int, int]:
        if x in self.records:
            raise MatcherInvariantError(f"left node {x} already assigned")
        for c in range(self.copies):
            taken = self.taken[c]
            for y in self.graph.neighbors(x):
                self.probes += 1
                if not taken[y]:
                    taken[y] = 1
                    self.probes += 1
                    self.records[x] = (c, y)
                    if c > self.max_copy_used:
                        self.max_copy_used = c
                    return c, y
        raise NoFreeNeighborError(f"no free neighbor for {x} in any of {self.copies} copies")

    def free(self, x: int) -> tuple[int, int]:
        c, y = self.records.pop(x)
        self.taken[c][y] = 0
        self.probes += 1
        return c, y

    def is_empty(self) -> bool:
        return not self.records

    def swap_graph(self, graph) -> None:
        """Replace the adjacency source, keeping occupancy; right sets must
        share the index space (used for induced views of the same base)."""
        if graph.right_size != self.graph.right_size:
            raise ValueError("swap requires the same right index space")
        self.graph = graph

    def clear(self) -> None:
        for t in self.taken:
            t[:] = bytes(len(t))
        self.records.clear()
        self.max_copy_used = -1

    def corrupt_one_slot(self) -> str:
        """Fault injection: silently release the oldest occupied slot so a
        later request can double-book it."""
        for x, (c, y) in self.records.items():
            self.taken[c][y] = 0
            return f"released occupancy of copy {c}, right {y} (held by {x})"
        raise MatcherInvariantError("nothing to corrupt: ladder is empty")

    def audit(self) -> None:
        slots = list(self.records.values())
        assert len(slots) == len(set(slots)), "two assignments share one slot"
        for c, y in slots:
            assert self.taken[c][y], f"record points at a free slot ({c}, {y})"
        assert sum(sum(t) for t in self.taken) == len(slots), (
            "occupancy flags out of sync with assignment records")


class IncrementalCloneMatcher(MatcherStrategy):
    """Incremental matching on a (1 + ceil(log2 K))-clone of a 1-expander.

    Serves at most K requests, never retracts.  Keeps the first-copy
    dominance invariant: requests matched outside copy 0 never outnumber
    the edges inside copy 0.
    """

    def __init__(self, graph, K: int) -> None:
        super().__init__()
        if K < 1:
            raise ValueError("K must be positive")
        self.K = K
        self.copies = 1 + math.ceil(math.log2(K)) if K > 1 else 1
        self.ladder = CopyLadder(graph, self.copies)
        self.right_size = graph.right_size
        self.load_bound = self.copies
        self.served = 0

    def request(self, x: int):
        if self.served >= self.K:
            raise MatcherInvariantError(f"incremental matcher already served {self.K} requests")
        c, y = self.ladder.assign(x)
        self.served += 1
        in_first = sum(1 for cc, _ in self.ladder.records.values() if cc == 0)
        elsewhere = len(self.ladder.records) - in_first
        assert elsewhere <= in_first, (
            f"first-copy dominance broken: {elsewhere} overflow matches vs "
            f"{in_first} in copy 0")
        return (y,)

    def retract(self, x: int, ys) -> None:
        raise MatcherInvariantError("incremental matcher cannot retract")

    def reset(self) -> None:
        self.ladder.clear()
        self.served = 0

    def work(self) -> int:
        return self.probes + self.ladder.probes

    @property
    def max_copy_used(self) -> int:
        return self.ladder.max_copy_used

    def audit(self) -> None:
        self.ladder.audit()

    def inject_fault(self) -> str:
        return self.ladder.corrupt_one_slot()


class RoundTMatcher(MatcherStrategy):
    """Matching until round T on a (1 + floor(log2 T))-clone of a 3-expander.

    T is silently rounded up to K * 2^j; the effective value is recorded.
    Block bookkeeping asserts that within every completed block of 2K
    requests at least K matches landed in copy 0, which is what makes the
    copy count sufficient.
    """

    def __init__(self, graph, K: int, T: int, check_blocks: bool = True) -> None:
        super().__init__()
        if K < 1:
            raise ValueError("K must be positive")
        self.K = K
        self.T_effective = effective_round_count(K, T)
        self.copies = 1 + int(math.log2(self.T_effective)) if self.T_effective > 1 else 1
        self.ladder = CopyLadder(graph, self.copies)
        self.right_size = graph.right_size
        self.load_bound = self.copies
        self.check_blocks = check_blocks
        self.rounds = 0
        self._block_first_copy = 0

    def request(self, x: int):
        if self.rounds >= self.T_effective:
            raise MatcherInvariantError(
                f"round counter exceeded the effective limit {self.T_effective}")
        c, y = self.ladder.assign(x)
        self.rounds += 1
        if c == 0:
            self._block_first_copy += 1
        if self.rounds % (2 * self.K) == 0:
            if self.check_blocks:
                assert self._block_first_copy >= self.K, (
                    f"block property broken: only {self._block_first_copy} of the last "
                    f"{2 * self.K} matches used copy 0")
            self._block_first_copy = 0
        return (y,)

    def retract(self, x: int, ys) -> None:
        self.ladder.free(x)

    def is_empty(self) -> bool:
        return self.ladder.is_empty()

    def reset_period(self, graph=None) -> None:
        """Start a fresh T-round period.  Occupancy persists (old edges may
        still be live); the round counter and block bookkeeping restart."""
        if graph is not None:
            self.ladder.swap_graph(graph)
        self.rounds = 0
        self._block_first_copy = 0

    def reset(self) -> None:
        self.ladder.clear()
        self.rounds = 0
        self._block_first_copy = 0

    def work(self) -> int:
        return self.probes + self.ladder.probes

    def audit(self) -> None:
        self.ladder.audit()

    def inject_fault(self) -> str:
        return self.ladder.corrupt_one_slot()


class ExpiringMatcher(MatcherStrategy):
    """T-expiring matching via two alternating round-T ladders.

    Requests go to one half for T rounds, then to the other; when play
    switches back, every edge of the incoming half must already have been
    retracted by expiration, otherwise the referee or the surrounding
    game broke the expiration contract.
    """

    def __init__(self, graph, K: int, T: int, check_blocks: bool = True) -> None:
        super().__init__()
        if T < 1:
            raise ValueError("expiration must be positive")
        self.switch_period = T
        self.halves = (
            RoundTMatcher(graph, K, T, check_blocks),
            RoundTMatcher(graph, K, T, check_blocks),
        )
        self.T_effective = self.halves[0].T_effective
        self.copies_per_half = self.halves[0].copies
        self.load_bound = 2 * self.copies_per_half
        self.right_size = graph.right_size
        self.rounds = 0
        self._current = 0
        self._owner: dict[int, int] = {}

    def request(self, x: int):
        period = self.rounds // self.switch_period
        half = period % 2
        if half != self._current:
            incoming = self.halves[half]
            if not incoming.is_empty():
                stale = sorted(incoming.ladder.records)
                raise StaleEdgeError(
                    f"half {half} still holds edges for {stale} at the switch; "
                    "expiration was not enforced")
            incoming.reset_period()
            self._current = half
        reply = self.halves[self._current].request(x)
        self._owner[x] = self._current
        self.rounds += 1
        return reply

    def retract(self, x: int, ys) -> None:
        half = self._owner.pop(x)
        self.halves[half].retract(x, ys)

    def reset(self) -> None:
        for h in self.halves:
            h.reset()
        self.rounds = 0
        self._current = 0
        self._owner.clear()

    def work(self) -> int:
        return self.probes + sum(h.work() for h in self.halves)

    def audit(self) -> None:
        for h in self.halves:
            h.audit()

    def inject_fault(self) -> str:
        return self.halves[self._current].inject_fault()
