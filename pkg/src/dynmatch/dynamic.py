"""Dynamic matchers: the polynomial-time virtual-match algorithm, the
preparation-based fast matcher, their composition into the headline
load-O(log N) strategy, and a node-deletion oracle matcher for tiny
graphs.

The polynomial matcher (`PolyMatcher`) keeps two match kinds.  Left nodes
with at least a third of their neighborhood matched are *protected*; a
protected node that loses or lacks a standard match holds a *virtual*
match, a reserved right node nobody else may take.  Requests of protected
nodes are served by promoting the virtual match; everything else is
matched to any free neighbor, after which newly protected matchless nodes
are drained one by one via private unmatched right nodes.

The fast matcher (`PrepMatcher`) unions a fast expander F with a slow
graph G owned by a polynomial matcher.  A periodic preparation pass
recomputes the set A of at-risk left nodes (half their F-neighborhood
disabled), reserves G-matches for them, and restarts a round-limited
ladder on the induced subgraph F' of F.  Requests hit the reservation for
members of A and the ladder otherwise, so the steady-state cost per
operation is a ladder scan.
"""

from __future__ import annotations

import math

import numpy as np

from .bigraph import expansion_check, expansion_check_fast, induced
from .ladder import RoundTMatcher
from .strategy import (
    MatcherInvariantError,
    MatcherStrategy,
    MissingPrecomputedMatchError,
    NoFreeNeighborError,
    PremiseError,
    ProjectedMatcher,
    StripedMatcher,
    TrivialPairMatcher,
)
from .util import combination_rows, popcount

__all__ = [
    "PolyMatcher",
    "PrepMatcher",
    "AlternatingMatcher",
    "FFPMatcher",
    "ffp_premises_hold",
    "build_fast_matcher",
    "build_theorem_matcher",
    "poly_expansion_requirement",
]


def poly_expansion_requirement(degree: int):
    """Expansion factor the polynomial matcher relies on: 2/3 D + 2."""
    from fractions import Fraction

    return Fraction(2 * degree, 3) + 2


class PolyMatcher(MatcherStrategy):
    """Load-1 dynamic matching via protected nodes and virtual matches.

    Needs a left-regular graph with (2/3 D + 2)-expansion up to
    capacity + 1 (caller-verified; desk-scale graphs can be checked with
    `expansion_check`).  Every operation costs polynomial work in the
    graph size; the per-reply invariants are asserted as it runs.
    """

    requires_left_regular = True

    def __init__(self, graph, capacity: int) -> None:
        super().__init__()
        if not graph.left_regular:
            raise PremiseError("polynomial matcher needs a left-regular graph")
        if graph.degree > graph.left_size:
            raise PremiseError("degree above left size; such instances are out of scope")
        self.graph = graph
        self.capacity = capacity
        self.right_size = graph.right_size
        self.load_bound = 1
        self.threshold = -(-graph.degree // 3)  # ceil(D/3)
        self.right_nbrs = [[] for _ in range(graph.right_size)]
        for x in range(graph.left_size):
            for y in graph.neighbors(x):
                self.right_nbrs[y].append(x)
        self.std: dict[int, int] = {}
        self.virt: dict[int, int] = {}
        self.owner: dict[int, int] = {}
        self.mcount = [0] * graph.left_size
        self.stats = {"promotions": 0, "demotions": 0, "drains": 0, "cascades": 0}

    # -- bookkeeping --------------------------------------------------------

    def _has_match(self, x: int) -> bool:
        return x in self.std or x in self.virt

    def is_protected(self, x: int) -> bool:
        return self.mcount[x] >= self.threshold

    def protected_nodes(self):
        return [x for x in range(self.graph.left_size) if self.is_protected(x)]

    def _mark_matched(self, y: int, x: int, pending: list) -> None:
        self.owner[y] = x
        for x2 in self.right_nbrs[y]:
            self.probes += 1
            self.mcount[x2] += 1
            if self.mcount[x2] == self.threshold and not self._has_match(x2):
                pending.append(x2)

    def _mark_unmatched(self, y: int) -> list:
        del self.owner[y]
        dropped = []
        for x2 in self.right_nbrs[y]:
            self.probes += 1
            self.mcount[x2] -= 1
            if self.mcount[x2] < self.threshold:
                dropped.append(x2)
        return dropped

    # -- the drain loop ------------------------------------------------------

    def _drain(self, pending: list) -> None:
        S = set(pending)
        while S:
            self.stats["drains"] += 1
            for x2 in S:
                assert self.mcount[x2] == self.threshold, (
                    f"pending node {x2} holds {self.mcount[x2]} matched neighbors, "
                    f"not exactly {self.threshold}")
            choice = None
            for y in range(self.graph.right_size):
                if y in self.owner:
                    continue
                cnt = 0
                hit = None
                for x2 in self.right_nbrs[y]:
                    self.probes += 1
                    if x2 in S:
                        cnt += 1
                        hit = x2
                        if cnt > 1:
                            break
                if cnt == 1:
                    choice = (y, hit)
                    break
            if choice is None:
                raise MatcherInvariantError(
                    "no unmatched right node is private for the pending set; "
                    "the expansion premise is broken")
            y, x2 = choice
            S.discard(x2)
            self.virt[x2] = y
            grew: list = []
            self._mark_matched(y, x2, grew)
            S.update(grew)

    # -- strategy interface --------------------------------------------------

    def request(self, x: int):
        if x in self.std:
            raise MatcherInvariantError(f"{x} already carries a standard match")
        if len(self.std) >= self.capacity:
            raise MatcherInvariantError("standard matches already at capacity")
        if self.is_protected(x):
            y = self.virt.pop(x, None)
            if y is None:
                raise MatcherInvariantError(
                    f"protected node {x} has no virtual match to promote")
            self.std[x] = y
            self.stats["promotions"] += 1
            return (y,)
        if x in self.virt:
            raise MatcherInvariantError(
                f"unprotected node {x} still holds a virtual match")
        y = None
        for cand in self.graph.neighbors(x):
            self.probes += 1
            if cand not in self.owner:
                y = cand
                break
        if y is None:
            raise NoFreeNeighborError(
                f"unprotected node {x} has no unmatched neighbor")
        self.std[x] = y
        pending: list = []
        self._mark_matched(y, x, pending)
        self._drain(pending)
        return (y,)

    def retract(self, x: int, ys) -> None:
        (y,) = tuple(ys)
        if self.std.get(x) != y:
            raise MatcherInvariantError(f"({x}, {y}) is not a standard match")
        del self.std[x]
        if self.is_protected(x):
            self.virt[x] = y
            self.stats["demotions"] += 1
            return
        dirty = self._mark_unmatched(y)
        while dirty:
            x2 = dirty.pop()
            if x2 in self.virt and self.mcount[x2] < self.threshold:
                y2 = self.virt.pop(x2)
                self.stats["cascades"] += 1
                dirty.extend(self._mark_unmatched(y2))

    def reset(self) -> None:
        self.std.clear()
        self.virt.clear()
        self.owner.clear()
        self.mcount = [0] * self.graph.left_size
        for k in self.stats:
            self.stats[k] = 0

    def inject_fault(self) -> str:
        if not self.owner:
            raise MatcherInvariantError("nothing to corrupt: no matches held")
        y = next(iter(self.owner))
        del self.owner[y]
        return f"forgot the occupant of right node {y}"

    # -- audits ---------------------------------------------------------------

    def audit(self) -> None:
        self.check_invariants()

    def check_invariants(self) -> None:
        """Full recomputation of the quiescent-state invariants."""
        assert not set(self.std) & set(self.virt), "a node holds both match kinds"
        images = list(self.std.values()) + list(self.virt.values())
        assert len(images) == len(set(images)), "two matches share a right node"
        owner = {}
        for x, y in self.std.items():
            owner[y] = x
        for x, y in self.virt.items():
            owner[y] = x
        assert owner == self.owner, "ownership map out of sync"
        for x in range(self.graph.left_size):
            true_count = sum(1 for y in self.graph.neighbors(x) if y in self.owner)
            assert true_count == self.mcount[x], f"stale matched-neighbor count at {x}"
        protected = self.protected_nodes()
        for x in protected:
            assert self._has_match(x), f"protected node {x} lacks a match"
        assert len(protected) <= self.capacity, (
            f"{len(protected)} protected nodes exceed the capacity {self.capacity}")


class PrepMatcher(MatcherStrategy):
    """Fast dynamic matching with periodic preparation.

    `fast_graph` F must expand by D/2 + 3 up to the capacity; `slow` is a
    load-1 strategy of capacity at least twice the game capacity, answering
    in its own right space (offset after F's right nodes in replies).

    Reservations unify the paper-level queue and precomputation: a slow
    assignment either backs a live game match or sits reserved for its
    node; preparation retracts every reservation, recomputes the at-risk
    set, and re-reserves.  A retracted slow-side edge simply returns to
    reserved state, so its right node stays blocked until the next
    preparation, and a repeat request can reuse it.
    """

    def __init__(self, fast_graph, slow: MatcherStrategy, capacity: int,
                 period: int | None = None, check_view_expansion: bool = False,
                 use_fast_checker: bool = True, chunk_budget: int | None = None) -> None:
        super().__init__()
        self.F = fast_graph
        self.slow = slow
        self.capacity = capacity
        self.period = period if period is not None else max(2 * capacity, fast_graph.right_size)
        self.check_view_expansion = check_view_expansion
        self.use_fast_checker = use_fast_checker
        self.chunk_budget = chunk_budget
        self.at_risk_threshold = -(-fast_graph.degree // 2)  # ceil(D/2)
        # chunked scans stretch the period, so give the ladder round slack
        ladder_rounds = self.period if chunk_budget is None else \
            2 * self.period + fast_graph.left_size
        self.ladder = RoundTMatcher(fast_graph, capacity, ladder_rounds)
        self.right_size = fast_graph.right_size + slow.right_size
        self.load_bound = max(self.ladder.copies, slow.load_bound)
        self.at_risk: frozenset = frozenset()
        self.view = None
        self.reserved: dict[int, int] = {}
        self.records: dict[int, tuple] = {}
        self.rounds_since_prep = 0
        self.preparations = 0
        self._prep_work = 0
        self._scan = None
        self.prepare()

    # -- preparation -----------------------------------------------------------

    def _disabled_rights(self) -> set:
        out = set()
        for taken in self.ladder.ladder.taken:
            arr = np.frombuffer(bytes(taken), dtype=np.uint8)
            out.update(np.flatnonzero(arr).tolist())
        return out

    def _scan_units(self):
        """Generator form of the preparation scan: one yield per unit of
        work, producing (disabled, at_risk) at the end."""
        disabled = set()
        for taken in self.ladder.ladder.taken:
            arr = np.frombuffer(bytes(taken), dtype=np.uint8)
            disabled.update(np.flatnonzero(arr).tolist())
            yield None
        at_risk = set()
        for x in range(self.F.left_size):
            hits = sum(1 for y in self.F.neighbors(x) if y in disabled)
            self.probes += self.F.degree
            if hits >= self.at_risk_threshold:
                at_risk.add(x)
            yield None
        yield disabled, at_risk

    def _check_view(self, at_risk, enabled) -> None:
        lefts = [x for x in range(self.F.left_size) if x not in at_risk]
        from .bigraph import BiGraph

        probe = BiGraph(len(lefts), self.F.right_size,
                        [tuple(y for y in self.F.neighbors(x) if y in enabled)
                         for x in lefts])
        ok = (expansion_check_fast(probe, 3, self.capacity)
              if self.use_fast_checker
              else expansion_check(probe, 3, self.capacity).holds)
        if not ok:
            raise MatcherInvariantError(
                "induced fast subgraph lost 3-expansion after preparation")

    def _apply_preparation(self, disabled: set, at_risk: set) -> None:
        for x, z in self.reserved.items():
            self.slow.retract(x, (z,))
        self.reserved.clear()
        enabled = set(range(self.F.right_size)) - disabled
        if len(at_risk) > self.capacity:
            raise MatcherInvariantError(
                f"at-risk set has {len(at_risk)} nodes, above the capacity "
                f"{self.capacity}; the expansion premise is broken")
        self.at_risk = frozenset(at_risk)
        self.view = induced(self.F, at_risk, enabled)
        if self.check_view_expansion:
            self._check_view(at_risk, enabled)
        self.ladder.reset_period(self.view)
        for x in sorted(at_risk):
            if x not in self.records:
                (z,) = self.slow.request(x)
                self.reserved[x] = z
        self.rounds_since_prep = 0

    def prepare(self) -> None:
        """Blocking preparation: full scan plus apply in one call."""
        before = self._raw_work()
        self.preparations += 1
        self._scan = None
        result = None
        for result in self._scan_units():
            pass
        self._apply_preparation(*result)
        self._prep_work += self._raw_work() - before

    def _advance_chunks(self) -> None:
        if self._scan is None:
            self._scan = self._scan_units()
            self.preparations += 1
        before = self._raw_work()
        for _ in range(self.chunk_budget):
            step = next(self._scan, None)
            if step is not None:
                self._apply_preparation(*step)
                self._scan = None
                break
        self._prep_work += self._raw_work() - before

    # -- strategy interface ------------------------------------------------------

    def request(self, x: int):
        if self.rounds_since_prep >= self.period:
            if self.chunk_budget is None:
                self.prepare()
            else:
                self._advance_chunks()
        if x in self.at_risk:
            z = self.reserved.pop(x, None)
            if z is None:
                raise MissingPrecomputedMatchError(
                    f"at-risk node {x} has no reserved slow-side match")
            self.records[x] = ("slow", z)
            self.rounds_since_prep += 1
            return (self.F.right_size + z,)
        (y,) = self.ladder.request(x)
        self.records[x] = ("fast", y)
        self.rounds_since_prep += 1
        return (y,)

    def retract(self, x: int, ys) -> None:
        side, coord = self.records.pop(x)
        if side == "fast":
            self.ladder.retract(x, (coord,))
        else:
            # slow-side edges wait for the next preparation; the
            # assignment returns to reserved state and stays blocked
            self.reserved[x] = coord

    def reset(self) -> None:
        self.slow.reset()
        self.ladder.reset()
        self.reserved.clear()
        self.records.clear()
        self.at_risk = frozenset()
        self.rounds_since_prep = 0
        self.preparations = 0
        self._prep_work = 0
        self.prepare()

    def _raw_work(self) -> int:
        return self.probes + self.ladder.work() + self.slow.work()

    def work(self) -> int:
        """Fast-path work only; preparation cost is tracked separately."""
        return self._raw_work() - self._prep_work

    @property
    def prep_work(self) -> int:
        return self._prep_work

    def audit(self) -> None:
        self.ladder.audit()
        self.slow.audit()
        assert len(self.at_risk) <= self.capacity
        overlap = set(self.reserved) & {x for x, r in self.records.items()
                                        if r[0] == "slow"}
        assert not overlap, f"nodes {overlap} both reserved and active"

    def inject_fault(self) -> str:
        return self.ladder.inject_fault()


class AlternatingMatcher(MatcherStrategy):
    """Serve blocks of `period` requests from two halves alternately.

    While one half answers, the other is idle; when play switches, the
    incoming half runs its preparation first.  Each half answers in its
    own right-node space; half 1 is offset by the half width.
    """

    def __init__(self, halves, period: int) -> None:
        super().__init__()
        a, b = halves
        if a.right_size != b.right_size:
            raise ValueError("halves must share a right-space width")
        self.halves = (a, b)
        self.period = period
        self.width = a.right_size
        self.right_size = 2 * a.right_size
        self.load_bound = max(a.load_bound, b.load_bound)
        self.rounds = 0
        self._current = 0
        self._owner: dict[int, int] = {}

    def request(self, x: int):
        half = (self.rounds // self.period) % 2
        if half != self._current:
            self.halves[half].prepare()
            self._current = half
        ys = self.halves[half].request(x)
        self._owner[x] = half
        self.rounds += 1
        return tuple(half * self.width + y for y in ys)

    def retract(self, x: int, ys) -> None:
        half = self._owner.pop(x)
        self.halves[half].retract(x, tuple(y - half * self.width for y in ys))

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


def build_fast_matcher(g, K: int, period: int | None = None,
                       check_view_expansion: bool = False) -> ProjectedMatcher:
    """One preparation-based matcher on g, projected back onto g's rights.

    The slow side is three polynomial matchers striped over a 3-clone of
    g, which provides load-1 dynamic matching up to 3 (K - 1) >= 2K.
    """
    if K < 3:
        raise ValueError("composition needs capacity at least 3")
    polys = [PolyMatcher(g, K - 1) for _ in range(3)]
    slow = StripedMatcher(polys, [K - 1] * 3, g.right_size)
    prep = PrepMatcher(g, slow, K, period, check_view_expansion)
    load = prep.ladder.copies + 3
    return ProjectedMatcher(prep, g.right_size, load)


def build_theorem_matcher(g, K: int, period: int | None = None,
                          check_view_expansion: bool = False) -> MatcherStrategy:
    """Dynamic matching with logarithmic load on a (2/3 D + 2)-expander.

    Capacity up to 2 is served by the trivial load-2 matcher.  Otherwise
    two preparation-based halves (each: g unioned with a 3-clone of g run
    by polynomial matchers) alternate so that preparations happen off the
    serving half; the composite answers in g's own right space.
    """
    if K <= 2:
        return TrivialPairMatcher(g)
    period = period if period is not None else max(2 * K, g.right_size)

    def make_half():
        polys = [PolyMatcher(g, K - 1) for _ in range(3)]
        slow = StripedMatcher(polys, [K - 1] * 3, g.right_size)
        return PrepMatcher(g, slow, K, period, check_view_expansion)

    inner = AlternatingMatcher([make_half(), make_half()], period)
    load = 2 * (inner.halves[0].ladder.copies + 3)
    return ProjectedMatcher(inner, g.right_size, load)


# ---------------------------------------------------------------------------
# the node-deletion oracle matcher


def _min_neighbors_hold(g, size_lo: int, size_hi: int, slack: int) -> tuple:
    """Check #N(S) >= #S + slack for all S with size_lo <= #S <= size_hi.
    Returns (holds, witness)."""
    from .bigraph import _mask_words

    words = _mask_words(g)
    n = g.left_size
    for size in range(size_lo, min(size_hi, n) + 1):
        rows = combination_rows(n, size)
        for lo in range(0, len(rows), 120_000):
            chunk = rows[lo : lo + 120_000]
            union_ = np.bitwise_or.reduce(words[chunk], axis=1)
            counts = popcount(union_).sum(axis=1)
            bad = np.flatnonzero(counts < size + slack)
            if len(bad):
                return False, tuple(int(v) for v in chunk[bad[0]])
    return True, None


def ffp_premises_hold(g, K: int) -> tuple:
    """Premises of the deletion matcher: 1-expansion up to K, and every
    left set S with K < #S <= 2K has at least #S + K neighbors."""
    w = expansion_check(g, 1, K)
    if not w.holds:
        return False, w.violating_set
    return _min_neighbors_hold(g, K + 1, 2 * K, K)


class FFPMatcher(MatcherStrategy):
    """Dynamic matching by explicit node deletion on a working copy.

    Serving x picks the lowest neighbor y whose deletion (together with x)
    keeps 1-expansion up to K on the working copy, verified exhaustively;
    retraction restores both endpoints.  Exponential per request and only
    for tiny graphs, but it needs nothing beyond the offline premises, so
    it doubles as an oracle for the fast matchers.
    """

    def __init__(self, graph, K: int, verify_premises: bool = True) -> None:
        super().__init__()
        if graph.right_size > 63:
            raise PremiseError("deletion matcher supports at most 63 right nodes")
        if verify_premises:
            ok, witness = ffp_premises_hold(graph, K)
            if not ok:
                raise PremiseError(f"offline premises fail, witness {witness}")
        self.graph = graph
        self.K = K
        self.right_size = graph.right_size
        self.load_bound = 1
        self.masks = np.array(neighbor_mask_list(graph), dtype=np.uint64)
        self.enabled_left = set(range(graph.left_size))
        self.enabled_right = set(range(graph.right_size))
        self.matches: dict[int, int] = {}

    def _hall_ok(self, skip_left: int, skip_right: int) -> bool:
        """1-expansion up to K with skip_left and skip_right also deleted."""
        lefts = [x for x in self.enabled_left if x != skip_left]
        if not lefts:
            return True
        rights = [y for y in self.enabled_right if y != skip_right]
        rmask = np.uint64(0)
        for y in rights:
            rmask |= np.uint64(1 << y)
        lmasks = self.masks[lefts] & rmask
        self.probes += len(lefts)
        bits = np.array([np.uint64(1 << y) for y in rights], dtype=np.uint64)
        for size in range(0, min(self.K - 1, len(rights)) + 1):
            rows = combination_rows(len(rights), size)
            ymasks = (np.bitwise_or.reduce(bits[rows], axis=1)
                      if size else np.zeros(1, dtype=np.uint64))
            self.probes += len(ymasks)
            covered = (lmasks[None, :] & ~ymasks[:, None]) == 0
            if np.any(covered.sum(axis=1) > size):
                return False
        return True

    def request(self, x: int):
        if x not in self.enabled_left:
            raise MatcherInvariantError(f"{x} is already matched")
        for y in self.graph.neighbors(x):
            if y not in self.enabled_right:
                continue
            if self._hall_ok(x, y):
                self.enabled_left.discard(x)
                self.enabled_right.discard(y)
                self.matches[x] = y
                return (y,)
        raise MatcherInvariantError(
            f"every neighbor of {x} is bad; the offline premises are broken")

    def retract(self, x: int, ys) -> None:
        y = self.matches.pop(x)
        self.enabled_left.add(x)
        self.enabled_right.add(y)

    def reset(self) -> None:
        self.enabled_left = set(range(self.graph.left_size))
        self.enabled_right = set(range(self.graph.right_size))
        self.matches.clear()

    def fork(self) -> "FFPMatcher":
        other = FFPMatcher.__new__(FFPMatcher)
        MatcherStrategy.__init__(other)
        other.graph = self.graph
        other.K = self.K
        other.right_size = self.right_size
        other.load_bound = 1
        other.masks = self.masks
        other.enabled_left = set(self.enabled_left)
        other.enabled_right = set(self.enabled_right)
        other.matches = dict(self.matches)
        return other

    def state_key(self):
        return frozenset(self.matches.items())

    def audit(self) -> None:
        lefts = set(range(self.graph.left_size)) - set(self.matches)
        rights = set(range(self.graph.right_size)) - set(self.matches.values())
        assert lefts == self.enabled_left, "enabled left set out of sync"
        assert rights == self.enabled_right, "enabled right set out of sync"
        assert len(set(self.matches.values())) == len(self.matches)


def neighbor_mask_list(g) -> list[int]:
    out = []
    for x in range(g.left_size):
        m = 0
        for y in g.neighbors(x):
            m |= 1 << y
        out.append(m)
    return out
