"""Matcher-side interface shared by every matching algorithm.

A strategy answers `request(x)` with a tuple of right nodes (a single node
for plain matching, a set for rich matching), accepts `retract(x, ys)` for
edges the requester removed, and may expose `prepare()` for periodic
bookkeeping.  `work()` totals elementary data-structure touches so tests
can pin worst-case work per operation.
"""

from __future__ import annotations


class MatcherInvariantError(RuntimeError):
    """A matcher precondition was broken; distinct from losing the game."""


class NoFreeNeighborError(MatcherInvariantError):
    pass


class NoRichCopyError(MatcherInvariantError):
    pass


class StaleEdgeError(MatcherInvariantError):
    pass


class MissingPrecomputedMatchError(MatcherInvariantError):
    pass


class PremiseError(ValueError):
    """Graph does not meet the structural requirements of a matcher."""


class MatcherStrategy:
    requires_left_regular = False

    def __init__(self) -> None:
        self.probes = 0
        self.load_bound = 1
        self.right_size = 0

    def request(self, x: int):
        raise NotImplementedError

    def retract(self, x: int, ys) -> None:
        raise NotImplementedError

    def prepare(self) -> None:
        pass

    def reset(self) -> None:
        raise NotImplementedError

    def work(self) -> int:
        """Total probe count; composites add in their children."""
        return self.probes

    def audit(self) -> None:
        """Recompute internal invariants; raise AssertionError on damage."""

    def inject_fault(self) -> str:
        raise NotImplementedError(f"{type(self).__name__} has no fault hook")


class FirstFreeMatcher(MatcherStrategy):
    """Greedy baseline: match to the first neighbor with spare load, concede
    (return None) when there is none.  No cleverness on purpose; it is the
    victim for adversary tests and the right choice on complete graphs."""

    def __init__(self, graph, load: int = 1) -> None:
        super().__init__()
        self.graph = graph
        self.load_bound = load
        self.right_size = graph.right_size
        self._load = {}
        self._records = {}

    def request(self, x: int):
        for y in self.graph.neighbors(x):
            self.probes += 1
            if self._load.get(y, 0) < self.load_bound:
                self._load[y] = self._load.get(y, 0) + 1
                self._records[x] = y
                return (y,)
        return None

    def retract(self, x: int, ys) -> None:
        y = self._records.pop(x)
        self._load[y] -= 1

    def reset(self) -> None:
        self._load.clear()
        self._records.clear()

    def fork(self) -> "FirstFreeMatcher":
        other = FirstFreeMatcher(self.graph, self.load_bound)
        other._load = dict(self._load)
        other._records = dict(self._records)
        return other

    def state_key(self):
        return frozenset(self._records.items())


class TrivialPairMatcher(MatcherStrategy):
    """Capacity-2 base case: any two nodes can be served with load 2 by
    picking a least-loaded neighbor."""

    def __init__(self, graph) -> None:
        super().__init__()
        self.graph = graph
        self.load_bound = 2
        self.right_size = graph.right_size
        self._load = {}
        self._records = {}

    def request(self, x: int):
        row = self.graph.neighbors(x)
        if not row:
            raise NoFreeNeighborError(f"left node {x} is isolated")
        self.probes += len(row)
        y = min(row, key=lambda y: (self._load.get(y, 0), y))
        self._load[y] = self._load.get(y, 0) + 1
        self._records[x] = y
        return (y,)

    def retract(self, x: int, ys) -> None:
        y = self._records.pop(x)
        self._load[y] -= 1

    def reset(self) -> None:
        self._load.clear()
        self._records.clear()


class StripedMatcher(MatcherStrategy):
    """Route requests across independent copies of a load-1 strategy.

    Copy i answers in its own right-node space of width `stripe_width`;
    replies are offset by i * stripe_width, which realizes matching on a
    clone graph.  A request goes to the first copy with spare capacity.
    """

    def __init__(self, instances, capacities, stripe_width: int) -> None:
        super().__init__()
        self.instances = list(instances)
        self.capacities = list(capacities)
        self.stripe_width = stripe_width
        self.right_size = len(self.instances) * stripe_width
        self.load_bound = 1
        self._active = [0] * len(self.instances)
        self._records = {}

    def request(self, x: int):
        for i, inst in enumerate(self.instances):
            self.probes += 1
            if self._active[i] < self.capacities[i]:
                ys = inst.request(x)
                self._active[i] += 1
                self._records[x] = i
                return tuple(i * self.stripe_width + y for y in ys)
        raise MatcherInvariantError("all striped copies at capacity")

    def retract(self, x: int, ys) -> None:
        i = self._records.pop(x)
        self.instances[i].retract(x, tuple(y - i * self.stripe_width for y in ys))
        self._active[i] -= 1

    def reset(self) -> None:
        for inst in self.instances:
            inst.reset()
        self._active = [0] * len(self.instances)
        self._records.clear()

    def work(self) -> int:
        return self.probes + sum(inst.work() for inst in self.instances)

    def audit(self) -> None:
        for inst in self.instances:
            inst.audit()


class ProjectedMatcher(MatcherStrategy):
    """Collapse clone-space replies back onto the base right set.

    A reply y in a clone of width `base_width` projects to y % base_width;
    the pre-projection coordinates are remembered so retractions can be
    routed back exactly.
    """

    def __init__(self, inner: MatcherStrategy, base_width: int, load_bound: int) -> None:
        super().__init__()
        self.inner = inner
        self.base_width = base_width
        self.load_bound = load_bound
        self.right_size = base_width
        self.requires_left_regular = inner.requires_left_regular
        self._records = {}

    def request(self, x: int):
        ys = self.inner.request(x)
        self._records[x] = ys
        return tuple(y % self.base_width for y in ys)

    def retract(self, x: int, ys) -> None:
        self.inner.retract(x, self._records.pop(x))

    def prepare(self) -> None:
        self.inner.prepare()

    def reset(self) -> None:
        self.inner.reset()
        self._records.clear()

    def work(self) -> int:
        return self.probes + self.inner.work()

    def audit(self) -> None:
        self.inner.audit()

    def inject_fault(self) -> str:
        return self.inner.inject_fault()
