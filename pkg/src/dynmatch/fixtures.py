"""Canonical small graphs and frozen expander fixtures.

The two 3x2 demo graphs separate the matching notions: the first has
offline matching up to 2 but loses the incremental game; the second wins
the incremental (even 3-round) game yet loses the dynamic game.  The
killer adversary plays the dynamic-game winning line against any matcher
on the second graph.

Frozen expander seeds live in `calibrated.py`, regenerated by
scripts/calibrate.py; `fixture_expander` rebuilds a graph from its frozen
entry, and callers re-verify it with the brute-force checker when the
context demands a certified instance.
"""

from __future__ import annotations

from .bigraph import BiGraph, sample_random
from .game import Game, Move
from . import calibrated

__all__ = [
    "offline_only_graph",
    "incremental_only_graph",
    "DynamicKiller",
    "fixture_expander",
    "fixture_entry",
]

# left nodes a, b, c = 0, 1, 2; right nodes u, v = 0, 1


def offline_only_graph() -> BiGraph:
    """Edges a-u, b-u, b-v, c-v: offline matching up to 2, but requesting b
    first kills any incremental strategy."""
    return BiGraph(3, 2, [(0,), (0, 1), (1,)])


def incremental_only_graph() -> BiGraph:
    """Edges a-u, a-v, b-u, b-v, c-v: incremental matching up to 2 (even for
    3 rounds), but no dynamic matching up to 2."""
    return BiGraph(3, 2, [(0, 1), (0, 1), (1,)])


class DynamicKiller:
    """The adaptive winning line for Requester on `incremental_only_graph`
    with capacity 2: request b; if it was matched to u, request a (forced
    to v), then drop b's edge and request c; if b went to v instead,
    request c immediately."""

    def __init__(self) -> None:
        self.script = None

    def move(self, game: Game):
        st = game.state
        rnd = st.round
        if rnd == 0:
            return Move(request=1)
        b_edge = st.active.get(1)
        if rnd == 1:
            if b_edge and b_edge[0][0] == 1:  # b went to v: c is dead now
                return Move(request=2)
            return Move(request=0)
        if rnd == 2:
            if b_edge:
                return Move(request=2, retracts=((1, b_edge[0][0]),))
            return Move(request=2)
        return None


def fixture_entry(name: str) -> dict:
    entry = calibrated.EXPANDERS.get(name)
    if entry is None:
        raise KeyError(
            f"no frozen fixture {name!r}; run scripts/calibrate.py first")
    return entry


def fixture_expander(name: str) -> BiGraph:
    """Rebuild a frozen expander fixture (does not re-verify by itself)."""
    e = fixture_entry(name)
    return sample_random(e["left"], e["right"], e["degree"], e["seed"])
