"""Referee for the dynamic matching game and its variants.

The game: Requester retracts edges and names a left node, Matcher must
cover that node without pushing any right node beyond the load bound.
Variants toggled by `GameConfig`: incremental (no retractions), bounded
round count, forced expiration of old edges, and rich replies (a fraction
of the whole neighborhood per request).

The referee is strict about whose fault a failure is: an illegal
Requester move raises `IllegalRequesterMove`, while a bad Matcher reply
produces a `LossReport`.  Requester bugs must never read as Matcher
losses.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .strategy import MatcherStrategy
from .util import derive_seed

__all__ = [
    "GameConfig",
    "Move",
    "MatchState",
    "LossReport",
    "IllegalRequesterMove",
    "GameOver",
    "Game",
    "RunStats",
    "RandomAdversary",
    "PressureAdversary",
    "ScriptedMatcher",
    "moves_to_lines",
    "lines_to_moves",
    "replay",
    "requester_can_force_loss",
    "find_loss_against",
]


class IllegalRequesterMove(ValueError):
    pass


class GameOver(RuntimeError):
    pass


@dataclass(frozen=True)
class GameConfig:
    """Parameters of one matching game.

    capacity    -- K: at most K-1 distinct matched left nodes may remain
                   after Requester's retraction phase.
    load        -- bound on edges per right node.
    expiration  -- edges born in round i must be retracted by round i+T.
    round_limit -- game ends (Matcher survives) after this many rounds.
    incremental -- retraction forbidden; at most `capacity` requests.
    rich        -- epsilon: replies must carry >= (1-eps)*D edges.
    """

    capacity: int
    load: int = 1
    expiration: int | None = None
    round_limit: int | None = None
    incremental: bool = False
    rich: float | None = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        if self.incremental and self.expiration is not None:
            raise ValueError("incremental games cannot have expiration")
        if self.rich is not None and not 0 <= self.rich < 1:
            raise ValueError("rich fraction must be in [0, 1)")


@dataclass(frozen=True)
class Move:
    """One Requester turn: edges to retract, then the requested left node."""

    request: int
    retracts: tuple = ()


@dataclass(frozen=True)
class LossReport:
    rule: str
    round: int
    request: int
    reply: tuple | None = None

    def __str__(self):
        return f"Matcher lost in round {self.round} on request {self.request}: {self.rule}"


class MatchState:
    """Evolving edge multiset with per-right loads and per-left assignments."""

    def __init__(self) -> None:
        self.round = 0
        self.load_of: dict[int, int] = {}
        self.active: dict[int, list] = {}  # left -> [(right, birth), ...]
        self.edge_total = 0

    def active_lefts(self):
        return self.active.keys()

    def has_edge(self, x: int, y: int) -> bool:
        return any(e[0] == y for e in self.active.get(x, ()))

    def add_reply(self, x: int, ys, birth: int) -> None:
        entry = self.active.setdefault(x, [])
        for y in ys:
            entry.append((y, birth))
            self.load_of[y] = self.load_of.get(y, 0) + 1
            self.edge_total += 1

    def remove_edge(self, x: int, y: int) -> None:
        entry = self.active[x]
        for i, (yy, _) in enumerate(entry):
            if yy == y:
                del entry[i]
                break
        else:
            raise KeyError((x, y))
        if not entry:
            del self.active[x]
        self.load_of[y] -= 1
        if not self.load_of[y]:
            del self.load_of[y]
        self.edge_total -= 1

    def edges(self):
        for x, entry in self.active.items():
            for y, birth in entry:
                yield x, y, birth

    def max_load(self) -> int:
        return max(self.load_of.values(), default=0)

    def snapshot(self):
        return (
            self.round,
            tuple(sorted((x, y, b) for x, y, b in self.edges())),
        )

    def check(self, config: GameConfig) -> None:
        """Internal consistency + config invariants; used after every step."""
        loads: dict[int, int] = {}
        for x, y, birth in self.edges():
            loads[y] = loads.get(y, 0) + 1
            assert loads[y] <= config.load, f"load bound broken at right node {y}"
            if config.expiration is not None:
                assert self.round - birth <= config.expiration, f"edge age overflow at ({x}, {y})"
        assert loads == self.load_of
        assert len(self.active) <= config.capacity


@dataclass
class RunStats:
    rounds: int = 0
    loss: LossReport | None = None
    max_load: int = 0
    op_probes: list = field(default_factory=list)

    @property
    def lost(self):
        return self.loss is not None


class Game:
    """Drives one matcher through a sequence of Requester moves."""

    def __init__(self, graph, config: GameConfig, matcher: MatcherStrategy,
                 record: bool = True, check_state: bool = True) -> None:
        if config.rich is not None and not graph.left_regular:
            raise ValueError("rich games need a left-regular graph")
        if matcher.requires_left_regular and not graph.left_regular:
            raise ValueError(f"{type(matcher).__name__} requires a left-regular graph")
        self.graph = graph
        self.config = config
        self.matcher = matcher
        self.state = MatchState()
        self.loss: LossReport | None = None
        self.finished = False
        self.record = record
        self.check_state = check_state
        self.transcript: list[str] = []
        self._requested_ever: set[int] = set()
        self._neighbor_sets = {}

    # -- helpers ----------------------------------------------------------

    def next_round(self) -> int:
        return self.state.round + 1

    def _nbrs(self, x: int):
        s = self._neighbor_sets.get(x)
        if s is None:
            s = frozenset(self.graph.neighbors(x))
            self._neighbor_sets[x] = s
        return s

    def _rich_quota(self) -> int:
        return math.ceil((1 - self.config.rich) * self.graph.degree)

    # -- one referee step ---------------------------------------------------

    def step(self, move: Move):
        """Apply one Requester move and the Matcher's reply.

        Returns the reply tuple, or a LossReport if the Matcher failed.
        Raises IllegalRequesterMove for Requester rule violations.
        """
        if self.loss is not None or self.finished:
            raise GameOver("game already over")
        cfg = self.config
        st = self.state
        st.round += 1
        rnd = st.round

        # retraction phase
        if move.retracts:
            if cfg.incremental:
                st.round -= 1
                raise IllegalRequesterMove("retraction in an incremental game")
            by_left: dict[int, list] = {}
            for x, y in move.retracts:
                by_left.setdefault(x, []).append(y)
            for x, ys in by_left.items():
                entry = st.active.get(x, ())
                have = [e[0] for e in entry]
                for y in ys:
                    if y not in have:
                        st.round -= 1
                        raise IllegalRequesterMove(f"retracting absent edge ({x}, {y})")
                if cfg.rich is not None and sorted(ys) != sorted(have):
                    st.round -= 1
                    raise IllegalRequesterMove(
                        f"rich assignments retract whole: node {x} has {len(have)} edges")
            for x, ys in by_left.items():
                for y in ys:
                    st.remove_edge(x, y)
                self.matcher.retract(x, tuple(ys))
                if self.record:
                    self.transcript.extend(f"RET {x} {y}" for y in ys)

        # expiration is the Requester's duty; round birth+T is the last
        # chance to retract, so surviving that retraction phase is a foul
        if cfg.expiration is not None:
            for x, y, birth in st.edges():
                if rnd - birth >= cfg.expiration:
                    st.round -= 1
                    raise IllegalRequesterMove(
                        f"edge ({x}, {y}) born in round {birth} outlived expiration")

        if len(st.active) > cfg.capacity - 1:
            st.round -= 1
            raise IllegalRequesterMove(
                f"{len(st.active)} matched left nodes remain; at most {cfg.capacity - 1} allowed")

        x = move.request
        if not 0 <= x < self.graph.left_size:
            st.round -= 1
            raise IllegalRequesterMove(f"request {x} out of range")
        if x in st.active:
            st.round -= 1
            raise IllegalRequesterMove(f"request {x} already has an active assignment")
        if cfg.incremental and x in self._requested_ever:
            st.round -= 1
            raise IllegalRequesterMove(f"repeat request {x} in an incremental game")
        self._requested_ever.add(x)
        if self.record:
            self.transcript.append(f"REQ {x}")

        reply = self.matcher.request(x)
        result = self._judge(x, reply)
        if isinstance(result, LossReport):
            self.loss = result
            if self.record:
                self.transcript.append(f"FAIL {result.rule}")
            return result

        st.add_reply(x, result, rnd)
        if self.record:
            self.transcript.append("REP " + " ".join(str(v) for v in (x,) + result))
        if self.check_state:
            st.check(cfg)
        if cfg.round_limit is not None and rnd >= cfg.round_limit:
            self.finished = True
        if cfg.incremental and len(self._requested_ever) >= cfg.capacity:
            self.finished = True
        return result

    def _judge(self, x: int, reply):
        rnd = self.state.round
        if reply is None:
            return LossReport("NO_REPLY", rnd, x)
        reply = tuple(int(y) for y in reply)
        if not reply:
            return LossReport("NO_REPLY", rnd, x)
        if len(set(reply)) != len(reply):
            return LossReport("DUPLICATE_EDGE", rnd, x, reply)
        nbrs = self._nbrs(x)
        for y in reply:
            if y not in nbrs:
                return LossReport("EDGE_NOT_IN_GRAPH", rnd, x, reply)
        for y in reply:
            if self.state.load_of.get(y, 0) + 1 > self.config.load:
                return LossReport("LOAD_EXCEEDED", rnd, x, reply)
        if self.config.rich is not None and len(reply) < self._rich_quota():
            return LossReport("RICH_DEFICIT", rnd, x, reply)
        if self.config.rich is None and len(reply) != 1:
            return LossReport("EXTRA_EDGES", rnd, x, reply)
        return reply

    # -- driving loops ------------------------------------------------------

    def play(self, adversary, steps: int) -> RunStats:
        stats = RunStats()
        for _ in range(steps):
            if self.loss is not None or self.finished:
                break
            move = adversary.move(self)
            if move is None:
                break
            before = self.matcher.work()
            self.step(move)
            stats.op_probes.append(self.matcher.work() - before)
            stats.rounds = self.state.round
            stats.max_load = max(stats.max_load, self.state.max_load())
            if self.loss is not None:
                stats.loss = self.loss
        return stats


# ---------------------------------------------------------------------------
# adversaries


class RandomAdversary:
    """Legal random Requester: forced expirations first, an optional extra
    retraction biased toward old edges, then a uniform request among the
    currently unmatched left nodes.  Deterministic under its seed."""

    def __init__(self, seed: int, config: GameConfig, retract_prob: float = 0.3) -> None:
        self.rng = random.Random(derive_seed(seed, "random_adversary"))
        self.config = config
        self.retract_prob = retract_prob

    def move(self, game: Game):
        cfg = self.config
        st = game.state
        if cfg.incremental:
            eligible = sorted(set(range(game.graph.left_size)) - game._requested_ever)
            if not eligible or len(game._requested_ever) >= cfg.capacity:
                return None
            return Move(request=self.rng.choice(eligible))

        nxt = game.next_round()
        edges = sorted(st.edges(), key=lambda e: (e[2], e[0], e[1]))
        retracts = []
        retired = set()

        def retire(edge):
            x, y, _ = edge
            if cfg.rich is not None:
                for yy, _b in st.active[x]:
                    retracts.append((x, yy))
            else:
                retracts.append((x, y))
            retired.add(x)

        if cfg.expiration is not None:
            for e in edges:
                if e[0] not in retired and nxt - e[2] >= cfg.expiration:
                    retire(e)

        remaining = [e for e in edges if e[0] not in retired]
        if remaining and self.rng.random() < self.retract_prob:
            pick = remaining[0] if self.rng.random() < 0.5 else self.rng.choice(remaining)
            retire(pick)
            remaining = [e for e in remaining if e[0] not in retired]
        while len({e[0] for e in remaining}) > cfg.capacity - 1:
            retire(remaining[0])
            remaining = [e for e in remaining if e[0] not in retired]

        live = set(st.active) - retired
        eligible = [x for x in range(game.graph.left_size) if x not in live]
        if not eligible:
            return None
        return Move(request=self.rng.choice(eligible), retracts=tuple(retracts))


class PressureAdversary:
    """Deterministic stress Requester.

    Picks the unmatched left node whose neighborhood is most loaded
    (fraction of neighbors at full load, then degree, then lowest index)
    and retracts just enough edges to stay legal, preferring edges whose
    right endpoint lies outside the target's neighborhood so the pressure
    on the target survives the retraction; ties go to the oldest edge.
    """

    def __init__(self, config: GameConfig) -> None:
        self.config = config
        self._requested = 0

    def move(self, game: Game):
        cfg = self.config
        st = game.state
        graph = game.graph
        if cfg.incremental and self._requested >= cfg.capacity:
            return None

        blocked = set(st.active)
        candidates = [x for x in range(graph.left_size) if x not in blocked]
        if cfg.incremental:
            candidates = [x for x in candidates if x not in game._requested_ever]
        if not candidates:
            return None

        def score(x):
            row = graph.neighbors(x)
            if not row:
                return (2.0, 0)  # isolated node: instant kill
            full = sum(1 for y in row if st.load_of.get(y, 0) >= cfg.load)
            return (full / len(row), len(row))

        target = max(candidates, key=lambda x: (score(x), -x))
        self._requested += 1
        if cfg.incremental:
            return Move(request=target)

        nxt = game.next_round()
        target_nbrs = set(graph.neighbors(target))
        edges = sorted(st.edges(), key=lambda e: (e[2], e[0], e[1]))
        retracts = []
        retired = set()

        def retire(edge):
            x, y, _ = edge
            if cfg.rich is not None:
                for yy, _b in st.active[x]:
                    retracts.append((x, yy))
            else:
                retracts.append((x, y))
            retired.add(x)

        if cfg.expiration is not None:
            for e in edges:
                if e[0] not in retired and nxt - e[2] >= cfg.expiration:
                    retire(e)

        def live():
            return [e for e in edges if e[0] not in retired]

        preferred = [e for e in live() if e[1] not in target_nbrs]
        while len({e[0] for e in live()}) > cfg.capacity - 1:
            pool = [e for e in preferred if e[0] not in retired] or live()
            retire(pool[0])
        return Move(request=target, retracts=tuple(retracts))


class ScriptedMatcher(MatcherStrategy):
    """Replays a fixed list of replies; used to feed the referee doctored
    responses in mutation tests."""

    def __init__(self, replies) -> None:
        super().__init__()
        self.replies = list(replies)
        self.i = 0

    def request(self, x: int):
        reply = self.replies[self.i]
        self.i += 1
        return reply

    def retract(self, x: int, ys) -> None:
        pass

    def reset(self) -> None:
        self.i = 0


# ---------------------------------------------------------------------------
# transcripts


def moves_to_lines(moves) -> list[str]:
    lines = []
    for m in moves:
        lines.extend(f"RET {x} {y}" for x, y in m.retracts)
        lines.append(f"REQ {m.request}")
    return lines


def lines_to_moves(lines) -> list[Move]:
    """Parse requester moves out of a transcript; REP/FAIL lines are
    validated for shape and skipped."""
    moves = []
    pending: list[tuple] = []
    for line in lines:
        toks = line.split()
        if not toks:
            continue
        if toks[0] == "RET":
            pending.append((int(toks[1]), int(toks[2])))
        elif toks[0] == "REQ":
            moves.append(Move(request=int(toks[1]), retracts=tuple(pending)))
            pending = []
        elif toks[0] in ("REP", "FAIL"):
            continue
        else:
            raise ValueError(f"bad transcript line: {line!r}")
    if pending:
        raise ValueError("transcript ends with dangling retractions")
    return moves


def replay(graph, config: GameConfig, matcher: MatcherStrategy, lines):
    """Re-drive a transcript's Requester moves against `matcher`.

    Returns (game, divergences) where divergences lists the rounds whose
    REP/FAIL line differs from the fresh run.  With the original matcher
    the final state must reproduce exactly; a different matcher may
    legally diverge from the first reply on.
    """
    game = Game(graph, config, matcher)
    for move in lines_to_moves(lines):
        if game.loss is not None or game.finished:
            break
        game.step(move)
    recorded = [l for l in lines if l.split() and l.split()[0] in ("REP", "FAIL")]
    fresh = [l for l in game.transcript if l.split()[0] in ("REP", "FAIL")]
    divergences = [i + 1 for i, (a, b) in enumerate(zip(recorded, fresh)) if a != b]
    if len(recorded) != len(fresh):
        divergences.append(min(len(recorded), len(fresh)) + 1)
    return game, divergences


# ---------------------------------------------------------------------------
# exhaustive certificates (tiny graphs only)


def requester_can_force_loss(graph, config: GameConfig, max_rounds: int,
                             single_action_rounds: bool = False) -> bool:
    """Game-tree search over *all* Matcher strategies: can Requester force a
    loss within `max_rounds` rounds?  Exponential; meant for graphs with
    at most ~4 left nodes.

    With `single_action_rounds`, a round is either one retraction or one
    request, never both; this stricter round accounting is what makes
    bounded-round survival claims meaningful, since a combined
    retract-and-request turn packs the same pressure into fewer rounds.
    """
    from itertools import combinations as _comb

    masks = [tuple(graph.neighbors(x)) for x in range(graph.left_size)]
    cfg = config
    memo: dict[tuple, bool] = {}

    def requester_turn(edges: frozenset, requested: frozenset, rounds_left: int) -> bool:
        if rounds_left == 0:
            return False
        key = (edges, requested if cfg.incremental else None, rounds_left)
        hit = memo.get(key)
        if hit is not None:
            return hit
        edge_list = sorted(edges)
        if cfg.incremental:
            retract_options = [()]
        elif single_action_rounds:
            retract_options = [()]
        else:
            retract_options = [rs for r in range(len(edge_list) + 1)
                               for rs in _comb(edge_list, r)]
        won = False
        if single_action_rounds and not cfg.incremental:
            # a retraction consumes the whole round
            for e in edge_list:
                if requester_turn(edges - {e}, requested, rounds_left - 1):
                    won = True
                    break
        for retracts in retract_options:
            if won:
                break
            kept = edges - set(retracts)
            lefts = {x for x, _ in kept}
            if len(lefts) > cfg.capacity - 1:
                continue
            for x in range(graph.left_size):
                if x in lefts:
                    continue
                if cfg.incremental and x in requested:
                    continue
                if matcher_all_replies_lose(kept, requested | {x}, x, rounds_left):
                    won = True
                    break
        memo[key] = won
        return won

    def matcher_all_replies_lose(edges: frozenset, requested: frozenset, x: int,
                                 rounds_left: int) -> bool:
        loads: dict[int, int] = {}
        for _, y in edges:
            loads[y] = loads.get(y, 0) + 1
        legal = [y for y in masks[x] if loads.get(y, 0) < cfg.load]
        if not legal:
            return True
        if cfg.incremental and len(requested) >= cfg.capacity:
            return False  # matcher survived the whole incremental game
        return all(
            requester_turn(edges | {(x, y)}, requested, rounds_left - 1)
            for y in legal
        )

    limit = max_rounds if cfg.round_limit is None else min(max_rounds, cfg.round_limit)
    return requester_turn(frozenset(), frozenset(), limit)


def find_loss_against(graph, config: GameConfig, matcher_factory, max_states: int = 50_000):
    """Breadth-first closure of every Requester line against one concrete
    deterministic matcher.  Returns a losing move list, or None when the
    reachable state space is closed and loss-free (the matcher survives
    every adversary indefinitely).

    The matcher must expose fork() and state_key(); works for plain
    (non-rich, non-expiring) configs.
    """
    from collections import deque
    from itertools import combinations as _comb

    root = matcher_factory()
    start = (frozenset(), root)
    seen = {(frozenset(), root.state_key())}
    queue = deque([(start, [])])
    while queue:
        (edges, matcher), history = queue.popleft()
        if len(seen) > max_states:
            raise RuntimeError("state budget exhausted")
        edge_list = sorted(edges)
        retract_options = [()] if config.incremental else [
            rs for r in range(len(edge_list) + 1) for rs in _comb(edge_list, r)
        ]
        for retracts in retract_options:
            kept = edges - set(retracts)
            lefts = {x for x, _ in kept}
            if len(lefts) > config.capacity - 1:
                continue
            for x in range(graph.left_size):
                if x in lefts:
                    continue
                fork = matcher.fork()
                for xx, yy in retracts:
                    fork.retract(xx, (yy,))
                reply = fork.request(x)
                move = Move(request=x, retracts=tuple(retracts))
                if reply is None:
                    return history + [move]
                y = reply[0]
                loads: dict[int, int] = {}
                for _, yy in kept:
                    loads[yy] = loads.get(yy, 0) + 1
                if y not in graph.neighbors(x) or loads.get(y, 0) >= config.load:
                    return history + [move]
                nxt = (kept | {(x, y)}, fork)
                key = (kept | {(x, y)}, fork.state_key())
                if key not in seen:
                    seen.add(key)
                    queue.append((nxt, history + [move]))
    return None
