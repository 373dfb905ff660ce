import pytest
from hypothesis import given, settings, strategies as st

from dynmatch.bigraph import BiGraph, sample_random
from dynmatch.fixtures import (
    DynamicKiller,
    incremental_only_graph,
    offline_only_graph,
)
from dynmatch.game import (
    Game,
    GameConfig,
    IllegalRequesterMove,
    LossReport,
    Move,
    PressureAdversary,
    RandomAdversary,
    ScriptedMatcher,
    find_loss_against,
    lines_to_moves,
    moves_to_lines,
    replay,
    requester_can_force_loss,
)
from dynmatch.strategy import FirstFreeMatcher


def complete(n, m):
    return BiGraph(n, m, [tuple(range(m)) for _ in range(n)])


def fresh_game(graph=None, matcher=None, **cfg):
    graph = graph or incremental_only_graph()
    config = GameConfig(**cfg) if cfg else GameConfig(capacity=2)
    matcher = matcher or FirstFreeMatcher(graph)
    return Game(graph, config, matcher)


# -- referee steps -----------------------------------------------------------


def test_empty_game_state():
    game = fresh_game()
    assert game.state.round == 0
    assert game.state.edge_total == 0
    assert game.loss is None


def test_footnote_sequence_defeats_any_single_edge_matcher():
    # request b -> (b,u); request a -> (a,v); retract (b,u) + request c -> loss
    g = incremental_only_graph()
    game = Game(g, GameConfig(capacity=2), FirstFreeMatcher(g))
    assert game.step(Move(request=1)) == (0,)
    assert game.step(Move(request=0)) == (1,)
    out = game.step(Move(request=2, retracts=((1, 0),)))
    assert isinstance(out, LossReport)
    assert out.rule == "NO_REPLY" and out.round == 3
    assert game.transcript[-1] == "FAIL NO_REPLY"


def test_killer_adversary_beats_every_reply_branch():
    g = incremental_only_graph()

    class KeepV(FirstFreeMatcher):
        # tries to be smart: saves v for c by preferring u
        def request(self, x):
            order = sorted(self.graph.neighbors(x))
            for y in order:
                if self._load.get(y, 0) < self.load_bound:
                    self._load[y] = self._load.get(y, 0) + 1
                    self._records[x] = y
                    return (y,)
            return None

    for matcher in (FirstFreeMatcher(g), KeepV(g)):
        game = Game(g, GameConfig(capacity=2), matcher)
        stats = game.play(DynamicKiller(), steps=10)
        assert stats.lost and stats.rounds <= 3


def test_left_graph_incremental_request_b_first_kills():
    g = offline_only_graph()
    game = Game(g, GameConfig(capacity=2, incremental=True), FirstFreeMatcher(g))
    game.step(Move(request=1))
    out = game.step(Move(request=0))
    if not isinstance(out, LossReport):
        # matcher kept u free for a, so c must die instead
        game2 = Game(g, GameConfig(capacity=2, incremental=True), FirstFreeMatcher(g))
        game2.step(Move(request=1))
        out = game2.step(Move(request=2))
    assert isinstance(out, LossReport) or out == (0,)


def test_illegal_requester_moves_are_not_losses():
    g = incremental_only_graph()
    game = fresh_game(g)
    with pytest.raises(IllegalRequesterMove, match="out of range"):
        game.step(Move(request=7))
    game.step(Move(request=0))
    with pytest.raises(IllegalRequesterMove, match="active assignment"):
        game.step(Move(request=0))
    with pytest.raises(IllegalRequesterMove, match="absent edge"):
        game.step(Move(request=2, retracts=((1, 0),)))
    assert game.loss is None
    assert game.state.round == 1


def test_incremental_rejects_retraction_and_repeats():
    g = incremental_only_graph()
    game = Game(g, GameConfig(capacity=3, incremental=True), FirstFreeMatcher(g))
    game.step(Move(request=0))
    with pytest.raises(IllegalRequesterMove, match="incremental"):
        game.step(Move(request=1, retracts=((0, 0),)))


def test_capacity_rule_counts_distinct_lefts():
    g = complete(4, 4)
    game = Game(g, GameConfig(capacity=2), FirstFreeMatcher(g))
    game.step(Move(request=0))
    with pytest.raises(IllegalRequesterMove, match="matched left nodes"):
        # no retraction: one node already matched equals capacity - 1, a
        # second would stand during the request... capacity 2 allows it
        game.step(Move(request=1))
        game.step(Move(request=2))
    assert game.state.round == 2


def test_expiration_is_requesters_duty():
    g = complete(3, 3)
    game = Game(g, GameConfig(capacity=3, expiration=1), FirstFreeMatcher(g))
    game.step(Move(request=0))
    with pytest.raises(IllegalRequesterMove, match="outlived"):
        game.step(Move(request=1))
    game2 = Game(g, GameConfig(capacity=3, expiration=1), FirstFreeMatcher(g))
    game2.step(Move(request=0))
    game2.step(Move(request=1, retracts=((0, 0),)))
    assert game2.loss is None


def test_round_limit_finishes_game():
    g = complete(3, 3)
    game = Game(g, GameConfig(capacity=2, round_limit=2), FirstFreeMatcher(g))
    game.step(Move(request=0))
    game.step(Move(request=1, retracts=((0, 0),)))
    assert game.finished
    from dynmatch.game import GameOver

    with pytest.raises(GameOver):
        game.step(Move(request=2))


def test_reply_judging_rules():
    g = incremental_only_graph()
    # edge not in graph
    game = Game(g, GameConfig(capacity=2), ScriptedMatcher([(1,)]))
    out = game.step(Move(request=2))  # c's only neighbor is v=1; script gives v
    assert out == (1,)
    game = Game(g, GameConfig(capacity=2), ScriptedMatcher([(0,)]))
    out = game.step(Move(request=2))
    assert isinstance(out, LossReport) and out.rule == "EDGE_NOT_IN_GRAPH"
    # load violation
    game = Game(g, GameConfig(capacity=3), ScriptedMatcher([(0,), (0,)]))
    game.step(Move(request=0))
    out = game.step(Move(request=1))
    assert isinstance(out, LossReport) and out.rule == "LOAD_EXCEEDED"
    # speculative extra edges
    game = Game(g, GameConfig(capacity=2), ScriptedMatcher([(0, 1)]))
    out = game.step(Move(request=0))
    assert isinstance(out, LossReport) and out.rule == "EXTRA_EDGES"


# -- adversaries --------------------------------------------------------------


def test_random_adversary_is_deterministic():
    g = sample_random(10, 10, 4, seed=5)

    def run():
        game = Game(g, GameConfig(capacity=4), FirstFreeMatcher(g, load=4))
        game.play(RandomAdversary(11, game.config), steps=200)
        return tuple(game.transcript)

    assert run() == run()


def test_random_adversary_respects_expiration():
    g = complete(6, 6)
    cfg = GameConfig(capacity=4, expiration=4, load=2)
    game = Game(g, cfg, FirstFreeMatcher(g, load=2))
    stats = game.play(RandomAdversary(3, cfg), steps=400)
    assert stats.loss is None
    # state.check() ran every step, so no edge ever outlived 4 rounds


def test_random_adversary_smoke_on_complete_graph():
    n = 8
    g = complete(n, n)
    cfg = GameConfig(capacity=n)
    game = Game(g, cfg, FirstFreeMatcher(g))
    stats = game.play(RandomAdversary(7, cfg), steps=2000)
    assert stats.loss is None
    assert stats.max_load <= 1


def test_pressure_requests_max_degree_first():
    g = offline_only_graph()
    cfg = GameConfig(capacity=2, incremental=True)
    adv = PressureAdversary(cfg)
    game = Game(g, cfg, FirstFreeMatcher(g))
    move = adv.move(game)
    assert move.request == 1  # b has the largest neighborhood


def test_pressure_harmless_on_complete_graph():
    g = complete(5, 5)
    cfg = GameConfig(capacity=5)
    game = Game(g, cfg, FirstFreeMatcher(g))
    stats = game.play(PressureAdversary(cfg), steps=100)
    assert stats.loss is None


def test_pressure_defeats_first_free_on_demo_graph():
    g = incremental_only_graph()
    cfg = GameConfig(capacity=2)
    game = Game(g, cfg, FirstFreeMatcher(g))
    stats = game.play(PressureAdversary(cfg), steps=6)
    assert stats.lost and stats.rounds <= 6
    # and an exhaustive certificate that a 6-round kill exists at all
    assert requester_can_force_loss(g, cfg, 6)


# -- transcripts ------------------------------------------------------------------


def test_transcript_roundtrip():
    moves = [Move(request=1), Move(request=0), Move(request=2, retracts=((1, 0),))]
    lines = moves_to_lines(moves)
    assert lines == ["REQ 1", "REQ 0", "RET 1 0", "REQ 2"]
    assert lines_to_moves(lines) == moves


def test_replay_reproduces_state():
    g = sample_random(8, 8, 3, seed=2)
    cfg = GameConfig(capacity=3)
    game = Game(g, cfg, FirstFreeMatcher(g, load=3))
    game.play(RandomAdversary(9, cfg), steps=60)
    replayed, divergences = replay(g, cfg, FirstFreeMatcher(g, load=3), game.transcript)
    assert not divergences
    assert replayed.state.snapshot() == game.state.snapshot()


def test_replay_may_diverge_under_other_matcher():
    g = incremental_only_graph()
    cfg = GameConfig(capacity=2)
    game = Game(g, cfg, FirstFreeMatcher(g))
    game.step(Move(request=0))

    class LastFree(FirstFreeMatcher):
        def request(self, x):
            for y in reversed(self.graph.neighbors(x)):
                if self._load.get(y, 0) < self.load_bound:
                    self._load[y] = self._load.get(y, 0) + 1
                    self._records[x] = y
                    return (y,)
            return None

    _, divergences = replay(g, cfg, LastFree(g), game.transcript)
    assert divergences == [1]


def test_replay_detects_referee_rule_mutation():
    # a doctored reply that over-loads a right node must surface as a loss
    g = incremental_only_graph()
    cfg = GameConfig(capacity=3)
    game = Game(g, cfg, ScriptedMatcher([(0,), (1,), (1,)]))
    game.step(Move(request=0))
    game.step(Move(request=1))
    out = game.step(Move(request=2))
    assert isinstance(out, LossReport) and out.rule == "LOAD_EXCEEDED"
    assert "FAIL LOAD_EXCEEDED" in game.transcript


# -- exhaustive certificates ----------------------------------------------------------


def test_demo_classification_certificates():
    left, right = offline_only_graph(), incremental_only_graph()
    assert requester_can_force_loss(left, GameConfig(capacity=2, incremental=True), 2)
    assert not requester_can_force_loss(right, GameConfig(capacity=2, incremental=True), 3)
    assert not requester_can_force_loss(
        right, GameConfig(capacity=2, round_limit=3), 3, single_action_rounds=True)
    assert requester_can_force_loss(right, GameConfig(capacity=2), 4)


def test_find_loss_against_first_free_on_demo():
    g = incremental_only_graph()
    line = find_loss_against(g, GameConfig(capacity=2), lambda: FirstFreeMatcher(g))
    assert line is not None
    game = Game(g, GameConfig(capacity=2), FirstFreeMatcher(g))
    out = None
    for move in line:
        out = game.step(move)
    assert isinstance(out, LossReport)


def test_find_loss_against_complete_graph_is_closed():
    g = complete(3, 3)
    assert find_loss_against(g, GameConfig(capacity=2), lambda: FirstFreeMatcher(g)) is None


# -- state invariants --------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_random_play_keeps_state_invariants(seed, capacity):
    g = sample_random(9, 9, 4, seed=seed % 17)
    cfg = GameConfig(capacity=capacity, load=4)
    game = Game(g, cfg, FirstFreeMatcher(g, load=4))
    game.play(RandomAdversary(seed, cfg), steps=80)
    # Game.step runs MatchState.check after every accepted reply
    assert game.state.edge_total <= capacity * 4
