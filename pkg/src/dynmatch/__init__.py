"""Dynamic bipartite matching on expander graphs.

Building blocks: `bigraph` (graphs, algebra, brute-force checkers),
`game` (the matching-game referee, adversaries, exhaustive certificates),
`ladder` and `rich` (clone-based fast matchers), `dynamic` (the
polynomial and preparation-based matchers and their composition),
`bitprobe` (one-probe storage for dynamic sets), `connector`
(constant-depth non-blocking connectors), and `cli`.
"""

from .bigraph import (
    BiGraph,
    ExpansionWitness,
    clone_graph,
    expansion_check,
    expansion_check_fast,
    induced,
    offline_matching_check,
    prime_hash_graph,
    private_neighbors,
    product,
    sample_random,
    union,
)
from .game import Game, GameConfig, LossReport, Move
from .strategy import MatcherStrategy

__all__ = [
    "BiGraph",
    "ExpansionWitness",
    "clone_graph",
    "expansion_check",
    "expansion_check_fast",
    "induced",
    "offline_matching_check",
    "prime_hash_graph",
    "private_neighbors",
    "product",
    "sample_random",
    "union",
    "Game",
    "GameConfig",
    "LossReport",
    "Move",
    "MatcherStrategy",
]

__version__ = "0.1.0"
