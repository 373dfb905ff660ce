#!/usr/bin/env python3
"""Freeze the random-graph fixtures and the probe-budget constant.

For every expander the suite relies on, rejection-sample seeds with the
vectorized checker, re-verify the winner with the subset-enumeration
reference, and measure the per-seed success rate.  Then calibrate the
fast-path probe constant on a soak and write everything to
src/dynmatch/calibrated.py.

Run from the repository root:  python3 scripts/calibrate.py
"""

from __future__ import annotations

import math
import pprint
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dynmatch.bigraph import expansion_check, expansion_check_fast, sample_random
from dynmatch.game import Game, GameConfig, RandomAdversary

TARGETS = [
    # name, left, right, degree, expansion, K, trials
    ("one_exp", 40, 40, 8, 1, 5, 100),
    ("three_exp", 40, 40, 9, 3, 4, 100),
    ("poly_exp", 40, 4096, 9, 8, 5, 40),
    ("rich_exp", 40, 2048, 16, 14, 5, 40),
]


def freeze_expanders() -> dict:
    out = {}
    for name, left, right, degree, e, K, trials in TARGETS:
        t0 = time.time()
        passes = 0
        winner = None
        for seed in range(trials):
            if expansion_check_fast(sample_random(left, right, degree, seed), e, K):
                passes += 1
                if winner is None:
                    winner = seed
        if winner is None:
            raise SystemExit(f"{name}: no passing seed among {trials}")
        g = sample_random(left, right, degree, winner)
        witness = expansion_check(g, e, K)
        assert witness.holds, f"{name}: fast checker and reference disagree"
        out[name] = {
            "left": left,
            "right": right,
            "degree": degree,
            "expansion": e,
            "k": K,
            "seed": winner,
            "pass_rate": passes / trials,
            "trials": trials,
        }
        print(f"{name}: seed={winner} rate={passes}/{trials} "
              f"({time.time() - t0:.1f}s)")
    return out


def calibrate_probe_constant(expanders: dict) -> int:
    from dynmatch.dynamic import build_fast_matcher, build_theorem_matcher

    entry = expanders["poly_exp"]
    g = sample_random(entry["left"], entry["right"], entry["degree"], entry["seed"])
    K = entry["k"] - 1
    budget_unit = g.degree * math.log2(g.left_size)
    worst = 0.0
    for builder in (build_fast_matcher, build_theorem_matcher):
        matcher = builder(g, K)
        cfg = GameConfig(capacity=K, load=matcher.load_bound)
        game = Game(g, cfg, matcher)
        stats = game.play(RandomAdversary(17, cfg), steps=20_000)
        assert stats.loss is None, f"calibration soak lost: {stats.loss}"
        worst = max(worst, max(stats.op_probes) / budget_unit)
        print(f"{builder.__name__}: worst probes/op = "
              f"{max(stats.op_probes)} ({worst:.2f} budget units)")
    return math.ceil(worst) + 1


def pick_rich_demo_seed(expanders: dict) -> int:
    from dynmatch.rich import build_rich_graph

    for seed in range(20):
        build = build_rich_graph(40, 4, 0.25, seed)
        if build.meta["factor1_seed_attempt"] == 0:
            print(f"rich demo seed: {seed} (meta {build.meta['blocks']} blocks)")
            return seed
    raise SystemExit("no rich demo seed found")


def main() -> None:
    expanders = freeze_expanders()
    rich_seed = pick_rich_demo_seed(expanders)
    constant = calibrate_probe_constant(expanders)
    path = Path(__file__).resolve().parent.parent / "src" / "dynmatch" / "calibrated.py"
    body = (
        '"""Frozen calibration data.  Regenerated by scripts/calibrate.py; do not\n'
        'edit by hand."""\n\n'
        f"EXPANDERS: dict = {pprint.pformat(expanders, sort_dicts=True)}\n\n"
        "# fitted constant c for the fast-path probe bound c * D * log2(N)\n"
        f"FAST_PROBE_CONSTANT: int | None = {constant}\n\n"
        "# seed whose first factor verifies on attempt 0 at N=40, K=4, eps=1/4\n"
        f"RICH_DEMO_SEED: int = {rich_seed}\n"
    )
    path.write_text(body)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
