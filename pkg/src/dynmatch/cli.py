"""Command-line front end.

Subcommands: `graph` (build / verify / round-trip), `game` (referee runs
and transcript replay), `rich` (product builds), `match` (dynamic-matcher
soaks with optional fault injection), `bitprobe` (benchmark and a line
protocol server), `connector` (demo runs).

Every run hangs off one seed; reports are flat key=value lines carrying
enough (seed, transcript path) to replay the run exactly.  Exit codes:
0 all invariants held, 1 a loss or invariant violation, 2 usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import random
import sys
import time

from . import calibrated
from .bigraph import (
    expansion_check,
    graph_to_lines,
    load_graph,
    offline_matching_check,
    sample_random,
    save_graph,
)
from .bitprobe import OneProbeStore
from .connector import Network
from .dynamic import FFPMatcher, PolyMatcher, build_fast_matcher, build_theorem_matcher
from .fixtures import incremental_only_graph, offline_only_graph
from .game import Game, GameConfig, PressureAdversary, RandomAdversary, replay
from .ladder import ExpiringMatcher, IncrementalCloneMatcher, RoundTMatcher
from .rich import build_rich_graph
from .strategy import FirstFreeMatcher, MatcherInvariantError, TrivialPairMatcher
from .util import derive_seed

DEMO_GRAPHS = {
    "offline-only": offline_only_graph,
    "incremental-only": incremental_only_graph,
}


def _load_graph_arg(args):
    if getattr(args, "demo", None):
        return DEMO_GRAPHS[args.demo]()
    if not args.graph:
        raise SystemExit("need --graph FILE or --demo NAME")
    return load_graph(args.graph)


def _emit_report(lines, path):
    text = "\n".join(f"{k} {v}" for k, v in lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _state_hash(game: Game) -> str:
    blob = repr(game.state.snapshot()).encode()
    return hashlib.blake2b(blob, digest_size=8).hexdigest()


def _percentiles(values):
    if not values:
        return {}
    ordered = sorted(values)
    pick = lambda q: ordered[min(len(ordered) - 1, int(q * len(ordered)))]
    return {"p50": pick(0.50), "p90": pick(0.90), "p99": pick(0.99),
            "max": ordered[-1]}


def build_matcher(name: str, graph, k: int, t: int | None, seed: int,
                  period: int | None = None, check_view: bool = False):
    t = t if t is not None else 4 * k
    if name == "greedy":
        return FirstFreeMatcher(graph)
    if name == "trivial2":
        return TrivialPairMatcher(graph)
    if name == "incremental":
        return IncrementalCloneMatcher(graph, k)
    if name == "roundT":
        return RoundTMatcher(graph, k, t)
    if name == "expiring":
        return ExpiringMatcher(graph, k, t)
    if name == "poly":
        return PolyMatcher(graph, k)
    if name == "fast":
        return build_fast_matcher(graph, k, period, check_view)
    if name == "theorem":
        return build_theorem_matcher(graph, k, period, check_view)
    if name == "ffp":
        return FFPMatcher(graph, k)
    raise SystemExit(f"unknown matcher {name!r}")


def build_adversary(name: str, config: GameConfig, seed: int):
    if name == "random":
        return RandomAdversary(seed, config)
    if name == "pressure":
        return PressureAdversary(config)
    raise SystemExit(f"unknown adversary {name!r}")


def _run_game(graph, matcher, config, adversary, steps, audit_every=0,
              fault_at=None):
    game = Game(graph, config, matcher)
    report_rows = []
    wall = []
    probes = []
    max_load = 0
    violation = None
    fault_note = None
    try:
        done = 0
        while done < steps and game.loss is None and not game.finished:
            move = adversary.move(game)
            if move is None:
                break
            t0 = time.perf_counter()
            before = matcher.work()
            game.step(move)
            wall.append(int(1e6 * (time.perf_counter() - t0)))
            probes.append(matcher.work() - before)
            max_load = max(max_load, game.state.max_load())
            done += 1
            if fault_at is not None and done == fault_at:
                fault_note = matcher.inject_fault()
            if audit_every and done % audit_every == 0:
                matcher.audit()
    except (MatcherInvariantError, AssertionError) as exc:
        violation = str(exc)
    report_rows.append(("rounds", game.state.round))
    report_rows.append(("losses", 0 if game.loss is None else 1))
    if game.loss is not None:
        report_rows.append(("loss_rule", game.loss.rule))
        report_rows.append(("loss_round", game.loss.round))
    if fault_note:
        report_rows.append(("fault_injected", fault_note.replace(" ", "_")))
    if violation:
        report_rows.append(("invariant_violation", violation.replace(" ", "_")[:120]))
    report_rows.append(("max_load", max_load))
    for k, v in _percentiles(probes).items():
        report_rows.append((f"probes_{k}", v))
    for k, v in _percentiles(wall).items():
        report_rows.append((f"wall_us_{k}", v))
    report_rows.append(("state_hash", _state_hash(game)))
    ok = game.loss is None and violation is None
    return game, report_rows, ok


# -- subcommand handlers ---------------------------------------------------------


def cmd_graph(args) -> int:
    if args.action == "sample":
        g = sample_random(args.left, args.right, args.degree, args.seed)
        save_graph(g, args.out)
        print(f"wrote {args.out} ({g.left_size}x{g.right_size}, D={g.degree})")
        return 0
    if args.action == "echo":
        g = _load_graph_arg(args)
        out = args.out or args.graph
        if out:
            save_graph(g, out)
        sys.stdout.write("\n".join(graph_to_lines(g)) + "\n")
        return 0
    # verify
    g = _load_graph_arg(args)
    if args.offline:
        ok = offline_matching_check(g, args.k)
        print(f"offline_matching k={args.k} {'holds' if ok else 'fails'}")
        return 0 if ok else 1
    witness = expansion_check(g, args.e, args.k)
    if witness.holds:
        print(f"expansion e={args.e} k={args.k} holds")
        return 0
    print(f"expansion e={args.e} k={args.k} violated by "
          f"{witness.violating_set} (neighborhood {witness.neighborhood_size})")
    return 1


def cmd_game(args) -> int:
    g = _load_graph_arg(args)
    if args.action == "replay":
        with open(args.transcript) as fh:
            lines = [l.rstrip("\n") for l in fh]
        matcher = build_matcher(args.matcher, g, args.k, args.t, args.seed)
        config = GameConfig(capacity=args.k, load=matcher.load_bound,
                            expiration=args.expiration,
                            incremental=args.incremental)
        game, divergences = replay(g, config, matcher, lines)
        rows = [("seed", args.seed), ("state_hash", _state_hash(game)),
                ("divergences", len(divergences))]
        _emit_report(rows, args.out)
        return 0 if not divergences else 1
    matcher = build_matcher(args.matcher, g, args.k, args.t, args.seed)
    config = GameConfig(capacity=args.k, load=matcher.load_bound,
                        expiration=args.expiration, incremental=args.incremental)
    adversary = build_adversary(args.adversary, config, args.seed)
    game, rows, ok = _run_game(g, matcher, config, adversary, args.steps)
    if args.transcript:
        with open(args.transcript, "w") as fh:
            fh.write("\n".join(game.transcript) + "\n")
        rows.append(("transcript", args.transcript))
    rows = [("seed", args.seed), ("matcher", args.matcher),
            ("adversary", args.adversary), ("steps", args.steps)] + rows
    _emit_report(rows, args.out)
    return 0 if ok else 1


def cmd_rich(args) -> int:
    build = build_rich_graph(args.n, args.k, args.eps, args.seed,
                             T=args.t, capacity=args.capacity)
    rows = sorted(build.meta.items())
    if args.out:
        save_graph(build.graph.first, f"{args.out}.factor1.graph")
        with open(f"{args.out}.meta", "w") as fh:
            fh.write("\n".join(f"{k} {v}" for k, v in rows) + "\n")
            fh.write(f"primes {' '.join(str(p) for p in build.graph.second.primes)}\n")
        print(f"wrote {args.out}.factor1.graph and {args.out}.meta")
    _emit_report(rows, None)
    return 0


def cmd_match(args) -> int:
    g = _load_graph_arg(args)
    matcher = build_matcher(args.matcher, g, args.k, args.t, args.seed,
                            period=args.period, check_view=args.check_view)
    expiration = args.expiration
    if args.matcher == "expiring" and expiration is None:
        expiration = args.t if args.t is not None else 4 * args.k
    config = GameConfig(capacity=args.k, load=matcher.load_bound,
                        expiration=expiration,
                        incremental=args.matcher == "incremental")
    adversary = build_adversary(args.adversary, config, args.seed)
    audit_every = args.audit_every or (1 if args.inject_fault else 0)
    game, rows, ok = _run_game(g, matcher, config, adversary, args.steps,
                               audit_every=audit_every, fault_at=args.inject_fault)
    rows = [("seed", args.seed), ("matcher", args.matcher), ("k", args.k),
            ("steps", args.steps), ("load_bound", matcher.load_bound)] + rows
    _emit_report(rows, args.report)
    return 0 if ok else 1


def cmd_bitprobe(args) -> int:
    if args.action == "serve":
        store = OneProbeStore(args.n, args.k, args.eps, args.seed)
        return _serve(store)
    store = OneProbeStore(args.n, args.k, args.eps, args.seed)
    rng = random.Random(derive_seed(args.seed, "bench"))
    t0 = time.perf_counter()
    for _ in range(args.ops):
        members = store.members()
        if len(members) < args.k and (rng.random() < 0.55 or not members):
            while True:
                x = rng.randrange(args.n)
                if x not in members:
                    break
            store.insert(x)
        elif members:
            store.delete(rng.choice(sorted(members)))
    ops_rate = args.ops / max(time.perf_counter() - t0, 1e-9)
    queries = args.queries
    err = 0
    t0 = time.perf_counter()
    for _ in range(queries):
        x = rng.randrange(args.n)
        if store.query(x) != (1 if x in store.members() else 0):
            err += 1
    q_rate = queries / max(time.perf_counter() - t0, 1e-9)
    report = store.verify_key_claim(
        nonmember_sample=[rng.randrange(args.n) for _ in range(500)])
    rows = [
        ("seed", args.seed), ("n", args.n), ("k", args.k), ("eps", args.eps),
        ("ops", args.ops), ("ops_per_s", f"{ops_rate:.0f}"),
        ("queries", queries), ("queries_per_s", f"{q_rate:.0f}"),
        ("empirical_error", f"{err / max(queries, 1):.5f}"),
        ("table_bits", store.graph.right_size),
        ("size_bits", store.size_bits()),
        ("verify_members", report.members_checked),
        ("verify_nonmembers", report.nonmembers_checked),
        ("verify_ok", int(report.ok)),
        ("factor1_verification", store.build.meta["factor1_verification"]),
    ]
    if args.state:
        store.save(args.state)
        rows.append(("state", args.state))
    _emit_report(rows, args.out)
    return 0 if report.ok and err / max(queries, 1) <= store.eps + 0.05 else 1


def _serve(store: OneProbeStore, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for raw in stdin:
        toks = raw.split()
        if not toks:
            continue
        op = toks[0].upper()
        try:
            if op == "QUIT":
                stdout.write("BYE\n")
                stdout.flush()
                return 0
            x = int(toks[1])
            if op == "INSERT":
                store.insert(x)
                stdout.write("OK\n")
            elif op == "DELETE":
                store.delete(x)
                stdout.write("OK\n")
            elif op == "QUERY":
                stdout.write(f"{store.query(x)}\n")
            else:
                stdout.write(f"ERR unknown op {op}\n")
        except Exception as exc:  # noqa: BLE001 - protocol surface
            stdout.write(f"ERR {exc}\n")
        stdout.flush()
    return 0


def cmd_connector(args) -> int:
    net = Network(args.b, args.t, seed=args.seed)
    rng = random.Random(derive_seed(args.seed, "connector-demo"))
    connected: dict[int, int] = {}
    requests = []
    for _ in range(args.ops):
        if connected and rng.random() < 0.45:
            y = rng.choice(sorted(connected))
            x = connected[y]
            net.disconnect(x)
            connected = {yy: xx for yy, xx in connected.items() if xx != x}
        else:
            free = [y for y in range(net.N) if y not in connected]
            if not free:
                continue
            y = rng.choice(free)
            x = rng.randrange(net.N)
            net.connect(x, y)
            connected[y] = x
            requests.append(net.last_connect_requests)
        net.trees.audit_disjoint()
    rows = [
        ("seed", args.seed), ("b", args.b), ("t", args.t), ("n", net.N),
        ("ops", args.ops), ("edges", net.edge_count()),
        ("edge_bound", net.edge_bound()),
        ("edge_bound_ok", int(net.edge_count() <= net.edge_bound())),
        ("max_requests_per_connect", max(requests, default=0)),
        ("live_trees", len(net.trees.trees)),
    ]
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(net.dump_lines()) + "\n")
        rows.append(("dump", args.out))
    _emit_report(rows, None)
    return 0 if net.edge_count() <= net.edge_bound() else 1


# -- argument wiring -------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="dynmatch")
    sub = top.add_subparsers(dest="command", required=True)

    def common_graph(p):
        p.add_argument("--graph")
        p.add_argument("--demo", choices=sorted(DEMO_GRAPHS))

    g = sub.add_parser("graph", help="build, verify, and round-trip graph files")
    g.add_argument("action", choices=["sample", "verify", "echo"])
    common_graph(g)
    g.add_argument("--left", type=int, default=40)
    g.add_argument("--right", type=int, default=40)
    g.add_argument("--degree", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--e", type=float, default=1)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--offline", action="store_true")
    g.add_argument("--out")
    g.set_defaults(func=cmd_graph)

    ga = sub.add_parser("game", help="referee runs and replay")
    ga.add_argument("action", nargs="?", default="run", choices=["run", "replay"])
    common_graph(ga)
    ga.add_argument("--matcher", default="greedy")
    ga.add_argument("--adversary", default="random")
    ga.add_argument("--steps", type=int, default=100)
    ga.add_argument("--seed", type=int, default=0)
    ga.add_argument("--k", type=int, default=2)
    ga.add_argument("--t", type=int)
    ga.add_argument("--expiration", type=int)
    ga.add_argument("--incremental", action="store_true")
    ga.add_argument("--transcript")
    ga.add_argument("--out")
    ga.set_defaults(func=cmd_game)

    r = sub.add_parser("rich", help="build rich product graphs")
    r.add_argument("action", nargs="?", default="build", choices=["build"])
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--k", type=int, required=True)
    r.add_argument("--eps", type=float, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--t", type=int)
    r.add_argument("--capacity", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_rich)

    m = sub.add_parser("match", help="dynamic-matcher soaks")
    m.add_argument("action", nargs="?", default="soak", choices=["soak"])
    common_graph(m)
    m.add_argument("--matcher", required=True,
                   choices=["greedy", "trivial2", "incremental", "roundT",
                            "expiring", "poly", "fast", "theorem", "ffp"])
    m.add_argument("--adversary", default="random")
    m.add_argument("--k", type=int, required=True)
    m.add_argument("--t", type=int)
    m.add_argument("--period", type=int)
    m.add_argument("--expiration", type=int)
    m.add_argument("--steps", type=int, default=1000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--check-view", action="store_true")
    m.add_argument("--audit-every", type=int, default=0)
    m.add_argument("--inject-fault", type=int,
                   help="corrupt the matcher's occupancy after this many ops")
    m.add_argument("--report")
    m.set_defaults(func=cmd_match)

    b = sub.add_parser("bitprobe", help="one-probe store benchmark and server")
    b.add_argument("action", nargs="?", default="bench", choices=["bench", "serve"])
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--eps", type=float, default=0.25)
    b.add_argument("--ops", type=int, default=1000)
    b.add_argument("--queries", type=int, default=2000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--state")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bitprobe)

    c = sub.add_parser("connector", help="connection-game demo")
    c.add_argument("action", nargs="?", default="demo", choices=["demo"])
    c.add_argument("--b", type=int, default=2)
    c.add_argument("--t", type=int, default=2)
    c.add_argument("--ops", type=int, default=200)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_connector)

    return top


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MatcherInvariantError, AssertionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
