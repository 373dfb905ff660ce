import subprocess
import sys

import pytest

from dynmatch.cli import main
from dynmatch.bigraph import load_graph, sample_random, save_graph
from dynmatch.fixtures import fixture_entry


@pytest.fixture(scope="module")
def expander_file(tmp_path_factory):
    e = fixture_entry("three_exp")
    path = tmp_path_factory.mktemp("graphs") / "exp.graph"
    save_graph(sample_random(e["left"], e["right"], e["degree"], e["seed"]), path)
    return str(path)


def run_main(*argv):
    return main([str(a) for a in argv])


def test_graph_verify_demo_fixture(capsys):
    assert run_main("graph", "verify", "--demo", "offline-only", "--e", 1, "--k", 2) == 0
    assert "holds" in capsys.readouterr().out
    assert run_main("graph", "verify", "--demo", "offline-only", "--e", 1, "--k", 3) == 1
    assert "violated" in capsys.readouterr().out


def test_graph_offline_check(capsys):
    assert run_main("graph", "verify", "--demo", "offline-only", "--k", 2,
                    "--offline") == 0
    assert run_main("graph", "verify", "--demo", "offline-only", "--k", 3,
                    "--offline") == 1


def test_graph_sample_and_echo_roundtrip(tmp_path, capsys):
    out = tmp_path / "g.graph"
    assert run_main("graph", "sample", "--left", 10, "--right", 8,
                    "--degree", 3, "--seed", 5, "--out", out) == 0
    capsys.readouterr()
    assert run_main("graph", "echo", "--graph", out) == 0
    echoed = capsys.readouterr().out
    assert echoed == out.read_text()


def test_unknown_subcommand_usage_error():
    with pytest.raises(SystemExit) as exc:
        run_main("frobnicate")
    assert exc.value.code == 2


def test_game_run_with_transcript_and_replay(tmp_path, capsys):
    transcript = tmp_path / "run.transcript"
    report = tmp_path / "run.report"
    code = run_main("game", "run", "--demo", "incremental-only",
                    "--matcher", "greedy", "--adversary", "random",
                    "--steps", 30, "--seed", 4, "--k", 2,
                    "--transcript", transcript, "--out", report)
    out = capsys.readouterr().out
    assert code in (0, 1)  # greedy may legitimately lose on this graph
    assert "state_hash" in out
    text = report.read_text()
    hash_line = [l for l in text.splitlines() if l.startswith("state_hash")][0]
    code2 = run_main("game", "replay", "--demo", "incremental-only",
                     "--matcher", "greedy", "--seed", 4, "--k", 2,
                     "--transcript", transcript)
    replay_out = capsys.readouterr().out
    assert code2 == 0
    assert hash_line in replay_out
    assert "divergences 0" in replay_out


def test_match_soak_ok(expander_file, capsys):
    code = run_main("match", "soak", "--graph", expander_file,
                    "--matcher", "expiring", "--k", 4, "--t", 16,
                    "--steps", 800, "--seed", 2, "--audit-every", 50)
    out = capsys.readouterr().out
    assert code == 0
    assert "losses 0" in out
    assert "probes_max" in out


def test_match_soak_fault_injection_exits_nonzero(expander_file, capsys):
    code = run_main("match", "soak", "--graph", expander_file,
                    "--matcher", "roundT", "--k", 4, "--t", 64,
                    "--steps", 500, "--seed", 2, "--inject-fault", 20)
    out = capsys.readouterr().out
    assert code == 1
    assert "fault_injected" in out or "invariant_violation" in out


def test_match_soak_poly(expander_file, capsys):
    # poly needs the wide fixture for its expansion premise; run the
    # mechanics on the frozen poly expander instead
    from dynmatch.fixtures import fixture_expander
    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "poly.graph")
        save_graph(fixture_expander("poly_exp"), path)
        code = run_main("match", "soak", "--graph", path, "--matcher", "poly",
                        "--k", 4, "--steps", 500, "--seed", 3,
                        "--audit-every", 100)
    assert code == 0
    assert "losses 0" in capsys.readouterr().out


def test_rich_build_writes_meta(tmp_path, capsys):
    from dynmatch.calibrated import RICH_DEMO_SEED

    prefix = tmp_path / "rich"
    code = run_main("rich", "build", "--n", 40, "--k", 4, "--eps", 0.25,
                    "--seed", RICH_DEMO_SEED, "--out", prefix)
    out = capsys.readouterr().out
    assert code == 0
    assert "factor1_verification exhaustive" in out
    meta = (tmp_path / "rich.meta").read_text()
    assert "rich_quota" in meta and "primes" in meta
    g1 = load_graph(tmp_path / "rich.factor1.graph")
    assert g1.left_size == 40


def test_bitprobe_bench(capsys):
    code = run_main("bitprobe", "bench", "--n", 512, "--k", 3, "--eps", 0.25,
                    "--ops", 150, "--queries", 400, "--seed", 6)
    out = capsys.readouterr().out
    assert code == 0
    assert "verify_ok 1" in out
    assert "size_bits" in out


def test_bitprobe_serve_line_protocol():
    proc = subprocess.run(
        [sys.executable, "-m", "dynmatch.cli", "bitprobe", "serve",
         "--n", "256", "--k", "2", "--eps", "0.25", "--seed", "1"],
        input="INSERT 5\nQUERY 5\nDELETE 5\nQUERY 5\nNOPE 1\nQUIT\n",
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    lines = proc.stdout.strip().splitlines()
    assert lines[0] == "OK"
    assert lines[1] in ("0", "1")       # usually 1; eps-probability of 0
    assert lines[2] == "OK"
    assert lines[3] == "0"
    assert lines[4].startswith("ERR")
    assert lines[5] == "BYE"


def test_connector_demo(tmp_path, capsys):
    dump = tmp_path / "net.dump"
    code = run_main("connector", "demo", "--b", 2, "--t", 2, "--ops", 60,
                    "--seed", 3, "--out", dump)
    out = capsys.readouterr().out
    assert code == 0
    assert "edge_bound_ok 1" in out
    assert dump.read_text().startswith("network B=2")


def test_cli_entrypoint_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "dynmatch.cli", "graph", "verify",
         "--demo", "offline-only", "--e", "1", "--k", "2"],
        capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert "holds" in proc.stdout
