import json
import subprocess
import sys

import pytest

from rulingset.cli import main, read_config
from rulingset.graph import generate, write_edge_list
from rulingset.protocol import Configuration
from rulingset.scheduler import replay_trace


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip()
    return code, (json.loads(out) if out else None)


@pytest.fixture
def path5(tmp_path):
    f = tmp_path / "path5.txt"
    f.write_text(write_edge_list(generate("path", n=5)))
    return str(f)


def test_simulate_path5(capsys, path5):
    code, doc = _run(capsys, "simulate", "--graph", path5, "--k", "3", "--daemon",
                     "subset-random", "--p", "0.5", "--seed", "1", "--max-steps", "100000")
    assert code == 0 and doc["reason"] == "legitimate_reached" and doc["ruling_set"]


def test_simulate_inject_and_trace(capsys, tmp_path):
    trace = tmp_path / "out.jsonl"
    code, doc = _run(capsys, "simulate", "--gen", "random", "--n", "50", "--max-degree", "4",
                     "--k", "4", "--seed", "2", "--inject", "500:10", "--trace", str(trace))
    assert code == 0 and doc["ruling_set"] and len(doc["injections"]) == 1
    assert replay_trace(trace).ok


def test_config_file_and_flag_override(capsys, tmp_path, path5):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(f"# experiment\ngraph = {path5}\nk = 4\nseed = 9\nmax-steps = 50000\n")
    assert read_config(cfg)["max_steps"] == "50000"
    _, a = _run(capsys, "simulate", "--config", str(cfg))
    _, b = _run(capsys, "simulate", "--config", str(cfg), "--seed", "10")
    assert a["seed"] == 9 and b["seed"] == 10
    cfg.write_text("colour = 3\n")
    assert main(["simulate", "--config", str(cfg)]) == 2


def test_check_exit_codes(capsys, tmp_path, path5):
    good = tmp_path / "good.json"
    good.write_text(Configuration(3, [0, 1, 2, 1, 0]).dumps())
    bad = tmp_path / "bad.json"
    bad.write_text(Configuration(3, [0, 0, 1, 2, 2]).dumps())
    code, doc = _run(capsys, "check", "--graph", path5, "--state", str(good))
    assert code == 0 and doc["legitimate"]
    code, doc = _run(capsys, "check", "--graph", path5, "--state", str(bad))
    assert code == 1 and doc["distance_violations"]


def test_modelcheck_and_budget(capsys):
    code, doc = _run(capsys, "modelcheck", "--gen", "path", "--n", "3", "--k", "4")
    assert code == 0 and doc["closure"]["closure_verified"]
    assert doc["reachability"]["reachability_verified"]
    code, doc = _run(capsys, "modelcheck", "--gen", "path", "--n", "6", "--k", "4",
                     "--budget", "1000")
    assert code == 3 and doc["error"] == "budget exceeded"


def test_color_runs_in_parallel(capsys):
    code, doc = _run(capsys, "color", "--gen", "random", "--n", "40", "--max-degree", "3",
                     "--k", "3", "--layers", "27", "--distance", "2", "--runs", "3",
                     "--jobs", "2")
    assert code == 0 and doc["all_valid"] and len(doc["runs"]) == 3
    code, serial = _run(capsys, "color", "--gen", "random", "--n", "40", "--max-degree", "3",
                        "--k", "3", "--layers", "27", "--distance", "2", "--runs", "3")
    assert serial == doc


def test_color_with_too_few_layers_is_invalid(capsys):
    code, doc = _run(capsys, "color", "--gen", "path", "--n", "10", "--k", "3", "--layers", "1")
    assert code == 1 and doc["uncolored"]


def test_solve(capsys, tmp_path):
    out = tmp_path / "res.json"
    code, doc = _run(capsys, "solve", "--gen", "path", "--n", "10", "--problem", "mis",
                     "--output", str(out))
    assert code == 0 and doc["problem"] == "mis" and doc["valid"]
    assert json.loads(out.read_text()) == doc


def test_usage_errors(capsys):
    assert main(["simulate", "--gen", "path", "--n", "3", "--k", "2"]) == 2
    assert main(["simulate", "--graph", "/nonexistent/g.txt"]) == 2
    assert main(["simulate", "--gen", "path", "--n", "3", "--inject", "5"]) == 2
    assert main(["simulate", "--gen", "path", "--n", "3", "--daemon", "adversary"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_module_entry_point_and_log_env(tmp_path):
    env = {"RULINGSET_LOG": "INFO", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "rulingset", "simulate", "--gen", "path",
                           "--n", "4", "--seed", "1"], capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["ruling_set"]
    assert "INFO" in proc.stderr
