"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
collected into a summary section at the end of any pytest session.
"""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from rulingset._engine import Engine
from rulingset.graph import bfs_distances, generate
from rulingset.layered import extract_coloring, run_coloring, verify_coloring
from rulingset.localsim import (direct_ball_map, is_maximal_independent_set, is_proper_coloring,
                                layers_for_distance, run_ball_maps, sequential_greedy_coloring,
                                sequential_greedy_mis, solve_pipeline, verify_distance_coloring)
from rulingset.modelcheck import verify_closure, verify_reachability
from rulingset.protocol import Arrow, Configuration, eligible_rules, random_configuration
from rulingset.rng import Xorshift64Star
from rulingset.scheduler import Scripted, SubsetRandom, _engine_config, run
from rulingset.verifier import (check_clock_paths, inject_faults, is_legitimate, is_ruling_set,
                                leaders, locally_legitimate_leaders)

pytestmark = pytest.mark.slow

CAP = 10**6


def _random_graph(n, delta, seed):
    g = generate("random", n=n, max_degree=delta, seed=seed)
    assert len(bfs_distances(g, [0])) == n, "generator returned a disconnected graph"
    return g


# -- 1, 2: exhaustive model checking ------------------------------------------------------------

SMALL = ([("path", n, 3) for n in range(2, 7)] + [("cycle", n, 3) for n in range(3, 7)]
         + [("path", 2, 4), ("path", 3, 4), ("cycle", 3, 4)])


def test_criterion_1_exhaustive_closure(report):
    t0 = time.perf_counter()
    bad, legit = [], 0
    for kind, n, k in SMALL:
        res = verify_closure(generate(kind, n=n), k)
        legit += res.legitimate_count
        if not res.ok:
            bad.append((kind, n, k, res.counterexample))
    secs = time.perf_counter() - t0
    ok = not bad and secs < 300
    report(1, "exhaustive closure", ok,
           f"{len(SMALL)} instances, {legit} legitimate configurations, "
           f"{len(bad)} counterexamples, {secs:.1f}s")
    assert ok, bad[:1]


def test_criterion_2_exhaustive_reachability(report):
    t0 = time.perf_counter()
    bad, total = [], 0
    for kind, n, k in SMALL:
        res = verify_reachability(generate(kind, n=n), k)
        total += res.total
        if not res.ok:
            bad.append((kind, n, k, res.notes["dead_configurations"]))
    secs = time.perf_counter() - t0
    ok = not bad and secs < 600
    report(2, "exhaustive reachability", ok,
           f"{total} configurations over {len(SMALL)} instances, "
           f"{len(bad)} with dead components, {secs:.1f}s")
    assert ok, bad


# -- 3, 4, 6: randomized convergence, faults, clock paths ---------------------------------------

def _converge(n, k, i):
    seed = 1000 * n + 100 * k + i
    g = _random_graph(n, 4, seed)
    first = run(g, random_configuration(g, k, seed), SubsetRandom(0.5), cap=CAP, seed=seed)
    return g, seed, first


@pytest.fixture(scope="module")
def convergence_runs():
    out = []
    for n in (50, 100, 200):
        for k in (3, 4, 5):
            for i in range(100):
                g, seed, first = _converge(n, k, i)
                more = None
                if first.legitimate:
                    more = run(g, first.final, SubsetRandom(0.5), cap=10**4, stop=None,
                               seed=seed + 1)
                out.append((n, k, g, seed, first, more))
    return out


def test_criterion_3_randomized_convergence(convergence_runs, report):
    failures = []
    worst = 0
    for n, k, g, seed, first, more in convergence_runs:
        worst = max(worst, first.steps)
        if not first.legitimate:
            failures.append((n, k, seed, "no convergence"))
            continue
        S = leaders(more.final)
        if more.d_change_steps or not np.array_equal(more.final.d, first.final.d):
            failures.append((n, k, seed, "d changed after legitimacy"))
        elif not is_ruling_set(g, S, k, k - 1) or S != leaders(first.final):
            failures.append((n, k, seed, "leader set is not a (k, k-1)-ruling set"))
    runs = len(convergence_runs)
    ok = not failures and runs == 900
    report(3, "randomized convergence", ok,
           f"{runs - len(failures)}/{runs} runs legitimate and frozen, "
           f"max {worst} steps to converge")
    assert ok, failures[:5]


def test_criterion_4_fault_recovery(convergence_runs, report):
    failures, episodes, worst = [], 0, 0
    for n, k, g, seed, first, more in convergence_runs:
        if more is None:
            failures.append((n, k, seed, "base run did not converge"))
            continue
        rng = Xorshift64Star(seed ^ 0x5EED)
        cfg = more.final
        for e in range(3):
            delay = 1 + rng.randbelow(1000)
            cfg = run(g, cfg, SubsetRandom(0.5), cap=delay, stop=None, seed=seed + 10 + e).final
            hit = inject_faults(cfg, 10, rng)
            back = run(g, hit, SubsetRandom(0.5), cap=CAP, seed=seed + 20 + e)
            episodes += 1
            worst = max(worst, back.steps)
            if not back.legitimate:
                failures.append((n, k, seed, e))
                break
            cfg = back.final
    ok = not failures and episodes == 2700
    report(4, "self-stabilization under faults", ok,
           f"{episodes - len(failures)}/{episodes} scrambles re-converged, "
           f"max {worst} steps")
    assert ok, failures[:5]


def test_criterion_6_clock_paths(report):
    checked, failures, snapshots = 0, [], 0
    for k in (6, 7):
        for n in (50, 100):
            for i in range(10):
                g, seed, first = _converge(n, k, i)
                assert first.legitimate
                cfg = first.final
                for chunk in range(10):
                    if chunk:
                        cfg = run(g, cfg, SubsetRandom(0.5), cap=1000, stop=None,
                                  seed=seed + chunk).final
                    assert is_legitimate(g, cfg).legitimate
                    snapshots += 1
                    for s in leaders(cfg):
                        checked += 1
                        if not check_clock_paths(g, cfg, s):
                            failures.append((k, n, i, chunk, s))
    ok = not failures
    report(6, "clock-path structure", ok,
           f"{checked - len(failures)}/{checked} leader checks over {snapshots} "
           f"legitimate snapshots, k in (6, 7)")
    assert ok, failures[:5]


# -- 5: collision resolution --------------------------------------------------------------------

def _two_leaders(k, delta):
    """Leaders at both ends of a path; clocks 0 on the first half, 2 on the second."""
    g = generate("path", n=delta + 1)
    d = [min(w, delta - w) for w in range(delta + 1)]
    m = k // 2 - 1
    c = np.array([[2 if 2 * w > delta else 0] * m for w in range(delta + 1)], dtype=int)
    b = np.full((delta + 1, m), int(Arrow.DOWN))
    return g, Configuration(k, d, None, c, b)


def _detector(delta):
    # adjacent leaders see each other; otherwise the middle node (or the
    # first of the two middle nodes) compares the two sides
    return 0 if delta == 1 else delta // 2


def test_criterion_5_collision_resolution(report):
    failures, cases = [], 0
    for k in (4, 5, 6):
        for delta in range(1, k):
            cases += 1
            g, cfg = _two_leaders(k, delta)
            det = _detector(delta)
            expected = "TwoHeads" if delta <= 2 else "RemoteCollision"
            script = [[det]] + [[w] for w in range(det - 1, -1, -1)] + [[0]]
            res = run(g, cfg, Scripted(script), cap=len(script), stop=None, trace=True)
            steps = [ev for ev in res.trace if ev["type"] == "step"]
            fired = [set(rules) for ev in steps for rules in ev["fired"].values()]
            err_at_leader = any(ev["delta"].get("0", {}).get("err") == 1 for ev in steps)
            # the same start with both sides in step has no distant collision to detect
            calm = Configuration(k, cfg.d, None, np.zeros_like(cfg.c), cfg.b)
            ok = (expected in fired[0] and err_at_leader and "ResetError" in fired[-1]
                  and leaders(res.final) == [delta] and res.final.d[0] == 1
                  and (delta <= 2 or "RemoteCollision" not in
                       {r.name for r in eligible_rules(g, calm, det)}))
            if not ok:
                failures.append((k, delta, fired))
    passed = cases - len(failures)
    report(5, "collision resolution", not failures,
           f"{passed}/{cases} (k, delta) cases remove one leader, k in (4, 5, 6)")
    assert not failures, failures


# -- 7: local legitimacy never shrinks ----------------------------------------------------------

def test_criterion_7_local_legitimacy_monotone(report):
    total, per_graph, losses, episodes = 0, 5000, [], 0
    for i in range(20):
        k = 4 if i < 10 else 5
        g = _random_graph(30 + i, 4, 7000 + i)
        rng = Xorshift64Star(7000 + i)
        daemon = SubsetRandom(0.5)
        steps = 0
        while steps < per_graph:
            cfg = random_configuration(g, k, rng)
            engine = Engine(g, k, *cfg.layered_arrays())
            before = locally_legitimate_leaders(g, cfg)
            episodes += 1
            while steps < per_graph:
                act = list(engine.activable())
                if not act:
                    break
                engine.step(daemon.select(act, rng))
                steps += 1
                current = _engine_config(engine, cfg.params)
                now = locally_legitimate_leaders(g, current)
                if not before <= now:
                    losses.append((i, steps, sorted(before - now)))
                before = now
                # once legitimate nothing can change; start over from fresh garbage
                if steps % 25 == 0 and is_legitimate(g, current).legitimate:
                    break
        total += steps
    ok = not losses and total == 10**5
    report(7, "local-legitimacy monotonicity", ok,
           f"{total} steps on 20 graphs ({episodes} random starts), {len(losses)} losses")
    assert ok, losses[:5]


# -- 8: layered distance-2 coloring -------------------------------------------------------------

def test_criterion_8_distance_coloring(report):
    failures = []
    for i in range(50):
        n = 20 + (i % 9) * 10
        g = _random_graph(n, 3, 8000 + i)
        res = run_coloring(g, 3, 27, SubsetRandom(0.5), seed=8000 + i, cap=CAP)
        col = extract_coloring(res.final)
        check = verify_coloring(g, col, 2, k=3)
        if not (res.legitimate and check.ok):
            failures.append((i, n, res.reason.value, check.problems[:2]))
    ok = not failures
    report(8, "distance-2 coloring", ok,
           f"{50 - len(failures)}/50 runs fully colored with maximal classes, n 20..100")
    assert ok, failures[:5]


# -- 9: ball maps -------------------------------------------------------------------------------

def test_criterion_9_ball_maps(report):
    failures, cases = [], 0
    for i in range(30):
        g = _random_graph(14 + i % 7, 3, 9000 + i)
        for r in (1, 2, 3):
            cases += 1
            k = 2 * r + 2
            res = run_coloring(g, k, layers_for_distance(g.max_degree, k, g.n), SubsetRandom(0.5),
                               seed=9000 + i, cap=10**7)
            ids = extract_coloring(res.final).colors
            if not (res.legitimate and verify_distance_coloring(g, ids, 2 * r + 1)):
                failures.append((i, r, "coloring"))
                continue
            labels = [u % 3 for u in range(g.n)]
            states, _ = run_ball_maps(g, ids, r, labels=labels, seed=i)
            if any(states[u] != (r, direct_ball_map(g, ids, u, r, labels)) for u in range(g.n)):
                failures.append((i, r, "maps"))
    ok = not failures
    report(9, "ball-map correctness", ok,
           f"{cases - len(failures)}/{cases} (graph, r) cases equal the direct maps")
    assert ok, failures


# -- 10: end-to-end solving ---------------------------------------------------------------------

def test_criterion_10_end_to_end(report):
    failures = []
    for i in range(20):
        g = _random_graph(20, 3, 10_000 + i)
        mis = solve_pipeline(g, "mis", seed=i)
        col = solve_pipeline(g, "coloring", prepared=mis.prepared)
        order = mis.prepared.order
        good = (is_maximal_independent_set(g, mis.outputs)
                and is_proper_coloring(g, col.outputs, g.max_degree + 1)
                and mis.outputs == sequential_greedy_mis(g, order)
                and col.outputs == sequential_greedy_coloring(g, order))
        if not good:
            failures.append(i)
    ok = not failures
    report(10, "end-to-end MIS and coloring", ok,
           f"{20 - len(failures)}/20 graphs valid and equal to the sequential greedy, n=20")
    assert ok, failures


# -- 11: determinism ----------------------------------------------------------------------------

def _cli(args, tmp_path, name):
    out = tmp_path / name
    subprocess.run([sys.executable, "-m", "rulingset", *args, "--output", str(out)],
                   check=True, capture_output=True)
    doc = json.loads(out.read_text())
    return json.dumps(doc, sort_keys=True, default=str)


def _strip_seconds(text):
    doc = json.loads(text)
    for part in doc.values():
        part.pop("seconds", None)
    return doc


def test_criterion_11_determinism(tmp_path, report):
    state = tmp_path / "state.json"
    state.write_text(Configuration(3, [0, 1, 2, 1, 0]).dumps())
    commands = {
        "simulate": ["simulate", "--gen", "random", "--n", "60", "--k", "5", "--seed", "4",
                     "--inject", "100:10", "--inject", "400:10", "--runs", "3"],
        "check": ["check", "--gen", "path", "--n", "5", "--k", "3", "--state", str(state)],
        "color": ["color", "--gen", "random", "--n", "40", "--max-degree", "3", "--seed", "2"],
        "solve": ["solve", "--gen", "random", "--n", "14", "--max-degree", "3", "--seed", "5"],
        "modelcheck": ["modelcheck", "--gen", "cycle", "--n", "4", "--k", "3"],
    }
    mismatched = []
    for name, args in commands.items():
        a = _cli(args, tmp_path, f"{name}-a.json")
        b = _cli(args, tmp_path, f"{name}-b.json")
        if name == "modelcheck":
            a, b = _strip_seconds(a), _strip_seconds(b)
        if a != b:
            mismatched.append(name)
    traces = []
    for tag in "ab":
        path = tmp_path / f"trace-{tag}.jsonl"
        _cli(["simulate", "--gen", "grid", "--rows", "5", "--cols", "6", "--k", "4",
              "--seed", "9", "--inject", "50:6", "--trace", str(path)], tmp_path, f"t{tag}.json")
        traces.append(path.read_bytes())
    if traces[0] != traces[1]:
        mismatched.append("trace")
    g = _random_graph(80, 4, 11)
    hashes = {run(g, random_configuration(g, 5, 3), SubsetRandom(0.5), cap=CAP, seed=3,
                  faults=[(50, 10)]).final_hash for _ in range(3)}
    if len(hashes) != 1:
        mismatched.append("library run")
    ok = not mismatched
    report(11, "determinism", ok,
           f"{len(commands)} commands, a trace file and a library run repeated; "
           f"mismatches: {mismatched or 'none'}")
    assert ok, mismatched
