import json
from itertools import combinations

import numpy as np
import pytest

from rulingset.graph import generate
from rulingset.modelcheck import StateSpace, encode, reachable_from
from rulingset.protocol import Configuration, activable_nodes, apply_step, random_configuration, \
    uniform_configuration
from rulingset.rng import Xorshift64Star
from rulingset.scheduler import (CentralRandom, RoundRobinFair, Scripted, ScriptError,
                                 SubsetRandom, Synchronous, TerminationReason, make_daemon,
                                 read_trace, replay_trace, run, select, visited_hashes)
from rulingset.verifier import is_legitimate, is_ruling_set, leaders


def test_select_examples():
    rng = Xorshift64Star(0)
    assert select(Synchronous(), None, [1, 3], rng) == [1, 3]
    assert select(CentralRandom(), None, [5], rng) == [5]
    a = [SubsetRandom(0.5).select(list(range(10)), Xorshift64Star(9)) for _ in range(3)]
    assert a[0] == a[1] == a[2] and a[0]
    with pytest.raises(ValueError):
        SubsetRandom(0.0)
    with pytest.raises(ValueError):
        Synchronous().select([], rng)


def test_scripted_and_round_robin():
    s = Scripted([[1, 2], [7]])
    assert s.select([2, 3], None) == [2]
    with pytest.raises(ScriptError):
        s.select([1, 2], None)
    rr = RoundRobinFair()
    assert [rr.select([0, 2, 4], None)[0] for _ in range(4)] == [0, 2, 4, 0]
    assert isinstance(make_daemon("gouda", 0.3), SubsetRandom)
    with pytest.raises(ValueError):
        make_daemon("nope")


def test_stop_already_true():
    g = generate("path", n=5)
    legit = Configuration(3, [0, 1, 2, 1, 0])
    res = run(g, legit, SubsetRandom(), cap=100)
    assert res.steps == 0 and res.reason is TerminationReason.LEGITIMATE


def test_synchronous_uniform_start_livelocks():
    # identical states stay identical under the synchronous daemon
    g = generate("path", n=5)
    res = run(g, uniform_configuration(g, 3, d=2), Synchronous(), cap=500, trace=True)
    assert res.reason is TerminationReason.STEP_CAP
    seen = {tuple(ev["delta"].get(str(u), {}).get("d", -1) for u in range(5))
            for ev in res.trace if ev["type"] == "step"}
    assert all(len(set(x) - {-1}) <= 1 for x in seen)


@pytest.mark.parametrize("daemon", [SubsetRandom(0.5), CentralRandom(), RoundRobinFair()])
def test_p5_converges_with_other_daemons(daemon):
    g = generate("path", n=5)
    res = run(g, uniform_configuration(g, 3, d=2), daemon, cap=10_000, seed=3)
    assert res.legitimate
    assert is_ruling_set(g, leaders(res.final), 3, 2)


@pytest.mark.parametrize("k", [3, 4, 5, 6, 7])
def test_compiled_and_python_paths_agree(k, tmp_path):
    g = generate("random", n=25, max_degree=4, seed=k)
    cfg0 = random_configuration(g, k, 100 + k)
    fast = run(g, cfg0, SubsetRandom(0.5), cap=50_000, seed=k, faults=[(40, 5)])
    path = tmp_path / "t.jsonl"
    slow = run(g, cfg0, SubsetRandom(0.5), cap=50_000, seed=k, faults=[(40, 5)], trace=path)
    assert fast.final == slow.final and fast.steps == slow.steps
    assert fast.final_hash == slow.final_hash
    assert fast.legitimate and is_legitimate(g, fast.final).legitimate
    report = replay_trace(path)
    assert report.ok, report.problems
    assert report.final_hash == fast.final_hash
    events = read_trace(path)
    assert events[0]["type"] == "header" and events[-1]["type"] == "end"
    assert any(ev["type"] == "fault" for ev in events)


def test_replay_detects_tampering(tmp_path):
    g = generate("random", n=15, max_degree=3, seed=1)
    path = tmp_path / "t.jsonl"
    run(g, random_configuration(g, 4, 1), SubsetRandom(), cap=10_000, seed=1, trace=path)
    lines = path.read_text().splitlines()
    ev = json.loads(lines[3])
    ev["hash"] = "0" * 16
    lines[3] = json.dumps(ev)
    path.write_text("\n".join(lines) + "\n")
    assert not replay_trace(path).ok


def test_same_seed_same_result():
    g = generate("random", n=40, max_degree=4, seed=2)
    cfg0 = random_configuration(g, 5, 7)
    a = run(g, cfg0, SubsetRandom(0.5), cap=10**5, seed=11, faults=[(100, 10)])
    b = run(g, cfg0, SubsetRandom(0.5), cap=10**5, seed=11, faults=[(100, 10)])
    assert a.final_hash == b.final_hash and a.steps == b.steps
    assert [i.nodes for i in a.injections] == [i.nodes for i in b.injections]


def test_fault_before_legitimacy_reconverges():
    g = generate("random", n=30, max_degree=4, seed=4)
    res = run(g, random_configuration(g, 4, 4), SubsetRandom(), cap=10**5, seed=4,
              faults=[(5, 10), (10_000, 30)])
    assert res.legitimate and len(res.injections) == 2


# -- visited set versus exhaustive reachability --------------------------------------------------

def _chain(g, cfg0):
    """Reachable configurations and transition probabilities under a uniform
    choice among the nonempty subsets of the activable set."""
    index = {cfg0: 0}
    order = [cfg0]
    rows = []
    i = 0
    while i < len(order):
        cfg = order[i]
        act = activable_nodes(g, cfg)
        subsets = [s for r in range(1, len(act) + 1) for s in combinations(act, r)]
        row = {}
        for s in subsets:
            nxt, _ = apply_step(g, cfg, s)
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
            row[index[nxt]] = row.get(index[nxt], 0.0) + 1.0 / len(subsets)
        rows.append(row)
        i += 1
    P = np.zeros((len(order), len(order)))
    for x, row in enumerate(rows):
        for y, pr in row.items():
            P[x, y] = pr
    return order, P


def test_visited_set_equals_reachable_up_to_rare_states():
    g = generate("path", n=4)
    cfg0 = random_configuration(g, 3, 1)
    order, P = _chain(g, cfg0)
    terminal = P.sum(axis=1) == 0

    space = StateSpace.build(g, 3)
    start = encode(cfg0.params, cfg0)
    reach = {space.decode(int(x)).fingerprint() for x in reachable_from(space, start)}
    assert reach == {c.fingerprint() for c in order}

    total = 10**6
    seen = visited_hashes(g, cfg0, SubsetRandom(0.5), total, seed=1)
    assert seen <= reach

    # expected run length, then per-run hit probability of every missed state
    T = np.where(terminal, 0.0, 1.0)
    Q = np.where(terminal[:, None], 0.0, P)
    run_len = np.linalg.solve(np.eye(len(order)) - Q, T)[0]
    runs = total / run_len
    for y, cfg in enumerate(order):
        if cfg.fingerprint() in seen:
            continue
        Qy = Q.copy()
        Qy[y, :] = 0.0
        rhs = np.zeros(len(order))
        rhs[y] = 1.0
        hit = np.linalg.solve(np.eye(len(order)) - Qy, rhs)[0]
        miss_probability = (1.0 - hit) ** runs
        assert miss_probability > 1e-6, (cfg, hit, runs)
