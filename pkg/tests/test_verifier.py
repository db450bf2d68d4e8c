import numpy as np
import pytest

from rulingset.graph import bfs_distances, generate
from rulingset.protocol import (Arrow, Configuration, NodeState, random_configuration,
                                uniform_configuration)
from rulingset.rng import Xorshift64Star
from rulingset.scheduler import Scripted, SubsetRandom, run
from rulingset.verifier import (check_clock_paths, check_dist_consistency, inject_faults,
                                is_legitimate, is_locally_legitimate, is_ruling_set, leaders,
                                locally_legitimate_leaders, phi)

P5 = generate("path", n=5)


def test_leaders_and_ruling_sets():
    assert leaders(Configuration(3, [1, 2, 2])) == []
    assert leaders(Configuration(3, [0, 1, 1, 0, 1])) == [0, 3]
    assert is_ruling_set(P5, [0, 3], 3, 2)
    assert not is_ruling_set(P5, [0, 2], 3, 2)
    assert is_ruling_set(P5, range(5), 1, 0)


def test_legitimacy_examples():
    assert is_legitimate(P5, Configuration(3, [0, 1, 2, 1, 0])).legitimate
    assert is_legitimate(P5, Configuration(3, [0, 1, 1, 0, 1])).legitimate
    report = is_legitimate(P5, Configuration(3, [0, 0, 1, 2, 2]))
    assert not report.legitimate and (0, 1, 1) in report.distance_violations
    assert report.to_json()["legitimate"] is False
    with pytest.raises(ValueError):
        is_legitimate(P5, Configuration(3, [0, 1]))


def test_dist_consistency():
    assert check_dist_consistency(generate("path", n=3), Configuration(3, [0, 1, 2]))
    assert not check_dist_consistency(P5, Configuration(3, [0, 1, 1, 1, 0]))


def test_local_legitimacy_examples():
    legit = Configuration(4, [0, 1, 2, 1, 0], None, np.zeros((5, 1)), [[0], [1], [1], [1], [0]])
    assert is_legitimate(P5, legit).legitimate
    assert is_locally_legitimate(P5, legit, 0) and is_locally_legitimate(P5, legit, 4)
    err_at_h = legit.replace(2, NodeState(2, 1, ((0, Arrow.UP),)))
    assert not is_locally_legitimate(P5, err_at_h, 0)
    too_low = legit.replace(3, NodeState(0, 0, ((0, Arrow.DOWN),)))
    assert not is_locally_legitimate(P5, too_low, 0)


def test_phi_examples():
    assert phi(P5, Configuration(3, [0, 1, 2, 1, 0])) == set()
    assert phi(P5, Configuration(3, [0, 1, 0, 1, 2])) == {0, 2}
    g = generate("path", n=9)
    assert phi(g, Configuration(3, [0, 1, 2, 0, 1, 2, 0, 1, 2])) == set()


def test_clock_paths_after_shell_construction():
    g = generate("path", n=6)
    k = 7
    start = uniform_configuration(g, k, d=k - 1, c=2, b=Arrow.UP)
    script = [[0]] + [[i] for i in range(1, 6)]
    res = run(g, start, Scripted(script), cap=len(script), stop=None)
    cfg = res.final
    assert cfg.d.tolist()[:4] == [0, 1, 2, 3]
    assert check_clock_paths(g, cfg, 0)
    bad_c = (int(cfg.c[0, 1]) + 2) % 4
    clocks = list(cfg.node(1).clocks)
    clocks[1] = (bad_c, Arrow.UP)
    broken = cfg.replace(1, NodeState(1, 0, tuple(clocks)))
    assert not check_clock_paths(g, broken, 0)


@pytest.mark.parametrize("k", [3, 4, 5, 6, 7])
def test_consequences_of_legitimacy(k):
    g = generate("random", n=30, max_degree=4, seed=k)
    res = run(g, random_configuration(g, k, k), SubsetRandom(), cap=10**6, seed=k)
    cfg = res.final
    assert res.legitimate and is_legitimate(g, cfg).legitimate
    S = leaders(cfg)
    assert is_ruling_set(g, S, k, k - 1)
    assert check_dist_consistency(g, cfg)
    assert locally_legitimate_leaders(g, cfg) == set(S)
    assert phi(g, cfg) == set()
    for s in S:
        dist = bfs_distances(g, [s])
        assert all(cfg.d[u] == du for u, du in dist.items() if du <= k // 2)
        assert check_clock_paths(g, cfg, s)
        assert [t for t in S if dist[t] <= k - 1] == [s]


def test_inject_faults():
    g = generate("random", n=20, max_degree=3, seed=0)
    cfg = random_configuration(g, 5, 0)
    assert inject_faults(cfg, 0, 1) is cfg
    a = inject_faults(cfg, 6, Xorshift64Star(3))
    assert a == inject_faults(cfg, 6, Xorshift64Star(3))
    assert sum(a.node(u) != cfg.node(u) for u in range(g.n)) <= 6
    full = inject_faults(cfg, g.n, 9)
    assert full.d.max() <= 4
    with pytest.raises(ValueError):
        inject_faults(cfg, g.n + 1, 0)
