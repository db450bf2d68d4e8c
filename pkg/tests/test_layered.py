import numpy as np
import pytest

from rulingset.graph import bfs_distances, generate
from rulingset.layered import (UNCOLORED, ColoringResult, LayeredConfiguration, default_layers,
                               extract_coloring, is_layer_legitimate, layered_eligible,
                               layered_step, random_layered_configuration, run_coloring,
                               verify_coloring)
from rulingset.protocol import Configuration, RuleId, activable_nodes, apply_step, eligible_rules
from rulingset.rng import Xorshift64Star
from rulingset.scheduler import SubsetRandom, TerminationReason


def test_belong_to_two():
    g = generate("path", n=3)
    lcfg = LayeredConfiguration(3, [[1, 0, 1], [1, 0, 1]])
    assert layered_eligible(g, lcfg, 1)[1] == [RuleId.BelongToTwoRulingSets]
    nxt, fired = layered_step(g, lcfg, [1])
    assert nxt.d[1, 1] == 1 and nxt.d[0, 1] == 0
    assert list(fired[1][1]) == [RuleId.BelongToTwoRulingSets]


def test_become_leader_blocked_by_earlier_layer():
    g = generate("path", n=3)
    blocked = LayeredConfiguration(3, [[1, 0, 1], [2, 2, 2]])
    assert RuleId.BecomeLeader not in layered_eligible(g, blocked, 1)[1]
    assert RuleId.BecomeLeader in layered_eligible(g, blocked, 0)[1]
    free = LayeredConfiguration(3, [[0, 1, 2], [2, 2, 2]])
    assert RuleId.BecomeLeader in layered_eligible(g, free, 1)[1]


@pytest.mark.parametrize("k", [3, 4, 5, 6])
def test_layer_one_matches_base_protocol(k):
    g = generate("random", n=18, max_degree=3, seed=k)
    rng = Xorshift64Star(k)
    lcfg = random_layered_configuration(g, k, 3, rng)
    base = lcfg.layer(1)
    for _ in range(150):
        act = activable_nodes(g, base)
        if not act:
            break
        sel = [u for u in act if rng.random() < 0.5] or act[:1]
        for u in sel:
            assert layered_eligible(g, lcfg, u)[0] == eligible_rules(g, base, u)
        base, _ = apply_step(g, base, sel)
        lcfg, _ = layered_step(g, lcfg, sel)
        assert lcfg.layer(1) == base


def test_extract_coloring_examples():
    lcfg = LayeredConfiguration(3, np.array([[1, 1], [0, 1], [2, 1], [1, 1], [0, 1]]))
    assert extract_coloring(lcfg).colors == [2, UNCOLORED]
    assert extract_coloring(lcfg).uncolored == [1]


def test_layer_legitimacy_examples():
    g = generate("path", n=5)
    base = Configuration(3, [0, 1, 2, 1, 0])
    one = LayeredConfiguration.from_layers([base])
    assert is_layer_legitimate(g, one, 1)
    two = LayeredConfiguration(3, [[0, 1, 2, 1, 0], [1, 0, 0, 1, 1]])
    assert not is_layer_legitimate(g, two, 2)
    with pytest.raises(ValueError):
        is_layer_legitimate(g, one, 2)


def test_p5_and_p10_colorings():
    for n, seed in ((5, 1), (10, 2)):
        g = generate("path", n=n)
        res = run_coloring(g, 3, 9, SubsetRandom(), seed=seed, cap=10**6)
        assert res.reason is TerminationReason.LEGITIMATE
        assert is_layer_legitimate(g, res.final, 9)
        col = extract_coloring(res.final)
        assert verify_coloring(g, col, 2, k=3)
        for u in range(n):
            dist = bfs_distances(g, [u])
            assert all(dist[v] >= 3 for v in range(n) if v != u and col.colors[v] == col.colors[u])
        merged = ColoringResult([1 if c == 2 else c for c in col.colors])
        assert not verify_coloring(g, merged, 2)


def test_too_few_layers_reports_uncolored():
    g = generate("path", n=10)
    res = run_coloring(g, 3, 1, SubsetRandom(), seed=0, cap=10**5)
    col = extract_coloring(res.final)
    check = verify_coloring(g, col, 2, k=3)
    assert col.uncolored and not check.ok and "uncolored" in check.problems[0]


def test_d_values_frozen_after_convergence():
    g = generate("random", n=40, max_degree=3, seed=5)
    res = run_coloring(g, 3, 12, SubsetRandom(), seed=5, cap=10**6)
    assert res.legitimate
    cont = run_coloring(g, 3, 12, SubsetRandom(), seed=6, cap=5_000, lcfg0=res.final, stop=None)
    assert np.array_equal(cont.final.d, res.final.d)


def test_json_round_trip_and_defaults():
    g = generate("path", n=4)
    lcfg = random_layered_configuration(g, 5, 3, 2)
    assert LayeredConfiguration.from_json(lcfg.to_json()) == lcfg
    assert ColoringResult.from_json(extract_coloring(lcfg).to_json()) == extract_coloring(lcfg)
    assert default_layers(3, 3) == 27 and default_layers(3, 5) == 64
