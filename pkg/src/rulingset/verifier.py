"""Independent oracles for legitimacy and its consequences.

Everything here is plain Python over graph BFS and reads the configuration
arrays directly; nothing calls the compiled kernels, so a bug in the engine
and a bug here would have to coincide to go unnoticed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .graph import Graph, bfs_distances
from .protocol import Configuration, random_node_state
from .rng import as_rng

__all__ = [
    "leaders",
    "is_ruling_set",
    "LegitimacyReport",
    "is_legitimate",
    "check_dist_consistency",
    "is_locally_legitimate",
    "locally_legitimate_leaders",
    "phi",
    "check_clock_paths",
    "PathCapExceeded",
    "inject_faults",
    "LayerView",
    "node_predicates",
]

UP, DOWN = 1, 0


class PathCapExceeded(RuntimeError):
    """Too many shortest paths between one (leader, node) pair."""


@dataclass(frozen=True)
class LayerView:
    """Plain-list view of one ruling-set instance.

    ``blocked[u]`` marks nodes that are a leader in an earlier layer; for a
    single ruling set it is all False and the predicates reduce to the base
    definitions.
    """

    k: int
    d: tuple
    err: tuple
    c: tuple  # c[u][i - 1]
    b: tuple
    blocked: tuple

    @classmethod
    def of(cls, cfg: Configuration) -> "LayerView":
        n = cfg.n
        return cls(cfg.k, tuple(int(x) for x in cfg.d), tuple(int(x) for x in cfg.err),
                   tuple(tuple(int(x) for x in row) for row in cfg.c),
                   tuple(tuple(int(x) for x in row) for row in cfg.b),
                   (False,) * n)

    @property
    def h(self) -> int:
        return self.k // 2


def _well_defined(g: Graph, v: LayerView, u: int) -> bool:
    if v.err[u] != 0:
        return False
    du = v.d[u]
    if any(abs(du - v.d[w]) > 1 for w in g.adjacency[u]):
        return False
    # a node already leading an earlier layer may sit at k-1 with no parent
    free_at_top = v.blocked[u] and du == v.k - 1
    if du > 0 and not free_at_top and not any(v.d[w] == du - 1 for w in g.adjacency[u]):
        return False
    if du == 0 and v.blocked[u]:
        return False
    return True


def _leader_down(v: LayerView, u: int) -> bool:
    return v.d[u] != 0 or all(x == DOWN for x in v.b[u])


_UP_PATTERNS = {(UP, UP, 0), (UP, DOWN, 0), (UP, DOWN, 1), (DOWN, DOWN, 0)}
_DOWN_PATTERNS = {(UP, UP, 0), (DOWN, UP, 0), (DOWN, UP, 3), (DOWN, DOWN, 0)}


def _bc_up(g: Graph, v: LayerView, u: int, i: int) -> bool:
    du = v.d[u]
    for w in g.adjacency[u]:
        if v.d[w] == du - 1:
            diff = (v.c[w][i - 1] - v.c[u][i - 1]) % 4
            if (v.b[u][i - 1], v.b[w][i - 1], diff) not in _UP_PATTERNS:
                return False
    return True


def _bc_down(g: Graph, v: LayerView, u: int, i: int) -> bool:
    du = v.d[u]
    for w in g.adjacency[u]:
        if v.d[w] == du + 1:
            diff = (v.c[w][i - 1] - v.c[u][i - 1]) % 4
            if (v.b[u][i - 1], v.b[w][i - 1], diff) not in _DOWN_PATTERNS:
                return False
    return True


def _branch_coherence(g: Graph, v: LayerView, u: int) -> bool:
    du = v.d[u]
    if du >= v.h:
        return True
    if du >= 1 and not _bc_up(g, v, u, du):
        return False
    return all(_bc_up(g, v, u, i) and _bc_down(g, v, u, i) for i in range(du + 1, v.h))


def node_predicates(g: Graph, v: LayerView, u: int) -> dict[str, bool]:
    return {"well_defined": _well_defined(g, v, u),
            "leader_down": _leader_down(v, u),
            "branch_coherence": _branch_coherence(g, v, u)}


# -- leaders and ruling sets -------------------------------------------------------------

def leaders(cfg) -> list[int]:
    """Nodes with ``d == 0``, ascending."""
    return [u for u, x in enumerate(cfg.d) if int(x) == 0]


def is_ruling_set(g: Graph, S: Iterable[int], a: int, b: int) -> bool:
    """Pairwise distance >= a and every node within b of ``S``."""
    S = sorted(set(S))
    if not S:
        return False
    for s in S:
        dist = bfs_distances(g, [s])
        if any(dist[t] < a for t in S if t != s):
            return False
    cover = bfs_distances(g, S)
    return max(cover.values()) <= b


# -- legitimacy ---------------------------------------------------------------------------

@dataclass
class LegitimacyReport:
    legitimate: bool
    violations: list[tuple[int, str]] = field(default_factory=list)
    distance_violations: list[tuple[int, int, int]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"legitimate": self.legitimate,
                "violations": [{"node": u, "predicate": p} for u, p in self.violations],
                "distance_violations": [{"u": u, "v": v, "dist": d}
                                        for u, v, d in self.distance_violations]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _close_leader_pairs(g: Graph, S: list[int], k: int) -> list[tuple[int, int, int]]:
    out = []
    for s in S:
        dist = bfs_distances(g, [s])
        out += [(s, t, dist[t]) for t in S if t > s and dist[t] < k]
    return out


def legitimacy_of_view(g: Graph, v: LayerView) -> LegitimacyReport:
    violations = [(u, name) for u in range(g.n)
                  for name, ok in node_predicates(g, v, u).items() if not ok]
    S = [u for u in range(g.n) if v.d[u] == 0]
    far = _close_leader_pairs(g, S, v.k)
    return LegitimacyReport(not violations and not far, violations, far)


def is_legitimate(g: Graph, cfg: Configuration) -> LegitimacyReport:
    if cfg.n != g.n:
        raise ValueError(f"configuration has {cfg.n} nodes, graph has {g.n}")
    return legitimacy_of_view(g, LayerView.of(cfg))


def check_dist_consistency(g: Graph, cfg: Configuration) -> bool:
    """Every ``d_u`` equals ``min(dist(u, S), k - 1)``."""
    S = leaders(cfg)
    if not S:
        return all(int(x) == cfg.k - 1 for x in cfg.d)
    dist = bfs_distances(g, S)
    return all(int(cfg.d[u]) == min(dist[u], cfg.k - 1) for u in range(g.n))


def is_locally_legitimate(g: Graph, cfg: Configuration, s: int) -> bool:
    return _locally_legitimate_view(g, LayerView.of(cfg), s)


def _locally_legitimate_view(g: Graph, v: LayerView, s: int) -> bool:
    if v.d[s] != 0:
        return False
    dist = bfs_distances(g, [s])
    for u, du in dist.items():
        if du <= v.h:
            if v.d[u] != du or not all(node_predicates(g, v, u).values()):
                return False
        elif du <= v.k - 1:
            if not v.k - du <= v.d[u] <= du:
                return False
    return True


def locally_legitimate_leaders(g: Graph, cfg: Configuration) -> set[int]:
    v = LayerView.of(cfg)
    return {s for s in leaders(cfg) if _locally_legitimate_view(g, v, s)}


def phi(g: Graph, cfg: Configuration) -> set[int]:
    """Leaders with another leader closer than ``k``."""
    S = leaders(cfg)
    return {x for u, w, _ in _close_leader_pairs(g, S, cfg.k) for x in (u, w)}


# -- clock paths --------------------------------------------------------------------------

def _shortest_paths(g: Graph, dist: dict[int, int], s: int, u: int, cap: int):
    """All shortest s-u paths (as node lists from s), via the BFS DAG."""
    # count first so the cap can fail before any enumeration work
    count = {s: 1}
    for x in sorted((w for w in dist if dist[w] <= dist[u]), key=dist.get):
        if x != s:
            count[x] = sum(count[y] for y in g.adjacency[x] if dist.get(y) == dist[x] - 1)
    if count[u] > cap:
        raise PathCapExceeded(f"{count[u]} shortest paths from {s} to {u} exceed cap {cap}")
    out = []
    stack = [(u, [u])]
    while stack:
        x, suffix = stack.pop()
        if x == s:
            out.append(suffix[::-1])
            continue
        for y in g.adjacency[x]:
            if dist.get(y) == dist[x] - 1:
                stack.append((y, suffix + [y]))
    return out


def check_clock_paths(g: Graph, cfg: Configuration, s: int, cap: int = 10**4) -> bool:
    """Two-segment clock structure along every shortest path from leader ``s``.

    For ``u`` within ``k//2 - 1`` of ``s`` and each clock ``i`` above
    ``d_u``, the path must read ``(down, c_s)`` up to some split and then a
    constant ``(up, c')`` with ``c'`` in ``{c_s - 1, c_s}``.
    """
    h = cfg.k // 2
    if int(cfg.d[s]) != 0:
        return False
    dist = bfs_distances(g, [s])
    for u, du in dist.items():
        if du > h - 1:
            continue
        for path in _shortest_paths(g, dist, s, u, cap):
            for i in range(int(cfg.d[u]) + 1, h):
                cs = int(cfg.c[s, i - 1])
                states = [(int(cfg.b[x, i - 1]), int(cfg.c[x, i - 1])) for x in path]
                if not _two_segments(states, cs):
                    return False
    return True


def _two_segments(states, cs: int) -> bool:
    a = 0
    if states[0] != (DOWN, cs):
        return False
    while a + 1 < len(states) and states[a + 1] == (DOWN, cs):
        a += 1
    tail = states[a + 1:]
    if not tail:
        return True
    first = tail[0]
    return (first[0] == UP and first[1] in (cs, (cs - 1) % 4)
            and all(t == first for t in tail))


# -- faults -------------------------------------------------------------------------------

def inject_faults(cfg: Configuration, m: int, rng) -> Configuration:
    """``m`` distinct uniformly chosen nodes get uniformly random states.

    Draws: a Fisher-Yates shuffle of the handles, then one state per chosen
    node in ascending handle order (see ``protocol.random_node_state``).
    """
    if not 0 <= m <= cfg.n:
        raise ValueError(f"cannot corrupt {m} of {cfg.n} nodes")
    if m == 0:
        return cfg
    rng = as_rng(rng)
    nodes = list(range(cfg.n))
    rng.shuffle(nodes)
    out = cfg
    for u in sorted(nodes[:m]):
        out = out.replace(u, random_node_state(cfg.k, rng))
    return out
