"""Ball maps built by local rules, and LOCAL algorithms evaluated on them.

Colors of a distance-(2r+1) coloring serve as identifiers: inside any
radius-r ball they are unique, so maps gathered from neighbors can be glued
by color.  A node's output is ``None`` (nothing yet) or ``(i, map)`` where
the map covers the radius-i ball: every node within distance i and every
edge with an endpoint within distance i - 1.

Rules, in priority order:

* Reset: the stored map contradicts the node's own label, its neighbors'
  labels, or what its neighbors' maps say; ``out := None``.  This repairs
  corrupted outputs and is an addition to the two construction rules.
* Init: ``out is None``; ``out := (0, single node)``.
* Merge: ``out = (i, G)`` with ``i < r`` and every neighbor at radius >= i;
  ``out := (i + 1, merge)``.

The pipeline in :func:`solve_pipeline` colors the graph twice with the
layered protocol: a distance-2 coloring whose classes drive the greedy
order, then a distance-(2r+1) coloring used as identifiers.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, Sequence

from .graph import Graph, bfs_distances
from .layered import extract_coloring, run_coloring
from .rng import Xorshift64Star
from .scheduler import Daemon, SubsetRandom

__all__ = [
    "BallMap",
    "ColorCollision",
    "ball_rule_step",
    "ball_activable",
    "run_ball_maps",
    "direct_ball_map",
    "LocalAlgorithm",
    "greedy_mis",
    "greedy_coloring",
    "MIS",
    "COLORING",
    "sequential_greedy_mis",
    "sequential_greedy_coloring",
    "is_maximal_independent_set",
    "is_proper_coloring",
    "layers_for_distance",
    "solve_pipeline",
    "SolveResult",
    "Prepared",
    "prepare",
    "PipelineError",
    "verify_distance_coloring",
]


class ColorCollision(RuntimeError):
    """Two distinct nodes with one identifier met inside a merged map."""


@dataclass(frozen=True)
class BallMap:
    """Canonical rooted map: nodes sorted by id, edges as sorted id pairs.

    ``labels`` maps id -> extra payload (e.g. a second color) and is part of
    equality.
    """

    radius: int
    root: Hashable
    labels: tuple  # ((id, label), ...) sorted by id
    edges: tuple  # ((a, b), ...) with a < b, sorted

    @staticmethod
    def make(radius: int, root, labels: Mapping, edges) -> "BallMap":
        canon = sorted({(min(a, b), max(a, b)) for a, b in edges})
        return BallMap(radius, root, tuple(sorted(labels.items())), tuple(canon))

    @property
    def nodes(self) -> tuple:
        return tuple(x for x, _ in self.labels)

    def label(self, x):
        return dict(self.labels)[x]

    def adjacency(self) -> dict:
        adj = {x: set() for x, _ in self.labels}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def distances(self) -> dict:
        adj = self.adjacency()
        dist = {self.root: 0}
        queue = deque([self.root])
        while queue:
            x = queue.popleft()
            for y in adj[x]:
                if y not in dist:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        return dist

    def truncate(self, radius: int) -> "BallMap":
        if radius > self.radius:
            raise ValueError(f"cannot grow a radius-{self.radius} map to {radius}")
        if radius == self.radius:
            return self
        dist = self.distances()
        keep = {x for x, dx in dist.items() if dx <= radius}
        edges = [(a, b) for a, b in self.edges
                 if a in keep and b in keep and min(dist[a], dist[b]) <= radius - 1]
        labels = {x: lab for x, lab in self.labels if x in keep}
        return BallMap.make(radius, self.root, labels, edges)

    def to_json(self) -> dict:
        return {"radius": self.radius, "root": self.root,
                "nodes": [[x, lab] for x, lab in self.labels],
                "edges": [list(e) for e in self.edges]}


# -- rules ------------------------------------------------------------------------------------

def _merge(g: Graph, ids, labels, states, u: int, i: int) -> BallMap:
    """Radius-(i+1) map of ``u`` from the radius-i maps around it."""
    merged: dict = {ids[u]: labels[u]}
    edges = set()
    for v in (u, *g.adjacency[u]):
        part = states[v][1].truncate(i)
        for x, lab in part.labels:
            if merged.setdefault(x, lab) != lab:
                raise ColorCollision(f"identifier {x} carries labels {merged[x]} and {lab}")
        edges.update(part.edges)
    for v in g.adjacency[u]:
        if ids[v] == ids[u]:
            raise ColorCollision(f"neighbors {u} and {v} share identifier {ids[u]}")
        edges.add((min(ids[u], ids[v]), max(ids[u], ids[v])))
    seen = {}
    for v in g.adjacency[u]:
        if ids[v] in seen:
            raise ColorCollision(f"nodes {seen[ids[v]]} and {v} share identifier {ids[v]}")
        seen[ids[v]] = v
    return BallMap.make(i + 1, ids[u], merged, edges)


def _consistent(g: Graph, ids, labels, states, u: int) -> bool:
    out = states[u]
    if out is None:
        return True
    i, bm = out
    if bm.root != ids[u] or bm.radius != i or dict(bm.labels).get(ids[u]) != labels[u]:
        return False
    if i == 0:
        return len(bm.labels) == 1 and not bm.edges
    for v in g.adjacency[u]:
        if states[v] is None or states[v][0] < i - 1:
            return False
    try:
        return _merge(g, ids, labels, states, u, i - 1) == bm
    except (ColorCollision, KeyError, ValueError):
        return False


def ball_activable(g: Graph, ids, labels, states, r: int) -> dict[int, str]:
    """Node -> the rule it would fire (``reset``, ``init`` or ``merge``)."""
    out = {}
    for u in range(g.n):
        if not _consistent(g, ids, labels, states, u):
            out[u] = "reset"
        elif states[u] is None:
            out[u] = "init"
        elif states[u][0] < r and all(states[v] is not None and states[v][0] >= states[u][0]
                                      for v in g.adjacency[u]):
            out[u] = "merge"
    return out


def ball_rule_step(g: Graph, ids: Sequence, states: Sequence, selected, r: int,
                   labels: Sequence | None = None) -> list:
    """One activation of the selected nodes against the pre-step outputs.

    ``ids`` is the identifier coloring, ``labels`` an optional per-node
    payload copied into maps (defaults to ``None``).  Selected nodes with no
    enabled rule are left unchanged.
    """
    labels = [None] * g.n if labels is None else list(labels)
    enabled = ball_activable(g, ids, labels, states, r)
    new = list(states)
    for u in selected:
        rule = enabled.get(u)
        if rule == "reset":
            new[u] = None
        elif rule == "init":
            new[u] = (0, BallMap.make(0, ids[u], {ids[u]: labels[u]}, ()))
        elif rule == "merge":
            i = states[u][0]
            new[u] = (i + 1, _merge(g, ids, labels, states, u, i))
    return new


def run_ball_maps(g: Graph, ids: Sequence, r: int, labels: Sequence | None = None,
                  daemon: Daemon | None = None, seed: int = 0, states=None,
                  cap: int = 10**6) -> tuple[list, int]:
    """Apply the rules under ``daemon`` until nothing is enabled.

    Returns ``(states, steps)``.
    """
    daemon = daemon or SubsetRandom(0.5)
    daemon.reset()
    labels = [None] * g.n if labels is None else list(labels)
    states = [None] * g.n if states is None else list(states)
    rng = Xorshift64Star(seed)
    steps = 0
    while steps < cap:
        enabled = ball_activable(g, ids, labels, states, r)
        if not enabled:
            return states, steps
        sel = daemon.select(sorted(enabled), rng)
        states = ball_rule_step(g, ids, states, sel, r, labels)
        steps += 1
    raise RuntimeError(f"ball maps did not settle within {cap} steps")


def direct_ball_map(g: Graph, ids: Sequence, u: int, r: int,
                    labels: Sequence | None = None) -> BallMap:
    """Ground-truth radius-r map of ``u`` read off the graph."""
    labels = [None] * g.n if labels is None else list(labels)
    dist = bfs_distances(g, [u])
    inside = [v for v, dv in dist.items() if dv <= r]
    edges = [(ids[a], ids[b]) for a, b in g.edges()
             if a in inside and b in inside and min(dist[a], dist[b]) <= r - 1]
    return BallMap.make(r, ids[u], {ids[v]: labels[v] for v in inside}, edges)


# -- LOCAL algorithms on ball maps --------------------------------------------------------------

@dataclass(frozen=True)
class LocalAlgorithm:
    """A radius and a pure function from the root's ball map to its output."""

    name: str
    radius: int
    evaluate: Callable[[BallMap], object]


def _greedy(ball: BallMap, classes: int, decide):
    """Evaluate the color-class-sequential greedy at the root.

    Map labels are class numbers (1-based).  ``decide(x, earlier)`` gets the
    decided outputs of x's neighbors in earlier classes.
    """
    if ball.radius < classes:
        raise ValueError(f"ball radius {ball.radius} below the {classes} color classes")
    adj = ball.adjacency()
    dist = ball.distances()
    cls = dict(ball.labels)
    memo: dict = {}

    def out(x):
        if x in memo:
            return memo[x]
        if dist[x] > ball.radius - 1:
            raise ValueError(f"greedy needs the full neighborhood of {x}")
        earlier = [out(y) for y in sorted(adj[x]) if cls[y] < cls[x]]
        memo[x] = decide(x, earlier)
        return memo[x]

    return out(ball.root)


def greedy_mis(ball: BallMap, classes: int) -> bool:
    """Root joins iff no neighbor of an earlier class joined."""
    return _greedy(ball, classes, lambda x, earlier: not any(earlier))


def greedy_coloring(ball: BallMap, classes: int, palette: int) -> int:
    """Root takes the smallest color unused by earlier-class neighbors."""
    def decide(x, earlier):
        c = next(c for c in range(palette + 1) if c not in earlier)
        if c >= palette:
            raise ValueError(f"palette of {palette} colors exhausted")
        return c
    return _greedy(ball, classes, decide)


def MIS(classes: int) -> LocalAlgorithm:
    return LocalAlgorithm("mis", classes, lambda ball: greedy_mis(ball, classes))


def COLORING(classes: int, palette: int) -> LocalAlgorithm:
    return LocalAlgorithm("coloring", classes,
                          lambda ball: greedy_coloring(ball, classes, palette))


# -- whole-graph oracles and validators -------------------------------------------------------

def _class_order(classes: Sequence[int]) -> list[int]:
    return sorted(range(len(classes)), key=lambda u: (classes[u], u))


def sequential_greedy_mis(g: Graph, classes: Sequence[int]) -> list[bool]:
    inside = [False] * g.n
    for u in _class_order(classes):
        inside[u] = not any(inside[v] for v in g.adjacency[u])
    return inside


def sequential_greedy_coloring(g: Graph, classes: Sequence[int]) -> list[int]:
    color: list = [None] * g.n
    for u in _class_order(classes):
        used = {color[v] for v in g.adjacency[u]}
        color[u] = next(c for c in range(g.n + 1) if c not in used)
    return color


def is_maximal_independent_set(g: Graph, inside: Sequence[bool]) -> bool:
    for u in range(g.n):
        nb = [inside[v] for v in g.adjacency[u]]
        if inside[u] and any(nb):
            return False
        if not inside[u] and not any(nb):
            return False
    return True


def is_proper_coloring(g: Graph, color: Sequence, palette: int | None = None) -> bool:
    if any(c is None for c in color):
        return False
    if palette is not None and any(not 0 <= c < palette for c in color):
        return False
    return all(color[u] != color[v] for u, v in g.edges())


def verify_distance_coloring(g: Graph, colors: Sequence, K: int) -> bool:
    if any(c is None for c in colors):
        return False
    for u in range(g.n):
        for v, dv in bfs_distances(g, [u]).items():
            if v != u and dv <= K and colors[v] == colors[u]:
                return False
    return True


# -- pipeline ------------------------------------------------------------------------------------

def layers_for_distance(max_degree: int, k: int, n: int | None = None) -> int:
    """Layers that guarantee every node a color when leaders are k apart.

    Each layer in which ``u`` stays uncolored takes a distinct not-yet-colored
    node within distance ``k - 1`` of ``u``, so the size of the largest
    radius-(k-1) ball suffices (capped by ``n`` when known).
    """
    D = max(1, max_degree)
    size = 1 + sum(D * (D - 1) ** i for i in range(k - 1))
    return size if n is None else min(size, n)


class PipelineError(RuntimeError):
    """A coloring stage left nodes uncolored or produced an invalid coloring."""


@dataclass
class Prepared:
    """Both colorings and the converged ball maps for one graph and seed."""

    order: list  # distance-2 classes, 1-based
    classes: int
    radius: int
    ids: list  # distance-(2r+1) coloring
    maps: list  # BallMap per node, radius r
    steps: dict


def prepare(g: Graph, daemon: Daemon | None = None, seed: int = 0, cap: int = 10**7,
            radius: int | None = None, order_layers: int | None = None) -> Prepared:
    """Stabilize a distance-2 coloring, then identifiers and ball maps.

    Without ``radius`` the maps reach as far as the greedy algorithms need:
    the number of classes the distance-2 coloring ended up using.
    """
    daemon = daemon or SubsetRandom(0.5)
    delta = g.max_degree
    steps = {}
    L_a = order_layers or layers_for_distance(delta, 3, g.n)
    run_a = run_coloring(g, 3, L_a, daemon, seed=seed, cap=cap)
    order = extract_coloring(run_a.final).colors
    steps["order_coloring"] = run_a.steps
    if not run_a.legitimate or not verify_distance_coloring(g, order, 2):
        raise PipelineError(f"distance-2 coloring failed ({run_a.reason.value})")
    classes = max(order)
    r = classes if radius is None else radius

    k_b = 2 * r + 2
    run_b = run_coloring(g, k_b, layers_for_distance(delta, k_b, g.n), daemon,
                         seed=seed + 1, cap=cap)
    ids = extract_coloring(run_b.final).colors
    steps["id_coloring"] = run_b.steps
    if not run_b.legitimate or not verify_distance_coloring(g, ids, 2 * r + 1):
        raise PipelineError(f"distance-{2 * r + 1} coloring failed ({run_b.reason.value})")

    states, ball_steps = run_ball_maps(g, ids, r, labels=order, daemon=daemon, seed=seed + 2,
                                       cap=cap)
    steps["ball_maps"] = ball_steps
    return Prepared(order, classes, r, ids, [s[1] for s in states], steps)


@dataclass
class SolveResult:
    problem: str
    outputs: list
    valid: bool | None
    oracle_match: bool | None
    prepared: Prepared

    def to_json(self) -> dict:
        p = self.prepared
        return {"problem": self.problem, "outputs": self.outputs, "valid": self.valid,
                "oracle_match": self.oracle_match, "radius": p.radius,
                "order_colors": p.order, "id_colors": p.ids, "steps": p.steps}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def solve_pipeline(g: Graph, problem: str = "mis", daemon: Daemon | None = None,
                   seed: int = 0, cap: int = 10**7, algorithm: LocalAlgorithm | None = None,
                   prepared: Prepared | None = None) -> SolveResult:
    """Distance-2 coloring, identifier coloring, ball maps, then per-node outputs.

    ``problem`` is ``"mis"`` or ``"coloring"`` (palette Δ+1).  A custom
    ``algorithm`` sees maps labeled with the distance-2 classes and fixes the
    map radius itself.  Pass ``prepared`` to reuse the colorings and maps of
    an earlier call with a large enough radius.
    """
    if algorithm is not None:
        radius = algorithm.radius
    elif problem in ("mis", "coloring"):
        radius = None
    else:
        raise ValueError(f"unknown problem {problem!r}")
    if prepared is None:
        prepared = prepare(g, daemon, seed, cap, radius)
    elif radius is not None and prepared.radius < radius:
        raise ValueError(f"prepared maps have radius {prepared.radius} < {radius}")

    C = prepared.classes
    if algorithm is None:
        algorithm = MIS(C) if problem == "mis" else COLORING(C, g.max_degree + 1)
    maps = prepared.maps
    if prepared.radius > algorithm.radius:
        maps = [m.truncate(algorithm.radius) for m in maps]
    outputs = [algorithm.evaluate(m) for m in maps]

    if algorithm.name == "mis":
        valid = is_maximal_independent_set(g, outputs)
        match = outputs == sequential_greedy_mis(g, prepared.order)
    elif algorithm.name == "coloring":
        valid = is_proper_coloring(g, outputs, g.max_degree + 1)
        match = outputs == sequential_greedy_coloring(g, prepared.order)
    else:
        valid, match = None, None
    return SolveResult(algorithm.name, outputs, valid, match, prepared)
