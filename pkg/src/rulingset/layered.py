"""L parallel ruling-set instances whose leader sets partition the nodes.

A node's color is the first layer in which it is a leader.  Layer ``j``
runs the base rules with two cross-layer changes: Become Leader also needs
the node to lead no earlier layer, and a node leading an earlier layer
leaves layer ``j`` at once (Belong To Two, priority 0).  ``well_defined`` is
relaxed so that such a node may sit at ``d = k - 1`` without a parent.

Layers are numbered from 1 in this API.  Every activation fires the eligible
rules of every layer against one snapshot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels as K
from ._engine import Engine
from .graph import Graph, bfs_distances
from .protocol import Configuration, NodeState, ProtocolParams, RuleId
from .rng import as_rng
from .scheduler import Daemon, RunResult, run_engine
from .verifier import LayerView, legitimacy_of_view

__all__ = [
    "UNCOLORED",
    "LayeredConfiguration",
    "ColoringResult",
    "ColoringCheck",
    "layered_eligible",
    "layered_step",
    "extract_coloring",
    "is_layer_legitimate",
    "verify_coloring",
    "random_layered_configuration",
    "run_coloring",
    "default_layers",
]

UNCOLORED = None


def default_layers(max_degree: int, k: int, cap: int = 64) -> int:
    """``min(max_degree ** k, cap)``: the guaranteed-coverage count, capped."""
    return max(1, min(max(1, max_degree) ** k, cap))


class LayeredConfiguration:
    """Immutable ``[L, n]`` snapshot of all layers."""

    __slots__ = ("params", "d", "err", "c", "b")

    def __init__(self, params: ProtocolParams | int, d, err=None, c=None, b=None):
        if not isinstance(params, ProtocolParams):
            params = ProtocolParams(int(params))
        d = np.asarray(d, dtype=np.int8)
        L, n = d.shape
        m = params.clock_count
        self.params = params
        arrays = [d,
                  np.zeros((L, n)) if err is None else err,
                  np.zeros((L, n, m)) if c is None else c,
                  np.zeros((L, n, m)) if b is None else b]
        for name, a in zip(("d", "err", "c", "b"), arrays):
            a = np.ascontiguousarray(a, dtype=np.int8).copy()
            a.setflags(write=False)
            setattr(self, name, a)
        if self.c.shape != (L, n, m) or self.err.shape != (L, n):
            raise ValueError("inconsistent layered array shapes")
        if d.size and (d.min() < 0 or d.max() > params.k - 1):
            raise ValueError(f"d outside [0, {params.k - 1}]")

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def layers(self) -> int:
        return self.d.shape[0]

    @property
    def n(self) -> int:
        return self.d.shape[1]

    def layer(self, j: int) -> Configuration:
        """Layer ``j`` (1-based) as a plain configuration."""
        return Configuration(self.params, self.d[j - 1], self.err[j - 1], self.c[j - 1],
                             self.b[j - 1])

    @classmethod
    def from_layers(cls, layers: Sequence[Configuration]) -> "LayeredConfiguration":
        params = layers[0].params
        return cls(params, np.stack([x.d for x in layers]), np.stack([x.err for x in layers]),
                   np.stack([x.c for x in layers]), np.stack([x.b for x in layers]))

    def arrays(self):
        return self.d.copy(), self.err.copy(), self.c.copy(), self.b.copy()

    def fingerprint(self) -> int:
        return int(K.fnv1a_config(self.k, *self.arrays()))

    def __eq__(self, other):
        if not isinstance(other, LayeredConfiguration):
            return NotImplemented
        return self.k == other.k and all(np.array_equal(getattr(self, a), getattr(other, a))
                                         for a in ("d", "err", "c", "b"))

    def __hash__(self):
        return self.fingerprint()

    def to_json(self) -> dict:
        return {"k": self.k, "layers": self.layers,
                "nodes": [[self.layer(j).node(u).to_json() for j in range(1, self.layers + 1)]
                          for u in range(self.n)]}

    @classmethod
    def from_json(cls, obj: Mapping | str) -> "LayeredConfiguration":
        if isinstance(obj, str):
            obj = json.loads(obj)
        params = ProtocolParams(int(obj["k"]))
        nodes = obj["nodes"]
        L = int(obj["layers"])
        per_layer = [[NodeState.from_json(nodes[u][j]) for u in range(len(nodes))]
                     for j in range(L)]
        return cls.from_layers([Configuration.from_states(params, s) for s in per_layer])


def random_layered_configuration(g: Graph, k: int, L: int, rng) -> LayeredConfiguration:
    """Uniform states; draws go node by node, layer by layer within a node."""
    rng = as_rng(rng)
    params = ProtocolParams(k)
    m = params.clock_count
    d = np.zeros((L, g.n), np.int8)
    err = np.zeros((L, g.n), np.int8)
    c = np.zeros((L, g.n, m), np.int8)
    b = np.zeros((L, g.n, m), np.int8)
    for u in range(g.n):
        for j in range(L):
            d[j, u] = rng.randbelow(k)
            err[j, u] = rng.randbelow(2)
            for i in range(m):
                c[j, u, i] = rng.randbelow(4)
                b[j, u, i] = rng.randbelow(2)
    return LayeredConfiguration(params, d, err, c, b)


def _engine(g: Graph, lcfg: LayeredConfiguration) -> Engine:
    return Engine(g, lcfg.k, *lcfg.arrays(), flags=lcfg.params.flags)


def _from_engine(e: Engine, params: ProtocolParams) -> LayeredConfiguration:
    return LayeredConfiguration(params, e.d, e.err, e.c, e.b)


def layered_eligible(g: Graph, lcfg: LayeredConfiguration, u: int) -> list[list[RuleId]]:
    """Eligible rules of ``u`` in each layer (index 0 is layer 1)."""
    e = _engine(g, lcfg)
    return [list(RuleId.from_mask(e.elig[j, u])) for j in range(lcfg.layers)]


def layered_step(g: Graph, lcfg: LayeredConfiguration, selected):
    """Fire every layer's eligible rules at the selected nodes.

    Returns ``(next, fired)`` with ``fired[u]`` a list of rule tuples per layer.
    """
    e = _engine(g, lcfg)
    sel = sorted(set(int(u) for u in selected))
    masks = e.step(sel)
    fired = {u: [RuleId.from_mask(masks[j, u]) for j in range(lcfg.layers)] for u in sel}
    return _from_engine(e, lcfg.params), fired


# -- coloring ---------------------------------------------------------------------------------

@dataclass
class ColoringResult:
    colors: list  # int in [1, L] or None

    @property
    def uncolored(self) -> list[int]:
        return [u for u, x in enumerate(self.colors) if x is UNCOLORED]

    def classes(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for u, x in enumerate(self.colors):
            if x is not UNCOLORED:
                out.setdefault(x, []).append(u)
        return out

    def to_json(self) -> dict:
        return {"colors": list(self.colors), "uncolored": self.uncolored}

    @classmethod
    def from_json(cls, obj) -> "ColoringResult":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls([None if x is None else int(x) for x in obj["colors"]])


def extract_coloring(lcfg: LayeredConfiguration) -> ColoringResult:
    colors = []
    for u in range(lcfg.n):
        zeros = np.flatnonzero(lcfg.d[:, u] == 0)
        colors.append(int(zeros[0]) + 1 if zeros.size else UNCOLORED)
    return ColoringResult(colors)


def _layer_view(lcfg: LayeredConfiguration, j: int) -> LayerView:
    """Layer ``j`` (1-based) with earlier-layer leadership as ``blocked``."""
    blocked = tuple(bool((lcfg.d[: j - 1, u] == 0).any()) for u in range(lcfg.n))
    cfg = lcfg.layer(j)
    base = LayerView.of(cfg)
    return LayerView(base.k, base.d, base.err, base.c, base.b, blocked)


def is_layer_legitimate(g: Graph, lcfg: LayeredConfiguration, j: int) -> bool:
    """Legitimacy for Algorithm ``j``: layers ``1..j`` all legitimate."""
    if not 1 <= j <= lcfg.layers:
        raise ValueError(f"layer {j} outside [1, {lcfg.layers}]")
    return all(legitimacy_of_view(g, _layer_view(lcfg, i)).legitimate for i in range(1, j + 1))


@dataclass
class ColoringCheck:
    ok: bool
    problems: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def verify_coloring(g: Graph, result: ColoringResult, K: int, k: int | None = None,
                    max_problems: int = 20) -> ColoringCheck:
    """Partition plus distance-K property, BFS-checked.

    With ``k`` also checks that each color class is a (k, k-1)-ruling set of
    the nodes not taken by earlier classes, distances measured in ``g``.
    """
    problems: list[str] = []
    if len(result.colors) != g.n:
        return ColoringCheck(False, [f"{len(result.colors)} colors for {g.n} nodes"])
    unc = result.uncolored
    if unc:
        problems.append(f"{len(unc)} uncolored nodes, e.g. {unc[:10]}")
    for u in range(g.n):
        if result.colors[u] is UNCOLORED:
            continue
        dist = bfs_distances(g, [u])
        for v, dv in dist.items():
            if v > u and 0 < dv <= K and result.colors[v] == result.colors[u]:
                problems.append(f"nodes {u} and {v} share color {result.colors[u]} "
                                f"at distance {dv}")
                if len(problems) >= max_problems:
                    return ColoringCheck(False, problems)
    if k is not None:
        residual = set(range(g.n))
        for j, cls in sorted(result.classes().items()):
            for s in cls:
                dist = bfs_distances(g, [s])
                near = [t for t in cls if t != s and dist[t] < k]
                if near:
                    problems.append(f"class {j}: {s} and {near[0]} closer than {k}")
            if cls:
                cover = bfs_distances(g, cls)
                far = [v for v in residual if cover[v] > k - 1]
                if far:
                    problems.append(f"class {j} leaves residual node {far[0]} farther than {k - 1}")
            residual -= set(cls)
    return ColoringCheck(not problems, problems[:max_problems])


# -- driver -------------------------------------------------------------------------------------

def run_coloring(g: Graph, k: int, L: int, daemon: Daemon, seed: int = 0,
                 cap: int = 10**6, lcfg0: LayeredConfiguration | None = None,
                 stop="legitimate", faults=(), trace: bool = False) -> RunResult:
    """Run all layers until every layer is legitimate (or the cap)."""
    if lcfg0 is None:
        lcfg0 = random_layered_configuration(g, k, L, seed)
    e = _engine(g, lcfg0)
    steps, reason, dchg, inj, events = run_engine(e, daemon, cap, stop, seed, faults, trace)
    return RunResult(_from_engine(e, lcfg0.params), steps, reason, dchg, inj, events, e.hash())
