"""Exhaustive state-space exploration on tiny instances.

A node state packs into ``((d * 2 + err) * 8**M) + sum_i (2 c_i + b_i) 8**(i-1)``
with ``M = k//2 - 1`` clocks, and a configuration is the mixed-radix number
``sum_u s_u * S**u`` where ``S = 2 k 8**M``.  Each activation of a node is
deterministic, so the successors of a configuration are obtained by
combining, for every nonempty subset of the activable nodes, the per-node
post-states computed once.

The legitimate set is built by the Python verifier (d-vectors first, then
clock assignments), not by the compiled kernels that generate successors.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from . import _kernels as K
from .graph import Graph
from .protocol import Configuration, ProtocolParams, apply_step
from .rng import Xorshift64Star
from .verifier import LayerView, legitimacy_of_view

__all__ = [
    "BudgetExceeded",
    "StateSpace",
    "StateSpaceResult",
    "state_count",
    "enumerate_configs",
    "successors",
    "verify_closure",
    "verify_reachability",
    "reachable_from",
    "legitimate_indices",
]

DEFAULT_BUDGET = 10**8


class BudgetExceeded(RuntimeError):
    """The configuration space is larger than the allowed budget."""


def state_count(g: Graph, k: int) -> int:
    return ProtocolParams(k).states_per_node ** g.n


# -- packing kernels ----------------------------------------------------------------------

@njit(cache=True)
def _decode(idx, n, k, m, d, err, c, b):
    S = 2 * k * 8 ** m
    x = idx
    for u in range(n):
        s = x % S
        x //= S
        lo = s % (8 ** m)
        hi = s // (8 ** m)
        d[0, u] = hi // 2
        err[0, u] = hi % 2
        for i in range(m):
            q = (lo >> (3 * i)) & 7
            c[0, u, i] = q >> 1
            b[0, u, i] = q & 1


@njit(cache=True)
def _node_code(d, e, nc, nb, m):
    lo = 0
    for i in range(m):
        lo |= ((int(nc[i]) << 1) | int(nb[i])) << (3 * i)
    return (int(d) * 2 + int(e)) * 8 ** m + lo


@njit(cache=True)
def _expand(idx, n, k, m, flags, nbr, deg, d, err, c, b, act, delta, nc, nb):
    """Decode ``idx``; fill ``act``/``delta`` (index change if u fires).

    Returns the number of activable nodes, or -1 on a write conflict.
    """
    _decode(idx, n, k, m, d, err, c, b)
    S = 2 * k * 8 ** m
    cnt = 0
    w = 1
    for u in range(n):
        fz = K.first_zero(d, u)
        rules = K.eligible_of(K.activable_mask(0, u, k, flags, d, err, c, b, nbr, deg, fz))
        if rules != 0:
            nd, ne, fault = K.apply_rules(rules, 0, u, k, flags, d, err, c, b, nbr, deg, fz,
                                          nc, nb)
            if fault != K.FAULT_NONE:
                return -1
            old = _node_code(d[0, u], err[0, u], c[0, u], b[0, u], m)
            new = _node_code(nd, ne, nc, nb, m)
            act[cnt] = u
            delta[cnt] = (new - old) * w
            cnt += 1
        w *= S
    return cnt


@njit(cache=True)
def _count_edges(total, n, k, m, flags, nbr, deg, outdeg):
    d = np.empty((1, n), np.int8)
    err = np.empty((1, n), np.int8)
    c = np.empty((1, n, m), np.int8)
    b = np.empty((1, n, m), np.int8)
    nc = np.empty(m, np.int8)
    nb = np.empty(m, np.int8)
    act = np.empty(n, np.int64)
    delta = np.empty(n, np.int64)
    for idx in range(total):
        cnt = _expand(idx, n, k, m, flags, nbr, deg, d, err, c, b, act, delta, nc, nb)
        if cnt < 0:
            return idx
        outdeg[idx] = (1 << cnt) - 1
    return -1


@njit(cache=True)
def _fill_edges(total, n, k, m, flags, nbr, deg, indptr, dst):
    d = np.empty((1, n), np.int8)
    err = np.empty((1, n), np.int8)
    c = np.empty((1, n, m), np.int8)
    b = np.empty((1, n, m), np.int8)
    nc = np.empty(m, np.int8)
    nb = np.empty(m, np.int8)
    act = np.empty(n, np.int64)
    delta = np.empty(n, np.int64)
    for idx in range(total):
        cnt = _expand(idx, n, k, m, flags, nbr, deg, d, err, c, b, act, delta, nc, nb)
        pos = indptr[idx]
        for sub in range(1, 1 << cnt):
            t = idx
            for q in range(cnt):
                if (sub >> q) & 1:
                    t += delta[q]
            dst[pos] = t
            pos += 1


# -- state space ----------------------------------------------------------------------------

@dataclass
class StateSpace:
    """Successor relation of every configuration, as CSR arrays."""

    g: Graph
    params: ProtocolParams
    total: int
    indptr: np.ndarray
    dst: np.ndarray

    @classmethod
    def build(cls, g: Graph, k: int | ProtocolParams, budget: int = DEFAULT_BUDGET):
        params = k if isinstance(k, ProtocolParams) else ProtocolParams(int(k))
        total = params.states_per_node ** g.n
        if total > budget:
            raise BudgetExceeded(f"{total} configurations exceed the budget {budget}")
        m = params.clock_count
        nbr, deg = np.ascontiguousarray(g.nbr_array), np.ascontiguousarray(g.deg_array)
        outdeg = np.zeros(total, dtype=np.int64)
        bad = _count_edges(total, g.n, params.k, m, params.flags, nbr, deg, outdeg)
        if bad >= 0:
            from ._engine import EngineFault
            raise EngineFault(f"write conflict in configuration {decode(g, params, bad)!r}")
        indptr = np.zeros(total + 1, dtype=np.int64)
        np.cumsum(outdeg, out=indptr[1:])
        if indptr[-1] > budget * 8:
            raise BudgetExceeded(f"{indptr[-1]} transitions exceed the edge budget")
        dst = np.empty(indptr[-1], dtype=np.int64)
        _fill_edges(total, g.n, params.k, m, params.flags, nbr, deg, indptr, dst)
        return cls(g, params, total, indptr, dst)

    def successors_of(self, idx: int) -> np.ndarray:
        return np.unique(self.dst[self.indptr[idx]:self.indptr[idx + 1]])

    def decode(self, idx: int) -> Configuration:
        return decode(self.g, self.params, idx)

    def encode(self, cfg: Configuration) -> int:
        return encode(self.params, cfg)


def decode(g: Graph, params: ProtocolParams, idx: int) -> Configuration:
    m = params.clock_count
    d = np.empty((1, g.n), np.int8)
    err = np.empty((1, g.n), np.int8)
    c = np.empty((1, g.n, m), np.int8)
    b = np.empty((1, g.n, m), np.int8)
    _decode(int(idx), g.n, params.k, m, d, err, c, b)
    return Configuration(params, d[0], err[0], c[0], b[0])


def encode(params: ProtocolParams, cfg: Configuration) -> int:
    m = params.clock_count
    S = params.states_per_node
    idx = 0
    for u in reversed(range(cfg.n)):
        code = int(_node_code(cfg.d[u], cfg.err[u], cfg.c[u], cfg.b[u], m))
        idx = idx * S + code
    return idx


def enumerate_configs(g: Graph, k: int | ProtocolParams,
                      budget: int = DEFAULT_BUDGET) -> Iterator[Configuration]:
    """Every syntactically valid configuration exactly once (packed order)."""
    params = k if isinstance(k, ProtocolParams) else ProtocolParams(int(k))
    total = params.states_per_node ** g.n
    if total > budget:
        raise BudgetExceeded(f"{total} configurations exceed the budget {budget}")
    for idx in range(total):
        yield decode(g, params, idx)


def successors(g: Graph, cfg: Configuration) -> set[Configuration]:
    """``apply_step(cfg, A)`` for every nonempty subset ``A`` of activable nodes."""
    from .protocol import activable_nodes
    act = activable_nodes(g, cfg)
    out = set()
    for r in range(1, len(act) + 1):
        for sub in itertools.combinations(act, r):
            out.add(apply_step(g, cfg, sub)[0])
    return out


# -- legitimate set (verifier side) ------------------------------------------------------------

def legitimate_indices(g: Graph, params: ProtocolParams) -> np.ndarray:
    """Packed indices of all legitimate configurations, via the verifier."""
    k, m, n = params.k, params.clock_count, g.n
    out = []
    for dvec in itertools.product(range(k), repeat=n):
        # quick d-only filter: well_defined with err = 0 and leaders apart
        zero_view = LayerView(k, dvec, (0,) * n, ((0,) * m,) * n, ((0,) * m,) * n, (False,) * n)
        rep = legitimacy_of_view(g, zero_view)
        if rep.distance_violations or any(p == "well_defined" for _, p in rep.violations):
            continue
        for clocks in itertools.product(range(8), repeat=n * m):
            c = tuple(tuple(clocks[u * m + i] >> 1 for i in range(m)) for u in range(n))
            b = tuple(tuple(clocks[u * m + i] & 1 for i in range(m)) for u in range(n))
            view = LayerView(k, dvec, (0,) * n, c, b, (False,) * n)
            if legitimacy_of_view(g, view).legitimate:
                cfg = Configuration(params, dvec, None, c if m else None, b if m else None)
                out.append(encode(params, cfg))
    return np.array(sorted(out), dtype=np.int64)


# -- checks -------------------------------------------------------------------------------------

@dataclass
class StateSpaceResult:
    graph_n: int
    k: int
    total: int
    reachable_count: int
    legitimate_count: int
    closure_verified: bool | None = None
    reachability_verified: bool | None = None
    deadlocks: int = 0
    counterexample: list[dict] | None = None
    seconds: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (self.counterexample is None and self.closure_verified is not False
                and self.reachability_verified is not False)

    def to_json(self) -> dict:
        out = {k: v for k, v in vars(self).items() if k != "notes"}
        out.update(self.notes)
        return out


def _cex_step(space: StateSpace, src: int, dst: int) -> dict:
    """Describe one transition src -> dst as a trace event pair."""
    a, b = space.decode(src), space.decode(dst)
    sel = [u for u in range(space.g.n) if a.node(u) != b.node(u)]
    return {"from": a.to_json(), "selected_changed": sel, "to": b.to_json()}


def verify_closure(g: Graph, k: int | ProtocolParams, budget: int = DEFAULT_BUDGET,
                   space: StateSpace | None = None) -> StateSpaceResult:
    """Every successor of a legitimate configuration is legitimate with equal d."""
    t0 = time.perf_counter()
    params = k if isinstance(k, ProtocolParams) else ProtocolParams(int(k))
    space = space or StateSpace.build(g, params, budget)
    legit = legitimate_indices(g, params)
    legit_set = set(legit.tolist())
    cex = None
    for x in legit:
        cfg = space.decode(x)
        for y in space.successors_of(int(x)):
            y = int(y)
            if y not in legit_set or not np.array_equal(space.decode(y).d, cfg.d):
                cex = [_cex_step(space, int(x), y)]
                break
        if cex:
            break
    return StateSpaceResult(g.n, params.k, space.total, space.total, len(legit),
                            closure_verified=cex is None, counterexample=cex,
                            seconds=time.perf_counter() - t0)


@njit(cache=True)
def _backward_bfs(total, rindptr, rsrc, seeds, mark):
    queue = np.empty(total, np.int64)
    head = 0
    tail = 0
    for s in seeds:
        if not mark[s]:
            mark[s] = True
            queue[tail] = s
            tail += 1
    while head < tail:
        y = queue[head]
        head += 1
        for p in range(rindptr[y], rindptr[y + 1]):
            x = rsrc[p]
            if not mark[x]:
                mark[x] = True
                queue[tail] = x
                tail += 1
    return tail


def _reverse(space: StateSpace):
    src = np.repeat(np.arange(space.total, dtype=np.int64), np.diff(space.indptr))
    order = np.argsort(space.dst, kind="stable")
    rsrc = src[order]
    counts = np.bincount(space.dst, minlength=space.total)
    rindptr = np.zeros(space.total + 1, dtype=np.int64)
    np.cumsum(counts, out=rindptr[1:])
    return rindptr, rsrc


def verify_reachability(g: Graph, k: int | ProtocolParams, source="all",
                        budget: int = DEFAULT_BUDGET,
                        space: StateSpace | None = None) -> StateSpaceResult:
    """From each examined configuration some legitimate one is reachable.

    ``source`` is ``"all"`` or ``("sample", m, seed)``.
    """
    t0 = time.perf_counter()
    params = k if isinstance(k, ProtocolParams) else ProtocolParams(int(k))
    space = space or StateSpace.build(g, params, budget)
    legit = legitimate_indices(g, params)
    rindptr, rsrc = _reverse(space)
    good = np.zeros(space.total, dtype=np.bool_)
    _backward_bfs(space.total, rindptr, rsrc, legit, good)
    if source == "all":
        examined = np.arange(space.total)
    else:
        _, m, seed = source
        rng = Xorshift64Star(int(seed))
        examined = np.array([rng.randbelow(space.total) for _ in range(int(m))], dtype=np.int64)
    failing = examined[~good[examined]]
    outdeg = np.diff(space.indptr)
    legit_mask = np.zeros(space.total, dtype=np.bool_)
    legit_mask[legit] = True
    deadlocks = int(np.count_nonzero((outdeg == 0) & ~legit_mask))
    cex = None
    if failing.size:
        x = int(failing[0])
        cex = [{"from": space.decode(x).to_json(), "note": "no legitimate configuration reachable"}]
    return StateSpaceResult(g.n, params.k, space.total, int(examined.size), len(legit),
                            reachability_verified=failing.size == 0, deadlocks=deadlocks,
                            counterexample=cex, seconds=time.perf_counter() - t0,
                            notes={"dead_configurations": int(failing.size)})


def reachable_from(space: StateSpace, start: int) -> np.ndarray:
    """Indices forward-reachable from ``start`` (inclusive)."""
    mat = csr_matrix((np.ones(space.dst.size, dtype=np.int8), space.dst, space.indptr),
                     shape=(space.total, space.total))
    return np.sort(breadth_first_order(mat, int(start), directed=True,
                                       return_predecessors=False))
