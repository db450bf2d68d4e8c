"""The (k, k-1)-ruling-set state machine.

Each node holds a distance estimate ``d`` in ``[0, k-1]``, an error bit and
``k//2 - 1`` clocks ``(c_i, b_i)`` with ``c_i`` in Z/4 and ``b_i`` an arrow.
Leaders are the nodes with ``d == 0``.

Rules carry a priority number; a node is eligible for the activable rules of
minimum number, and an activation fires all of them against the pre-step
snapshot.  Guards and commands are the compiled kernels; this module gives
them a value-typed API.

Three readings of the rule table go beyond its literal text and are on by
default (``ProtocolParams.flags``):

* ``F_INCR_REQUIRES_UP``: Incr Leader also needs every child's arrow up.
* ``F_SYNC_DOWN_SKIPS_CHAIN_END``: the two down-sync rules do not touch the
  clock whose index equals the node's own ``d`` (that clock belongs to Sync
  end-of-chain, which would otherwise write the opposite arrow).
* ``F_END_OF_CHAIN_FLIP``: Sync end-of-chain also flips a down arrow whose
  value already equals the parents' value.  Update distance copies a
  parent's down arrow to the chain end, and without the flip the leader
  would wait forever for that arrow to turn up.

Remote Collision, absent from the table, is rebuilt as: ``err == 0``,
``2 d_u <= k - 1``, and two distinct nodes of the closed neighborhood with
equal ``d = t`` in ``[1, k//2 - 1]`` whose clocks ``c_t`` differ by 2 mod 4.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels as K
from ._engine import EngineFault
from .graph import Graph
from .rng import as_rng

__all__ = [
    "ProtocolParams",
    "Arrow",
    "NodeState",
    "Configuration",
    "RuleId",
    "ActionSet",
    "EngineFault",
    "STATIONARY_RULES",
    "F_DEFAULT",
    "F_INCR_REQUIRES_UP",
    "F_END_OF_CHAIN_FLIP",
    "F_SYNC_DOWN_SKIPS_CHAIN_END",
    "well_defined",
    "leader_down",
    "branch_coherence_up",
    "branch_coherence_down",
    "branch_coherence",
    "guard",
    "command",
    "activable_rules",
    "eligible_rules",
    "activable_nodes",
    "apply_step",
    "random_node_state",
    "random_configuration",
    "uniform_configuration",
]

F_DEFAULT = K.F_DEFAULT
F_INCR_REQUIRES_UP = K.F_INCR_REQUIRES_UP
F_END_OF_CHAIN_FLIP = K.F_END_OF_CHAIN_FLIP
F_SYNC_DOWN_SKIPS_CHAIN_END = K.F_SYNC_DOWN_SKIPS_CHAIN_END


@dataclass(frozen=True)
class ProtocolParams:
    k: int
    flags: int = F_DEFAULT

    def __post_init__(self):
        if int(self.k) < 3:
            raise ValueError(f"k must be at least 3, got {self.k}")

    @property
    def clock_count(self) -> int:
        return max(0, self.k // 2 - 1)

    @property
    def states_per_node(self) -> int:
        return self.k * 2 * 8 ** self.clock_count


class Arrow(enum.IntEnum):
    DOWN = K.DOWN
    UP = K.UP

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class NodeState:
    d: int
    err: int = 0
    clocks: tuple[tuple[int, Arrow], ...] = ()

    def validate(self, k: int) -> None:
        if not 0 <= self.d <= k - 1:
            raise ValueError(f"d={self.d} outside [0, {k - 1}]")
        if self.err not in (0, 1):
            raise ValueError(f"err={self.err} is not 0 or 1")
        if len(self.clocks) != max(0, k // 2 - 1):
            raise ValueError(f"{len(self.clocks)} clocks for k={k}")
        for c, _ in self.clocks:
            if not 0 <= c <= 3:
                raise ValueError(f"clock value {c} outside Z/4")

    def to_json(self) -> dict:
        return {"d": self.d, "err": self.err,
                "clocks": [{"c": c, "b": str(Arrow(b))} for c, b in self.clocks]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "NodeState":
        clocks = tuple((int(x["c"]), Arrow[str(x["b"]).upper()]) for x in obj.get("clocks", []))
        return cls(int(obj["d"]), int(obj.get("err", 0)), clocks)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int8)
    a.setflags(write=False)
    return a


class Configuration:
    """Immutable global snapshot; equality and hashing are by value."""

    __slots__ = ("params", "d", "err", "c", "b", "_hash")

    def __init__(self, params: ProtocolParams | int, d, err=None, c=None, b=None):
        if not isinstance(params, ProtocolParams):
            params = ProtocolParams(int(params))
        n = len(d)
        m = params.clock_count
        self.params = params
        self.d = _frozen(np.asarray(d).reshape(n))
        self.err = _frozen(np.zeros(n) if err is None else np.asarray(err).reshape(n))
        self.c = _frozen(np.zeros((n, m)) if c is None else np.asarray(c).reshape(n, m))
        self.b = _frozen(np.zeros((n, m)) if b is None else np.asarray(b).reshape(n, m))
        if n and (self.d.min() < 0 or self.d.max() > params.k - 1):
            raise ValueError(f"d outside [0, {params.k - 1}]")
        if n and not np.isin(self.err, (0, 1)).all():
            raise ValueError("err must be 0 or 1")
        if self.c.size and (self.c.min() < 0 or self.c.max() > 3):
            raise ValueError("clock values must lie in Z/4")
        if self.b.size and not np.isin(self.b, (0, 1)).all():
            raise ValueError("arrows must be 0 (down) or 1 (up)")
        self._hash = None

    # construction ------------------------------------------------------------

    @classmethod
    def from_states(cls, params: ProtocolParams | int, states: Sequence[NodeState]):
        if not isinstance(params, ProtocolParams):
            params = ProtocolParams(int(params))
        for s in states:
            s.validate(params.k)
        m = params.clock_count
        n = len(states)
        c = np.zeros((n, m), dtype=np.int8)
        b = np.zeros((n, m), dtype=np.int8)
        for u, s in enumerate(states):
            for i, (ci, bi) in enumerate(s.clocks):
                c[u, i] = ci
                b[u, i] = int(bi)
        return cls(params, [s.d for s in states], [s.err for s in states], c, b)

    @classmethod
    def from_arrays(cls, params, d, err, c, b):
        return cls(params, d, err, c, b)

    # views ------------------------------------------------------------------------

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def n(self) -> int:
        return len(self.d)

    def node(self, u: int) -> NodeState:
        clocks = tuple((int(self.c[u, i]), Arrow(int(self.b[u, i])))
                       for i in range(self.params.clock_count))
        return NodeState(int(self.d[u]), int(self.err[u]), clocks)

    def states(self) -> list[NodeState]:
        return [self.node(u) for u in range(self.n)]

    def layered_arrays(self):
        """``(d, err, c, b)`` as one-layer arrays for the kernels (copies)."""
        return (self.d[None].copy(), self.err[None].copy(),
                self.c[None].copy(), self.b[None].copy())

    def replace(self, u: int, state: NodeState) -> "Configuration":
        state.validate(self.k)
        d, err, c, b = (a.copy() for a in (self.d, self.err, self.c, self.b))
        d[u], err[u] = state.d, state.err
        for i, (ci, bi) in enumerate(state.clocks):
            c[u, i], b[u, i] = ci, int(bi)
        return Configuration(self.params, d, err, c, b)

    def with_params(self, params: ProtocolParams) -> "Configuration":
        if params.k != self.k:
            raise ValueError("cannot change k of an existing configuration")
        return Configuration(params, self.d, self.err, self.c, self.b)

    # identity -----------------------------------------------------------------

    def fingerprint(self) -> int:
        """FNV-1a 64 of the canonical byte layout (also used in traces)."""
        if self._hash is None:
            d, err, c, b = self.layered_arrays()
            self._hash = int(K.fnv1a_config(self.k, d, err, c, b))
        return self._hash

    def __hash__(self) -> int:
        return self.fingerprint()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return (self.k == other.k and np.array_equal(self.d, other.d)
                and np.array_equal(self.err, other.err)
                and np.array_equal(self.c, other.c) and np.array_equal(self.b, other.b))

    def __repr__(self) -> str:
        return f"Configuration(k={self.k}, d={self.d.tolist()}, err={self.err.tolist()})"

    # JSON -------------------------------------------------------------------------

    def to_json(self) -> dict:
        return {"k": self.k, "nodes": [self.node(u).to_json() for u in range(self.n)]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    @classmethod
    def from_json(cls, obj: Mapping | str, flags: int = F_DEFAULT) -> "Configuration":
        if isinstance(obj, str):
            obj = json.loads(obj)
        params = ProtocolParams(int(obj["k"]), flags)
        return cls.from_states(params, [NodeState.from_json(x) for x in obj["nodes"]])


class RuleId(enum.IntEnum):
    UpdateDistance = K.R_UPDATE_DISTANCE
    LeaderDown = K.R_LEADER_DOWN
    TwoHeads = K.R_TWO_HEADS
    BranchIncoherence = K.R_BRANCH_INCOHERENCE
    RemoteCollision = K.R_REMOTE_COLLISION
    IncrLeader = K.R_INCR_LEADER
    Sync1Down = K.R_SYNC1_DOWN
    Sync2PlusDown = K.R_SYNC2PLUS_DOWN
    Sync1PlusUp = K.R_SYNC1PLUS_UP
    SyncEndOfChain = K.R_SYNC_END_OF_CHAIN
    BecomeLeader = K.R_BECOME_LEADER
    ErrorSpread = K.R_ERROR_SPREAD
    ResetError = K.R_RESET_ERROR
    BelongToTwoRulingSets = K.R_BELONG_TO_TWO

    @property
    def priority(self) -> int:
        return int(K.PRIORITY[self.value])

    @property
    def stationary(self) -> bool:
        return self in STATIONARY_RULES

    @staticmethod
    def from_mask(mask: int) -> tuple["RuleId", ...]:
        return tuple(r for r in RuleId if (int(mask) >> r.value) & 1)

    @staticmethod
    def to_mask(rules: Iterable["RuleId"]) -> int:
        m = 0
        for r in rules:
            m |= 1 << int(r)
        return m


STATIONARY_RULES = frozenset({RuleId.IncrLeader, RuleId.Sync1Down, RuleId.Sync2PlusDown,
                              RuleId.Sync1PlusUp, RuleId.SyncEndOfChain})


class ActionSet(Mapping):
    """Node -> rules fired at that node in one step."""

    def __init__(self, fired: Mapping[int, Sequence[RuleId]]):
        self._m = {int(u): tuple(rs) for u, rs in sorted(fired.items())}
        if not self._m:
            raise ValueError("an action set is nonempty")

    def __getitem__(self, u):
        return self._m[u]

    def __iter__(self):
        return iter(self._m)

    def __len__(self):
        return len(self._m)

    def __repr__(self):
        return f"ActionSet({ {u: [r.name for r in rs] for u, rs in self._m.items()} })"

    def to_json(self) -> dict:
        return {str(u): [r.name for r in rs] for u, rs in self._m.items()}


# -- predicates ---------------------------------------------------------------------

def _ctx(g: Graph, cfg: Configuration):
    if cfg.n != g.n:
        raise ValueError(f"configuration has {cfg.n} nodes, graph has {g.n}")
    d, err, c, b = cfg.layered_arrays()
    return d, err, c, b, g.nbr_array, g.deg_array


def well_defined(g: Graph, cfg: Configuration, u: int) -> bool:
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    return bool(K.well_defined(0, u, cfg.k, d, err, nbr, deg, K.first_zero(d, u)))


def leader_down(g: Graph, cfg: Configuration, u: int) -> bool:
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    return bool(K.leader_down(0, u, d, b))


def _check_index(cfg: Configuration, i: int) -> None:
    if not 1 <= i <= cfg.params.clock_count:
        raise ValueError(f"clock index {i} outside [1, {cfg.params.clock_count}]")


def branch_coherence_up(g: Graph, cfg: Configuration, u: int, i: int) -> bool:
    _check_index(cfg, i)
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    return bool(K.branch_coherence_up(0, u, i, d, c, b, nbr, deg))


def branch_coherence_down(g: Graph, cfg: Configuration, u: int, i: int) -> bool:
    _check_index(cfg, i)
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    return bool(K.branch_coherence_down(0, u, i, d, c, b, nbr, deg))


def branch_coherence(g: Graph, cfg: Configuration, u: int) -> bool:
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    return bool(K.branch_coherence(0, u, cfg.k, d, c, b, nbr, deg))


def _activable_mask(g, cfg, u) -> int:
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    return int(K.activable_mask(0, u, cfg.k, cfg.params.flags, d, err, c, b, nbr, deg,
                                K.first_zero(d, u)))


def guard(rule: RuleId, g: Graph, cfg: Configuration, u: int) -> bool:
    return bool((_activable_mask(g, cfg, u) >> int(rule)) & 1)


def command(rule: RuleId, g: Graph, cfg: Configuration, u: int) -> NodeState:
    """New state of ``u`` after ``rule`` alone; the guard must hold."""
    if not guard(rule, g, cfg, u):
        raise EngineFault(f"{RuleId(rule).name} invoked at node {u} with a false guard")
    return _run_rules(g, cfg, u, 1 << int(rule))


def _run_rules(g, cfg, u, mask) -> NodeState:
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    m = cfg.params.clock_count
    nc = np.empty(m, dtype=np.int8)
    nb = np.empty(m, dtype=np.int8)
    nd, ne, fault = K.apply_rules(mask, 0, u, cfg.k, cfg.params.flags, d, err, c, b,
                                  nbr, deg, K.first_zero(d, u), nc, nb)
    if fault != K.FAULT_NONE:
        names = [r.name for r in RuleId.from_mask(mask)]
        raise EngineFault(f"conflicting writes at node {u} from {names}")
    return NodeState(int(nd), int(ne), tuple((int(nc[i]), Arrow(int(nb[i]))) for i in range(m)))


def activable_rules(g: Graph, cfg: Configuration, u: int) -> list[RuleId]:
    return list(RuleId.from_mask(_activable_mask(g, cfg, u)))


def eligible_rules(g: Graph, cfg: Configuration, u: int) -> list[RuleId]:
    return list(RuleId.from_mask(K.eligible_of(_activable_mask(g, cfg, u))))


def activable_nodes(g: Graph, cfg: Configuration) -> list[int]:
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    out = []
    for u in range(g.n):
        fz = K.first_zero(d, u)
        if K.activable_mask(0, u, cfg.k, cfg.params.flags, d, err, c, b, nbr, deg, fz):
            out.append(u)
    return out


def apply_step(g: Graph, cfg: Configuration, selected: Iterable[int]):
    """Fire all eligible rules at every selected node against ``cfg``.

    Returns ``(next_configuration, ActionSet)``.
    """
    sel = sorted(set(int(u) for u in selected))
    if not sel:
        raise ValueError("selection must be nonempty")
    d, err, c, b, nbr, deg = _ctx(g, cfg)
    k, flags, m = cfg.k, cfg.params.flags, cfg.params.clock_count
    nd_, ne_, nc_, nb_ = d[0].copy(), err[0].copy(), c[0].copy(), b[0].copy()
    nc = np.empty(m, dtype=np.int8)
    nb = np.empty(m, dtype=np.int8)
    fired = {}
    for u in sel:
        if not 0 <= u < g.n:
            raise ValueError(f"node {u} outside the graph")
        fz = K.first_zero(d, u)
        mask = K.eligible_of(K.activable_mask(0, u, k, flags, d, err, c, b, nbr, deg, fz))
        if mask == 0:
            raise ValueError(f"node {u} has no eligible rule")
        nd, ne, fault = K.apply_rules(mask, 0, u, k, flags, d, err, c, b, nbr, deg, fz, nc, nb)
        if fault != K.FAULT_NONE:
            raise EngineFault(f"conflicting writes at node {u} from "
                              f"{[r.name for r in RuleId.from_mask(mask)]}")
        nd_[u], ne_[u] = nd, ne
        nc_[u], nb_[u] = nc, nb
        fired[u] = RuleId.from_mask(mask)
    return Configuration(cfg.params, nd_, ne_, nc_, nb_), ActionSet(fired)


# -- constructors ---------------------------------------------------------------------

def random_node_state(k: int, rng) -> NodeState:
    """Uniform over the variable domains.  Draw order: d, err, then (c_i, b_i)."""
    rng = as_rng(rng)
    d = rng.randbelow(k)
    err = rng.randbelow(2)
    clocks = []
    for _ in range(max(0, k // 2 - 1)):
        ci = rng.randbelow(4)
        clocks.append((ci, Arrow(rng.randbelow(2))))
    return NodeState(d, err, tuple(clocks))


def random_configuration(g: Graph, params: ProtocolParams | int, rng) -> Configuration:
    if not isinstance(params, ProtocolParams):
        params = ProtocolParams(int(params))
    rng = as_rng(rng)
    return Configuration.from_states(params, [random_node_state(params.k, rng) for _ in range(g.n)])


def uniform_configuration(g: Graph, params: ProtocolParams | int, d: int, err: int = 0,
                          c: int = 0, b: Arrow = Arrow.UP) -> Configuration:
    """Every node in the same state (handy for hand-built starts)."""
    if not isinstance(params, ProtocolParams):
        params = ProtocolParams(int(params))
    m = params.clock_count
    n = g.n
    return Configuration(params, np.full(n, d), np.full(n, err), np.full((n, m), c),
                         np.full((n, m), int(b)))
