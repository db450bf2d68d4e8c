"""Daemons, the run driver, fault injection during runs, and JSONL traces.

``SubsetRandom(0.5)`` is the stand-in for the Gouda daemon: every nonempty
subset of the activable set has positive probability at every step, so on a
finite reachable space any configuration that stays reachable is visited
with probability one.  ``RoundRobinFair`` is deterministic and meant for
smoke tests only; it is not Gouda-fair in general.

Randomness comes from ``rng.Xorshift64Star``.  The daemon stream is seeded
with ``seed``; fault injection draws from a second stream seeded with
``seed ^ FAULT_STREAM_SALT`` so that adding faults never perturbs the
daemon's choices before the first injection.  The compiled and the Python
driver consume the daemon stream identically:

* central: ``randbelow(len(activable))``
* subset: one ``random()`` per activable node in ascending handle order,
  the whole vector redrawn while nothing was picked
* round robin: first activable handle at or after a cursor, cyclically
"""

from __future__ import annotations

import enum
import io
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from ._engine import Engine, EngineFault
from .graph import Graph, graph_from_json, graph_to_json
from .protocol import Arrow, Configuration, NodeState, ProtocolParams, RuleId
from .rng import RNG_NAME, Xorshift64Star, to_state_array

__all__ = [
    "DaemonKind",
    "Daemon",
    "Synchronous",
    "CentralRandom",
    "SubsetRandom",
    "Scripted",
    "RoundRobinFair",
    "ScriptError",
    "make_daemon",
    "select",
    "RunResult",
    "TerminationReason",
    "run",
    "run_engine",
    "scramble",
    "replay_trace",
    "read_trace",
    "visited_hashes",
    "FAULT_STREAM_SALT",
]

log = logging.getLogger(__name__)

FAULT_STREAM_SALT = 0xFA17_5EED


class ScriptError(RuntimeError):
    """A scripted daemon ran out of selections or picked nothing activable."""


class DaemonKind(enum.Enum):
    Synchronous = "synchronous"
    CentralRandom = "central"
    SubsetRandom = "subset-random"
    Scripted = "scripted"
    RoundRobinFair = "round-robin"


class Daemon:
    kind: DaemonKind
    code: int | None = None  # compiled daemon id, None if Python-only
    p: float = 1.0

    def reset(self) -> None:
        pass

    def select(self, activable: Sequence[int], rng: Xorshift64Star) -> list[int]:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind.value}


class Synchronous(Daemon):
    kind = DaemonKind.Synchronous
    code = K.DAEMON_SYNCHRONOUS

    def select(self, activable, rng):
        _nonempty(activable)
        return list(activable)


class CentralRandom(Daemon):
    kind = DaemonKind.CentralRandom
    code = K.DAEMON_CENTRAL

    def select(self, activable, rng):
        _nonempty(activable)
        return [activable[rng.randbelow(len(activable))]]


class SubsetRandom(Daemon):
    kind = DaemonKind.SubsetRandom
    code = K.DAEMON_SUBSET

    def __init__(self, p: float = 0.5):
        if not 0.0 < p <= 1.0:
            raise ValueError(f"subset probability must lie in (0, 1], got {p}")
        self.p = float(p)

    def select(self, activable, rng):
        _nonempty(activable)
        while True:
            out = [u for u in activable if rng.random() < self.p]
            if out:
                return out

    def describe(self):
        return {"kind": self.kind.value, "p": self.p}


class RoundRobinFair(Daemon):
    """Cycles a cursor over handles; fires the next activable node."""

    kind = DaemonKind.RoundRobinFair
    code = K.DAEMON_ROUND_ROBIN

    def __init__(self):
        self.cursor = 0

    def reset(self):
        self.cursor = 0

    def select(self, activable, rng):
        _nonempty(activable)
        pick = next((u for u in activable if u >= self.cursor), activable[0])
        self.cursor = pick + 1
        return [pick]


class Scripted(Daemon):
    """Replays a fixed list of node sets, each intersected with the activable set."""

    kind = DaemonKind.Scripted

    def __init__(self, script: Iterable[Iterable[int]]):
        self.script = [sorted(set(int(u) for u in s)) for s in script]
        self.pos = 0

    def reset(self):
        self.pos = 0

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.script)

    def select(self, activable, rng):
        if self.pos >= len(self.script):
            raise ScriptError(f"script exhausted after {self.pos} selections")
        want = self.script[self.pos]
        act = set(int(u) for u in activable)
        out = [u for u in want if u in act]
        if not out:
            raise ScriptError(f"scripted selection {self.pos} {want} has no activable node")
        self.pos += 1
        return out

    def describe(self):
        return {"kind": self.kind.value, "script": self.script}


def _nonempty(activable):
    if len(activable) == 0:
        raise ValueError("the activable set is empty")


def make_daemon(name: str, p: float = 0.5, script=None) -> Daemon:
    key = name.strip().lower().replace("_", "-")
    if key in ("synchronous", "sync"):
        return Synchronous()
    if key in ("central", "central-random"):
        return CentralRandom()
    if key in ("subset-random", "subset", "gouda"):
        return SubsetRandom(p)
    if key in ("round-robin", "roundrobin", "round-robin-fair"):
        return RoundRobinFair()
    if key == "scripted":
        if script is None:
            raise ValueError("the scripted daemon needs a script")
        return Scripted(script)
    raise ValueError(f"unknown daemon {name!r}")


def select(daemon: Daemon, cfg, activable: Sequence[int], rng) -> list[int]:
    """One daemon decision (``cfg`` is accepted for interface symmetry)."""
    return daemon.select(sorted(int(u) for u in activable), rng)


# -- results -----------------------------------------------------------------------

class TerminationReason(str, enum.Enum):
    LEGITIMATE = "legitimate_reached"
    STEP_CAP = "step_cap"
    FIXPOINT = "stationary_fixpoint"
    STOP = "stop_predicate"


_REASON_OF_CODE = {
    K.REASON_CAP: TerminationReason.STEP_CAP,
    K.REASON_LEGITIMATE: TerminationReason.LEGITIMATE,
    K.REASON_FIXPOINT: TerminationReason.FIXPOINT,
}


@dataclass
class Injection:
    scheduled: int
    step: int
    nodes: list[int]
    legitimate_before: bool


@dataclass
class RunResult:
    final: object
    steps: int
    reason: TerminationReason
    d_change_steps: int = 0
    injections: list[Injection] = field(default_factory=list)
    trace: list[dict] | None = None
    final_hash: int = 0

    @property
    def legitimate(self) -> bool:
        return self.reason is TerminationReason.LEGITIMATE

    def summary(self) -> dict:
        return {"steps": self.steps, "reason": self.reason.value,
                "d_change_steps": self.d_change_steps,
                "final_hash": f"{self.final_hash:016x}",
                "injections": [vars(i) for i in self.injections]}


# -- engine-level driver -----------------------------------------------------------------

def _random_state_into(engine: Engine, u: int, rng: Xorshift64Star) -> None:
    m = engine.c.shape[2]
    for j in range(engine.layers):
        engine.d[j, u] = rng.randbelow(engine.k)
        engine.err[j, u] = rng.randbelow(2)
        for i in range(m):
            engine.c[j, u, i] = rng.randbelow(4)
            engine.b[j, u, i] = rng.randbelow(2)


def scramble(engine: Engine, m: int, rng: Xorshift64Star) -> list[int]:
    """Give ``m`` distinct uniformly chosen nodes uniformly random states."""
    n = engine.g.n
    if not 0 <= m <= n:
        raise ValueError(f"cannot scramble {m} of {n} nodes")
    nodes = list(range(n))
    rng.shuffle(nodes)
    chosen = sorted(nodes[:m])
    for u in chosen:
        _random_state_into(engine, u, rng)
    engine.refresh()
    return chosen


def _node_json(engine: Engine, u: int):
    m = engine.c.shape[2]
    out = []
    for j in range(engine.layers):
        out.append({"d": int(engine.d[j, u]), "err": int(engine.err[j, u]),
                    "clocks": [{"c": int(engine.c[j, u, i]),
                                "b": str(Arrow(int(engine.b[j, u, i])))} for i in range(m)]})
    return out[0] if engine.layers == 1 else out


def _state_json(engine: Engine) -> dict:
    return {"k": engine.k, "layers": engine.layers,
            "nodes": [_node_json(engine, u) for u in range(engine.g.n)]}


def _fired_json(engine: Engine, fired: np.ndarray, sel) -> dict:
    out = {}
    for u in sel:
        if engine.layers == 1:
            out[str(u)] = [r.name for r in RuleId.from_mask(fired[0, u])]
        else:
            out[str(u)] = {str(j + 1): [r.name for r in RuleId.from_mask(fired[j, u])]
                           for j in range(engine.layers) if fired[j, u]}
    return out


def run_engine(engine: Engine, daemon: Daemon, cap: int, stop="legitimate", seed: int = 0,
               faults: Sequence[tuple[int, int]] = (), trace: bool = False,
               stop_layer: int | None = None, trace_header: dict | None = None) -> tuple:
    """Drive ``engine`` in place.

    ``stop`` is ``"legitimate"``, ``None`` or a callable on the engine.
    Returns ``(steps, reason, d_change_steps, injections, events)``.
    """
    if cap < 0:
        raise ValueError("step cap must be non-negative")
    J = engine.layers - 1 if stop_layer is None else int(stop_layer)
    rng = Xorshift64Star(seed)
    fault_rng = Xorshift64Star(seed ^ FAULT_STREAM_SALT)
    daemon.reset()
    events: list[dict] | None = [] if trace else None
    if events is not None:
        header = {"type": "header", "version": 1, "rng": RNG_NAME, "seed": seed,
                  "daemon": daemon.describe(), "k": engine.k, "layers": engine.layers,
                  "flags": engine.flags, "graph": graph_to_json(engine.g),
                  "initial": _state_json(engine), "hash": f"{engine.hash():016x}"}
        if trace_header:
            header.update(trace_header)
        events.append(header)

    compiled = (daemon.code is not None and not trace
                and (stop is None or stop == "legitimate"))
    state = to_state_array(rng)
    rr = np.zeros(1, dtype=np.int64)

    steps = 0
    dchg = 0
    injections: list[Injection] = []
    pending = sorted((int(t), int(m)) for t, m in faults)

    counters = {"steps": 0, "dchg": 0}

    def segment(limit: int, stop_now) -> TerminationReason:
        nonlocal steps, dchg
        if compiled:
            s, code, dc = engine.run(daemon.code, daemon.p, state, rr, limit,
                                     stop_now == "legitimate", J)
            steps += s
            dchg += dc
            return _REASON_OF_CODE[code]
        counters["steps"], counters["dchg"] = steps, dchg
        reason = _python_segment(engine, daemon, rng, limit, stop_now, J, events, counters)
        steps, dchg = counters["steps"], counters["dchg"]
        return reason

    for t, m in pending:
        if t > cap:
            break
        if t > steps:
            segment(t - steps, None)
        before = engine.legitimate(J)
        nodes = scramble(engine, m, fault_rng)
        injections.append(Injection(t, steps, nodes, before))
        if events is not None:
            events.append({"type": "fault", "step": steps, "nodes": nodes,
                           "delta": {str(u): _node_json(engine, u) for u in nodes},
                           "hash": f"{engine.hash():016x}"})
        log.info("injected %d faults at step %d", m, steps)
    reason = segment(cap - steps, stop)
    if events is not None:
        events.append({"type": "end", "steps": steps, "reason": reason.value,
                       "hash": f"{engine.hash():016x}"})
    return steps, reason, dchg, injections, events


def _python_segment(engine, daemon, rng, limit, stop, J, events, counters):
    taken = 0
    while True:
        if stop == "legitimate" and engine.legitimate(J):
            return TerminationReason.LEGITIMATE
        if callable(stop) and stop(engine):
            return TerminationReason.STOP
        act = engine.activable()
        if act.size == 0:
            return TerminationReason.FIXPOINT
        if taken >= limit:
            return TerminationReason.STEP_CAP
        sel = sorted(daemon.select([int(u) for u in act], rng))
        d_before = engine.d[:, sel].copy()
        snap = [(engine.d[:, u].copy(), engine.err[:, u].copy(), engine.c[:, u].copy(),
                 engine.b[:, u].copy()) for u in sel] if events is not None else None
        fired = engine.step(sel)
        if not np.array_equal(d_before, engine.d[:, sel]):
            counters["dchg"] += 1
        if events is not None:
            delta = {}
            for u, (d0, e0, c0, b0) in zip(sel, snap):
                if not (np.array_equal(d0, engine.d[:, u]) and np.array_equal(e0, engine.err[:, u])
                        and np.array_equal(c0, engine.c[:, u])
                        and np.array_equal(b0, engine.b[:, u])):
                    delta[str(u)] = _node_json(engine, u)
            events.append({"type": "step", "step": counters["steps"], "selected": sel,
                           "fired": _fired_json(engine, fired, sel), "delta": delta,
                           "hash": f"{engine.hash():016x}"})
        taken += 1
        counters["steps"] += 1


# -- configuration-level driver ------------------------------------------------------------

def run(g: Graph, cfg0: Configuration, daemon: Daemon, cap: int = 10**6,
        stop="legitimate", seed: int = 0, faults: Sequence[tuple[int, int]] = (),
        trace: bool | str | os.PathLike = False) -> RunResult:
    """Select and step until ``stop`` holds, nothing is activable, or ``cap``.

    ``stop`` may be ``"legitimate"`` (default), ``None`` (run to the cap or a
    fixpoint) or a predicate on :class:`Configuration`.  ``faults`` is a list
    of ``(step, m)`` pairs: at that step ``m`` random nodes get random states
    (earlier if the run reaches a fixpoint first).  ``trace`` collects JSONL
    events in memory (``True``) or also writes them to the given path.
    """
    engine = Engine(g, cfg0.k, *cfg0.layered_arrays(), flags=cfg0.params.flags)
    if callable(stop):
        user = stop
        stop_fn = lambda e: user(_engine_config(e, cfg0.params))  # noqa: E731
    else:
        stop_fn = stop
    steps, reason, dchg, inj, events = run_engine(engine, daemon, cap, stop_fn, seed,
                                                  faults, bool(trace))
    final = _engine_config(engine, cfg0.params)
    if trace and not isinstance(trace, bool):
        with open(trace, "w") as fh:
            for ev in events:
                fh.write(json.dumps(ev, separators=(",", ":")) + "\n")
    return RunResult(final, steps, reason, dchg, inj, events, engine.hash())


def _engine_config(engine: Engine, params: ProtocolParams) -> Configuration:
    return Configuration(params, engine.d[0], engine.err[0], engine.c[0], engine.b[0])


# -- trace replay ------------------------------------------------------------------------------

def read_trace(source) -> list[dict]:
    if isinstance(source, (list, tuple)):
        return list(source)
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    return [json.loads(line) for line in io.StringIO(str(source)) if line.strip()]


def _apply_node_json(engine: Engine, u: int, obj) -> None:
    layers = obj if isinstance(obj, list) else [obj]
    for j, st in enumerate(layers):
        s = NodeState.from_json(st)
        engine.d[j, u], engine.err[j, u] = s.d, s.err
        for i, (ci, bi) in enumerate(s.clocks):
            engine.c[j, u, i], engine.b[j, u, i] = ci, int(bi)


def _engine_from_header(h: dict) -> Engine:
    g = graph_from_json(h["graph"])
    k, L = int(h["k"]), int(h.get("layers", 1))
    m = max(0, k // 2 - 1)
    z = np.zeros
    engine = Engine(g, k, z((L, g.n)), z((L, g.n)), z((L, g.n, m)), z((L, g.n, m)),
                    flags=int(h.get("flags", K.F_DEFAULT)))
    for u, st in enumerate(h["initial"]["nodes"]):
        _apply_node_json(engine, u, st)
    engine.refresh()
    return engine


@dataclass
class ReplayReport:
    ok: bool
    steps: int
    final_hash: int
    problems: list[str]


def replay_trace(source, reexecute: bool = True) -> ReplayReport:
    """Check a trace's hash chain by applying its deltas.

    With ``reexecute`` each step is also recomputed from the recorded
    selection, and the recomputed fired rules and delta must match.
    """
    events = read_trace(source)
    if not events or events[0].get("type") != "header":
        return ReplayReport(False, 0, 0, ["missing header"])
    engine = _engine_from_header(events[0])
    problems = []
    if f"{engine.hash():016x}" != events[0]["hash"]:
        problems.append("initial hash mismatch")
    steps = 0
    for ev in events[1:]:
        kind = ev.get("type")
        if kind == "step":
            sel = [int(u) for u in ev["selected"]]
            if reexecute:
                try:
                    fired = engine.step(sel)
                except (ValueError, EngineFault) as exc:
                    problems.append(f"step {ev['step']}: {exc}")
                    break
                if _fired_json(engine, fired, sel) != ev["fired"]:
                    problems.append(f"step {ev['step']}: fired rules differ")
                for u, st in ev["delta"].items():
                    if _node_json(engine, int(u)) != st:
                        problems.append(f"step {ev['step']}: node {u} differs")
            else:
                for u, st in ev["delta"].items():
                    _apply_node_json(engine, int(u), st)
                engine.refresh()
            steps += 1
        elif kind == "fault":
            for u, st in ev["delta"].items():
                _apply_node_json(engine, int(u), st)
            engine.refresh()
        elif kind == "end":
            pass
        else:
            problems.append(f"unknown event type {kind!r}")
            continue
        if f"{engine.hash():016x}" != ev["hash"]:
            problems.append(f"hash mismatch at {kind} {ev.get('step', '')}")
    return ReplayReport(not problems, steps, engine.hash(), problems)


def visited_hashes(g: Graph, cfg0: Configuration, daemon: Daemon, total_steps: int,
                   seed: int = 0) -> set[int]:
    """Fingerprints of every configuration seen by repeated runs from ``cfg0``.

    Each run lasts until a fixpoint; the next restarts from ``cfg0`` with the
    stream continuing, until ``total_steps`` steps have been taken.
    """
    if daemon.code is None:
        raise ValueError("visited_hashes needs a compiled daemon")
    state = to_state_array(Xorshift64Star(seed))
    rr = np.zeros(1, dtype=np.int64)
    seen = {cfg0.fingerprint()}
    left = int(total_steps)
    while left > 0:
        engine = Engine(g, cfg0.k, *cfg0.layered_arrays(), flags=cfg0.params.flags)
        while left > 0:
            out = np.empty(min(left, 1 << 16), dtype=np.uint64)
            steps, engine.tick = K.walk_hashes(
                engine.k, engine.flags, engine.d, engine.err, engine.c, engine.b,
                engine.nbr, engine.deg, engine.elig, engine.lok, engine.bad, engine.stamp,
                engine.tick, daemon.code, daemon.p, state, rr, out)
            if steps < 0:
                raise EngineFault(f"conflicting writes at node {-1 - steps}")
            seen.update(int(x) for x in np.unique(out[:steps]))
            left -= max(steps, 1)
            if steps < len(out):
                break  # fixpoint: restart from cfg0
    return seen
