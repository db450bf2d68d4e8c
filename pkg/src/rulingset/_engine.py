"""Mutable array engine shared by the protocol, scheduler and layered modules."""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .graph import Graph


class EngineFault(RuntimeError):
    """A command ran without its guard, or two commands wrote different
    values to one variable in the same activation."""


class Engine:
    """Layered state arrays plus the incrementally maintained rule tables."""

    def __init__(self, g: Graph, k: int, d, err, c, b, flags: int = K.F_DEFAULT):
        self.g = g
        self.k = int(k)
        self.flags = int(flags)
        self.d = np.ascontiguousarray(d, dtype=np.int8).copy()
        self.err = np.ascontiguousarray(err, dtype=np.int8).copy()
        self.c = np.ascontiguousarray(c, dtype=np.int8).copy()
        self.b = np.ascontiguousarray(b, dtype=np.int8).copy()
        L, n = self.d.shape
        if n != g.n:
            raise ValueError(f"configuration has {n} nodes, graph has {g.n}")
        self.nbr = np.ascontiguousarray(g.nbr_array)
        self.deg = np.ascontiguousarray(g.deg_array)
        self.elig = np.zeros((L, n), dtype=np.int32)
        self.lok = np.zeros((L, n), dtype=np.bool_)
        self.bad = np.zeros(L, dtype=np.int64)
        self.stamp = np.zeros((L, n), dtype=np.int64)
        self.tick = 0
        self.refresh()

    @property
    def layers(self) -> int:
        return self.d.shape[0]

    def refresh(self) -> None:
        K.compute_tables(self.k, self.flags, self.d, self.err, self.c, self.b,
                         self.nbr, self.deg, self.elig, self.lok)
        self.bad[:] = (~self.lok).sum(axis=1)

    def activable(self) -> np.ndarray:
        out = np.empty(self.g.n, dtype=np.int32)
        cnt = K.activable_nodes(self.elig, out)
        return out[:cnt]

    def step(self, selected) -> np.ndarray:
        """Fire the selected nodes; returns the ``[L, n]`` fired rule masks."""
        sel = np.asarray(selected, dtype=np.int32)
        if sel.size == 0:
            raise ValueError("selection must be nonempty")
        if (self.elig[:, sel] != 0).sum(axis=0).min() == 0:
            bad = [int(u) for u in sel if not self.elig[:, u].any()]
            raise ValueError(f"selected nodes {bad} have no eligible rule")
        fired = np.zeros(self.d.shape, dtype=np.int32)
        self.tick += 1
        fault, node, _ = K.step_nodes(sel, self.k, self.flags, self.d, self.err, self.c,
                                      self.b, self.nbr, self.deg, self.elig, self.lok,
                                      self.bad, self.stamp, self.tick, fired)
        if fault != K.FAULT_NONE:
            raise EngineFault(f"conflicting writes at node {node}")
        return fired

    def run(self, daemon: int, p: float, rng_state: np.ndarray, rr: np.ndarray,
            max_steps: int, stop_legit: bool, J: int = 0):
        steps, reason, dchg, node, self.tick = K.run_loop(
            self.k, self.flags, self.d, self.err, self.c, self.b, self.nbr, self.deg,
            self.elig, self.lok, self.bad, self.stamp, self.tick, int(daemon),
            float(p), rng_state, rr, int(max_steps), bool(stop_legit), int(J))
        if reason == K.REASON_FAULT:
            raise EngineFault(f"conflicting writes at node {node}")
        return int(steps), int(reason), int(dchg)

    def legitimate(self, J: int | None = None) -> bool:
        J = self.layers - 1 if J is None else J
        return bool(K.is_legit(J, self.k, self.d, self.nbr, self.deg, self.bad))

    def hash(self) -> int:
        return int(K.fnv1a_config(self.k, self.d, self.err, self.c, self.b))
