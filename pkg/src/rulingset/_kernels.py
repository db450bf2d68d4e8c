"""Compiled guards, commands and step loops.

State arrays are always layered: ``d[L, n]``, ``err[L, n]``, ``c[L, n, M]``,
``b[L, n, M]`` (int8; ``b`` is 1 for up, 0 for down; clock ``i`` lives at
position ``i - 1``).  The single ruling set is the ``L == 1`` case; every
cross-layer quantifier then collapses to the base rule, so one kernel serves
both.  ``fz`` is the first layer in which the node has ``d == 0`` (``L`` if
none); "exists p < j with d^(p) = 0" is ``fz < j`` and "for all p <= j,
d^(p) > 0" is ``fz > j``.

Everything in here reads only the closed neighborhood of the node under
evaluation, and node handles are only used to index arrays, never compared
(except for the lowest-handle ``choose`` of Update distance).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .rng import nb_random, nb_randbelow

UP = 1
DOWN = 0

# rule bit positions; order is the RuleId declaration order
R_UPDATE_DISTANCE = 0
R_LEADER_DOWN = 1
R_TWO_HEADS = 2
R_BRANCH_INCOHERENCE = 3
R_REMOTE_COLLISION = 4
R_INCR_LEADER = 5
R_SYNC1_DOWN = 6
R_SYNC2PLUS_DOWN = 7
R_SYNC1PLUS_UP = 8
R_SYNC_END_OF_CHAIN = 9
R_BECOME_LEADER = 10
R_ERROR_SPREAD = 11
R_RESET_ERROR = 12
R_BELONG_TO_TWO = 13
N_RULES = 14

PRIORITY = np.array([0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 0], dtype=np.int64)

# variant flags (all set by default); clearing one reproduces a literal
# reading of the rule table that the engine deliberately departs from
F_INCR_REQUIRES_UP = 1
F_END_OF_CHAIN_FLIP = 2
F_SYNC_DOWN_SKIPS_CHAIN_END = 4
F_DEFAULT = 7

# engine fault codes returned by apply_node
FAULT_NONE = 0
FAULT_WRITE_CONFLICT = 1
FAULT_NOT_ELIGIBLE = 2


@njit(cache=True)
def first_zero(d, u):
    for p in range(d.shape[0]):
        if d[p, u] == 0:
            return p
    return d.shape[0]


@njit(cache=True)
def well_defined(j, u, k, d, err, nbr, deg, fz):
    if err[j, u] != 0:
        return False
    du = int(d[j, u])
    has_parent = False
    for x in range(deg[u]):
        dv = int(d[j, nbr[u, x]])
        if dv - du > 1 or du - dv > 1:
            return False
        if dv == du - 1:
            has_parent = True
    if du > 0 and (fz > j or du < k - 1) and not has_parent:
        return False
    if du == 0 and fz < j:
        return False
    return True


@njit(cache=True)
def leader_down(j, u, d, b):
    if d[j, u] != 0:
        return True
    for i in range(b.shape[2]):
        if b[j, u, i] != DOWN:
            return False
    return True


@njit(cache=True)
def branch_coherence_up(j, u, i, d, c, b, nbr, deg):
    """Pairs (u, parent) on clock i (1-based)."""
    du = int(d[j, u])
    cu = int(c[j, u, i - 1])
    bu = b[j, u, i - 1]
    for x in range(deg[u]):
        v = nbr[u, x]
        if int(d[j, v]) != du - 1:
            continue
        bv = b[j, v, i - 1]
        cv = int(c[j, v, i - 1])
        if bu == UP and bv == UP and cv == cu:
            continue
        if bu == UP and bv == DOWN and (cv == cu or cv == (cu + 1) % 4):
            continue
        if bu == DOWN and bv == DOWN and cv == cu:
            continue
        return False
    return True


@njit(cache=True)
def branch_coherence_down(j, u, i, d, c, b, nbr, deg):
    """Pairs (u, child) on clock i (1-based)."""
    du = int(d[j, u])
    cu = int(c[j, u, i - 1])
    bu = b[j, u, i - 1]
    for x in range(deg[u]):
        v = nbr[u, x]
        if int(d[j, v]) != du + 1:
            continue
        bv = b[j, v, i - 1]
        cv = int(c[j, v, i - 1])
        if bu == UP and bv == UP and cv == cu:
            continue
        if bu == DOWN and bv == UP and (cv == cu or cv == (cu + 3) % 4):
            continue
        if bu == DOWN and bv == DOWN and cv == cu:
            continue
        return False
    return True


@njit(cache=True)
def branch_coherence(j, u, k, d, c, b, nbr, deg):
    h = k // 2
    du = int(d[j, u])
    if du >= h:
        return True
    if du >= 1 and not branch_coherence_up(j, u, du, d, c, b, nbr, deg):
        return False
    for i in range(du + 1, h):
        if not branch_coherence_up(j, u, i, d, c, b, nbr, deg):
            return False
        if not branch_coherence_down(j, u, i, d, c, b, nbr, deg):
            return False
    return True


@njit(cache=True)
def locally_ok(j, u, k, d, err, c, b, nbr, deg, fz):
    """The three per-node conditions of legitimacy at (layer j, node u)."""
    return (well_defined(j, u, k, d, err, nbr, deg, fz)
            and leader_down(j, u, d, b)
            and branch_coherence(j, u, k, d, c, b, nbr, deg))


@njit(cache=True)
def distance_target(j, u, k, d, nbr, deg):
    t = k - 1
    for x in range(deg[u]):
        dv = int(d[j, nbr[u, x]]) + 1
        if dv < t:
            t = dv
    return t


@njit(cache=True)
def _incr_indices(j, u, k, flags, d, c, b, nbr, deg):
    """Bitmask over clock indices i (bit i-1) satisfying Incr Leader."""
    h = k // 2
    out = 0
    for i in range(1, h):
        ok = True
        cu = c[j, u, i - 1]
        for x in range(deg[u]):
            v = nbr[u, x]
            if d[j, v] != 1 or c[j, v, i - 1] != cu:
                ok = False
                break
            if (flags & F_INCR_REQUIRES_UP) and b[j, v, i - 1] != UP:
                ok = False
                break
        if ok:
            out |= 1 << (i - 1)
    return out


@njit(cache=True)
def _sync1_parent(j, u, d, nbr, deg):
    """The unique neighbor with d == 0, or -1 if there are zero or several."""
    found = -1
    for x in range(deg[u]):
        v = nbr[u, x]
        if d[j, v] == 0:
            if found >= 0:
                return -1
            found = v
    return found


@njit(cache=True)
def _sync1_down_indices(j, u, k, flags, d, c, b, nbr, deg):
    h = k // 2
    if d[j, u] != 1:
        return 0
    p = _sync1_parent(j, u, d, nbr, deg)
    if p < 0:
        return 0
    lo = 2 if (flags & F_SYNC_DOWN_SKIPS_CHAIN_END) else 1
    out = 0
    for i in range(lo, h):
        if b[j, u, i - 1] == UP and int(c[j, u, i - 1]) == (int(c[j, p, i - 1]) + 3) % 4:
            out |= 1 << (i - 1)
    return out


@njit(cache=True)
def _sync2_down_indices(j, u, k, flags, d, c, b, nbr, deg):
    h = k // 2
    du = int(d[j, u])
    if not (1 < du < h):
        return 0
    lo = du + 1 if (flags & F_SYNC_DOWN_SKIPS_CHAIN_END) else du
    out = 0
    for i in range(lo, h):
        if b[j, u, i - 1] != UP:
            continue
        ok = True
        cu = int(c[j, u, i - 1])
        for x in range(deg[u]):
            v = nbr[u, x]
            if int(d[j, v]) != du - 1:
                continue
            if int(c[j, v, i - 1]) != (cu + 1) % 4 or b[j, v, i - 1] != DOWN:
                ok = False
                break
        if ok:
            out |= 1 << (i - 1)
    return out


@njit(cache=True)
def _sync_up_indices(j, u, k, d, c, b, nbr, deg):
    h = k // 2
    du = int(d[j, u])
    if not (0 < du < h):
        return 0
    out = 0
    for i in range(du + 1, h):
        if b[j, u, i - 1] != DOWN:
            continue
        ok = True
        cu = c[j, u, i - 1]
        for x in range(deg[u]):
            v = nbr[u, x]
            if int(d[j, v]) != du + 1:
                continue
            if c[j, v, i - 1] != cu or b[j, v, i - 1] != UP:
                ok = False
                break
        if ok:
            out |= 1 << (i - 1)
    return out


@njit(cache=True)
def _end_of_chain_value(j, u, k, flags, d, c, b, nbr, deg):
    """New clock value at index d_u for Sync end-of-chain, or -1."""
    h = k // 2
    du = int(d[j, u])
    if not (0 < du < h):
        return -1
    cu = int(c[j, u, du - 1])
    bu = b[j, u, du - 1]
    target = -1
    for x in range(deg[u]):
        v = nbr[u, x]
        if int(d[j, v]) != du - 1:
            continue
        if b[j, v, du - 1] != DOWN:
            return -1
        cv = int(c[j, v, du - 1])
        if target < 0:
            target = cv
        elif cv != target:
            return -1
    if target < 0:
        return -1
    if target == (cu + 1) % 4:
        return target
    if (flags & F_END_OF_CHAIN_FLIP) and target == cu and bu == DOWN:
        return target
    return -1


@njit(cache=True)
def _remote_collision(j, u, k, d, err, c, nbr, deg):
    h = k // 2
    du = int(d[j, u])
    if err[j, u] != 0 or 2 * du > k - 1:
        return False
    m = deg[u] + 1
    for a in range(m):
        va = u if a == 0 else nbr[u, a - 1]
        da = int(d[j, va])
        if da < 1 or da > h - 1:
            continue
        ca = int(c[j, va, da - 1])
        for z in range(a + 1, m):
            vb = nbr[u, z - 1]
            if int(d[j, vb]) != da:
                continue
            if (ca - int(c[j, vb, da - 1])) % 4 == 2:
                return True
    return False


@njit(cache=True)
def activable_mask(j, u, k, flags, d, err, c, b, nbr, deg, fz):
    """Bitmask of rules whose guard holds at (layer j, node u)."""
    h = k // 2
    du = int(d[j, u])
    eu = int(err[j, u])
    dg = deg[u]
    mask = 0
    wd = well_defined(j, u, k, d, err, nbr, deg, fz)

    if du != 0 and du != distance_target(j, u, k, d, nbr, deg):
        mask |= 1 << R_UPDATE_DISTANCE

    if du == 0 and fz < j:
        mask |= 1 << R_BELONG_TO_TWO

    if wd and du == 0:
        for i in range(b.shape[2]):
            if b[j, u, i] == UP:
                mask |= 1 << R_LEADER_DOWN
                break

    if eu == 0:
        zeros = 1 if du == 0 else 0
        for x in range(dg):
            if d[j, nbr[u, x]] == 0:
                zeros += 1
        if zeros >= 2:
            mask |= 1 << R_TWO_HEADS
        if not branch_coherence(j, u, k, d, c, b, nbr, deg):
            mask |= 1 << R_BRANCH_INCOHERENCE
        if _remote_collision(j, u, k, d, err, c, nbr, deg):
            mask |= 1 << R_REMOTE_COLLISION

    if wd:
        if du == 0 and _incr_indices(j, u, k, flags, d, c, b, nbr, deg) != 0:
            mask |= 1 << R_INCR_LEADER
        if _sync1_down_indices(j, u, k, flags, d, c, b, nbr, deg) != 0:
            mask |= 1 << R_SYNC1_DOWN
        if _sync2_down_indices(j, u, k, flags, d, c, b, nbr, deg) != 0:
            mask |= 1 << R_SYNC2PLUS_DOWN
        if _sync_up_indices(j, u, k, d, c, b, nbr, deg) != 0:
            mask |= 1 << R_SYNC1PLUS_UP
        if _end_of_chain_value(j, u, k, flags, d, c, b, nbr, deg) >= 0:
            mask |= 1 << R_SYNC_END_OF_CHAIN

    if eu == 0 and du == k - 1 and fz >= j:
        all_far = True
        for x in range(dg):
            if d[j, nbr[u, x]] != k - 1:
                all_far = False
                break
        if all_far:
            mask |= 1 << R_BECOME_LEADER

    if eu == 0 and du <= h - 1:
        for x in range(dg):
            v = nbr[u, x]
            if err[j, v] == 1 and du < int(d[j, v]):
                mask |= 1 << R_ERROR_SPREAD
                break

    if eu == 1:
        ok = du > h
        if not ok:
            ok = True
            for x in range(dg):
                v = nbr[u, x]
                if int(d[j, v]) < du and err[j, v] != 1:
                    ok = False
                    break
        if ok:
            mask |= 1 << R_RESET_ERROR
    return mask


@njit(cache=True)
def eligible_of(mask):
    """Keep the activable rules of minimum priority number."""
    if mask == 0:
        return 0
    best = 99
    for r in range(N_RULES):
        if (mask >> r) & 1 and PRIORITY[r] < best:
            best = PRIORITY[r]
    out = 0
    for r in range(N_RULES):
        if (mask >> r) & 1 and PRIORITY[r] == best:
            out |= 1 << r
    return out


@njit(cache=True)
def eligible_mask(j, u, k, flags, d, err, c, b, nbr, deg):
    fz = first_zero(d, u)
    return eligible_of(activable_mask(j, u, k, flags, d, err, c, b, nbr, deg, fz))


@njit(cache=True)
def _put_clock(i, cv, bv, nc, nb, wc, wb):
    """Record a write to clock i (1-based); False on a conflicting write."""
    p = i - 1
    if cv >= 0:
        if wc[p] and nc[p] != cv:
            return False
        nc[p] = cv
        wc[p] = True
    if bv >= 0:
        if wb[p] and nb[p] != bv:
            return False
        nb[p] = bv
        wb[p] = True
    return True


@njit(cache=True)
def apply_rules(rules, j, u, k, flags, d, err, c, b, nbr, deg, fz, nc, nb):
    """Run the commands of every rule in ``rules`` against the pre-state.

    Writes the node's new clock rows into ``nc``/``nb`` and returns
    ``(new_d, new_err, fault)``.  Every command reads the pre-step arrays;
    two commands writing different values to one variable is a fault.
    """
    h = k // 2
    m = c.shape[2]
    du = int(d[j, u])
    nd = du
    ne = int(err[j, u])
    wdflag = False
    weflag = False
    wc = np.zeros(m, dtype=np.bool_)
    wb = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        nc[i] = c[j, u, i]
        nb[i] = b[j, u, i]

    for r in range(N_RULES):
        if not (rules >> r) & 1:
            continue
        ok = True
        if r == R_UPDATE_DISTANCE:
            t = distance_target(j, u, k, d, nbr, deg)
            if wdflag and nd != t:
                return nd, ne, FAULT_WRITE_CONFLICT
            nd = t
            wdflag = True
            if t < h:
                parent = -1
                for x in range(deg[u]):
                    if int(d[j, nbr[u, x]]) == t - 1:
                        parent = nbr[u, x]
                        break
                for i in range(t, h):
                    ok = ok and _put_clock(i, c[j, parent, i - 1], b[j, parent, i - 1],
                                           nc, nb, wc, wb)
        elif r == R_LEADER_DOWN:
            for i in range(1, h):
                ok = ok and _put_clock(i, -1, DOWN, nc, nb, wc, wb)
        elif (r == R_TWO_HEADS or r == R_BRANCH_INCOHERENCE
              or r == R_REMOTE_COLLISION or r == R_ERROR_SPREAD):
            if weflag and ne != 1:
                return nd, ne, FAULT_WRITE_CONFLICT
            ne = 1
            weflag = True
        elif r == R_INCR_LEADER:
            idx = _incr_indices(j, u, k, flags, d, c, b, nbr, deg)
            for i in range(1, h):
                if (idx >> (i - 1)) & 1:
                    ok = ok and _put_clock(i, (int(c[j, u, i - 1]) + 1) % 4, -1,
                                           nc, nb, wc, wb)
        elif r == R_SYNC1_DOWN:
            idx = _sync1_down_indices(j, u, k, flags, d, c, b, nbr, deg)
            p = _sync1_parent(j, u, d, nbr, deg)
            for i in range(1, h):
                if (idx >> (i - 1)) & 1:
                    ok = ok and _put_clock(i, c[j, p, i - 1], DOWN, nc, nb, wc, wb)
        elif r == R_SYNC2PLUS_DOWN:
            idx = _sync2_down_indices(j, u, k, flags, d, c, b, nbr, deg)
            for i in range(1, h):
                if (idx >> (i - 1)) & 1:
                    # every parent holds c + 1 (checked by the guard)
                    ok = ok and _put_clock(i, (int(c[j, u, i - 1]) + 1) % 4, DOWN,
                                           nc, nb, wc, wb)
        elif r == R_SYNC1PLUS_UP:
            idx = _sync_up_indices(j, u, k, d, c, b, nbr, deg)
            for i in range(1, h):
                if (idx >> (i - 1)) & 1:
                    ok = ok and _put_clock(i, -1, UP, nc, nb, wc, wb)
        elif r == R_SYNC_END_OF_CHAIN:
            val = _end_of_chain_value(j, u, k, flags, d, c, b, nbr, deg)
            ok = _put_clock(du, val, UP, nc, nb, wc, wb)
        elif r == R_BECOME_LEADER:
            if wdflag and nd != 0:
                return nd, ne, FAULT_WRITE_CONFLICT
            nd = 0
            wdflag = True
            for i in range(1, h):
                ok = ok and _put_clock(i, 0, DOWN, nc, nb, wc, wb)
        elif r == R_RESET_ERROR:
            if weflag and ne != 0:
                return nd, ne, FAULT_WRITE_CONFLICT
            ne = 0
            weflag = True
            if du == 0:
                if wdflag and nd != 1:
                    return nd, ne, FAULT_WRITE_CONFLICT
                nd = 1
                wdflag = True
            for i in range(1, h):
                ok = ok and _put_clock(i, 0, UP, nc, nb, wc, wb)
        elif r == R_BELONG_TO_TWO:
            if wdflag and nd != 1:
                return nd, ne, FAULT_WRITE_CONFLICT
            nd = 1
            wdflag = True
        if not ok:
            return nd, ne, FAULT_WRITE_CONFLICT
    return nd, ne, FAULT_NONE


# -- whole-configuration helpers --------------------------------------------------

@njit(cache=True)
def compute_tables(k, flags, d, err, c, b, nbr, deg, elig, lok):
    """Fill ``elig[L, n]`` (eligible rule masks) and ``lok[L, n]``."""
    L, n = d.shape
    for u in range(n):
        fz = first_zero(d, u)
        for j in range(L):
            elig[j, u] = eligible_of(activable_mask(j, u, k, flags, d, err, c, b, nbr, deg, fz))
            lok[j, u] = locally_ok(j, u, k, d, err, c, b, nbr, deg, fz)


@njit(cache=True)
def leaders_far_apart(j, k, d, nbr, deg, dist, queue):
    """True iff the layer-j leaders are pairwise at hop distance >= k."""
    n = d.shape[1]
    for s in range(n):
        if d[j, s] != 0:
            continue
        for v in range(n):
            dist[v] = -1
        dist[s] = 0
        head = 0
        tail = 0
        queue[tail] = s
        tail += 1
        while head < tail:
            x = queue[head]
            head += 1
            if dist[x] >= k - 1:
                continue
            for t in range(deg[x]):
                y = nbr[x, t]
                if dist[y] < 0:
                    dist[y] = dist[x] + 1
                    if d[j, y] == 0:
                        return False
                    queue[tail] = y
                    tail += 1
    return True


@njit(cache=True)
def fnv1a_config(k, d, err, c, b):
    """FNV-1a 64 over (k, L, n as 4-byte LE words) then, layer-major and
    node by node, the bytes d, err, c_1, b_1, c_2, b_2, ..."""
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    L, n = d.shape
    m = c.shape[2]
    for word in (k, L, n):
        for sh in range(4):
            h ^= np.uint64((word >> (8 * sh)) & 0xFF)
            h *= prime
    for j in range(L):
        for u in range(n):
            h ^= np.uint64(d[j, u] & 0xFF)
            h *= prime
            h ^= np.uint64(err[j, u] & 0xFF)
            h *= prime
            for i in range(m):
                h ^= np.uint64(c[j, u, i] & 0xFF)
                h *= prime
                h ^= np.uint64(b[j, u, i] & 0xFF)
                h *= prime
    return h


# -- stepping ------------------------------------------------------------------------

@njit(cache=True)
def step_nodes(sel, k, flags, d, err, c, b, nbr, deg, elig, lok, bad,
               stamp, tick, fired):
    """Fire every eligible rule of every layer at the selected nodes.

    ``elig`` must describe the current arrays.  After the commit the tables
    are refreshed for all (layer, node) pairs whose closed neighborhood
    changed.  ``fired[L, n]`` receives the rule masks (0 elsewhere).
    Returns ``(fault, fault_node, n_changed_d)``.
    """
    L, n = d.shape
    m = c.shape[2]
    ns = sel.shape[0]
    new_d = np.empty((L, ns), dtype=np.int8)
    new_e = np.empty((L, ns), dtype=np.int8)
    new_c = np.empty((L, ns, m), dtype=np.int8)
    new_b = np.empty((L, ns, m), dtype=np.int8)
    nc = np.empty(m, dtype=np.int8)
    nb = np.empty(m, dtype=np.int8)
    for s in range(ns):
        u = sel[s]
        fz = first_zero(d, u)
        for j in range(L):
            rules = elig[j, u]
            fired[j, u] = rules
            if rules == 0:
                new_d[j, s] = d[j, u]
                new_e[j, s] = err[j, u]
                for i in range(m):
                    new_c[j, s, i] = c[j, u, i]
                    new_b[j, s, i] = b[j, u, i]
                continue
            nd, ne, fault = apply_rules(rules, j, u, k, flags, d, err, c, b, nbr, deg, fz, nc, nb)
            if fault != FAULT_NONE:
                return fault, u, 0
            new_d[j, s] = nd
            new_e[j, s] = ne
            for i in range(m):
                new_c[j, s, i] = nc[i]
                new_b[j, s, i] = nb[i]

    # commit, collecting the pairs whose neighborhoods must be re-evaluated
    n_changed_d = 0
    dirty_j = np.empty(L * n, dtype=np.int32)
    dirty_u = np.empty(L * n, dtype=np.int32)
    nd_ = 0
    for s in range(ns):
        u = sel[s]
        old_fz = first_zero(d, u)
        changed_any = False
        for j in range(L):
            changed = new_d[j, s] != d[j, u] or new_e[j, s] != err[j, u]
            if new_d[j, s] != d[j, u]:
                n_changed_d += 1
            for i in range(m):
                if new_c[j, s, i] != c[j, u, i] or new_b[j, s, i] != b[j, u, i]:
                    changed = True
            d[j, u] = new_d[j, s]
            err[j, u] = new_e[j, s]
            for i in range(m):
                c[j, u, i] = new_c[j, s, i]
                b[j, u, i] = new_b[j, s, i]
            if changed:
                changed_any = True
                for x in range(-1, deg[u]):
                    v = u if x < 0 else nbr[u, x]
                    if stamp[j, v] != tick:
                        stamp[j, v] = tick
                        dirty_j[nd_] = j
                        dirty_u[nd_] = v
                        nd_ += 1
        if changed_any and first_zero(d, u) != old_fz:
            for j in range(L):
                if stamp[j, u] != tick:
                    stamp[j, u] = tick
                    dirty_j[nd_] = j
                    dirty_u[nd_] = u
                    nd_ += 1
    for q in range(nd_):
        j = dirty_j[q]
        v = dirty_u[q]
        fz = first_zero(d, v)
        elig[j, v] = eligible_of(activable_mask(j, v, k, flags, d, err, c, b, nbr, deg, fz))
        ok = locally_ok(j, v, k, d, err, c, b, nbr, deg, fz)
        if ok != lok[j, v]:
            bad[j] += -1 if ok else 1
            lok[j, v] = ok
    return FAULT_NONE, -1, n_changed_d


@njit(cache=True)
def activable_nodes(elig, out):
    """Write the activable node handles (ascending) into ``out``; return count."""
    L, n = elig.shape
    cnt = 0
    for u in range(n):
        for j in range(L):
            if elig[j, u] != 0:
                out[cnt] = u
                cnt += 1
                break
    return cnt


DAEMON_SYNCHRONOUS = 0
DAEMON_CENTRAL = 1
DAEMON_SUBSET = 2
DAEMON_ROUND_ROBIN = 3

REASON_CAP = 0
REASON_LEGITIMATE = 1
REASON_FIXPOINT = 2
REASON_FAULT = 3


@njit(cache=True)
def select_nodes(daemon, p, rng, rr, act, cnt, out):
    """Daemon choice among ``act[:cnt]``; returns the number selected.

    Stream use: central draws ``randbelow(cnt)``; subset draws one
    ``random()`` per activable node in ascending handle order and redraws the
    whole vector while it is empty; round-robin is deterministic and keeps
    its cursor in ``rr[0]``.
    """
    if daemon == DAEMON_SYNCHRONOUS:
        for q in range(cnt):
            out[q] = act[q]
        return cnt
    if daemon == DAEMON_CENTRAL:
        out[0] = act[nb_randbelow(rng, cnt)]
        return 1
    if daemon == DAEMON_SUBSET:
        while True:
            m = 0
            for q in range(cnt):
                if nb_random(rng) < p:
                    out[m] = act[q]
                    m += 1
            if m > 0:
                return m
    # round robin: first activable handle >= cursor, cyclically
    best = -1
    for q in range(cnt):
        if act[q] >= rr[0]:
            best = act[q]
            break
    if best < 0:
        best = act[0]
    out[0] = best
    rr[0] = best + 1
    return 1


@njit(cache=True)
def is_legit(J, k, d, nbr, deg, bad):
    """Legitimacy of layers ``0..J`` from the maintained ``bad`` counters."""
    for j in range(J + 1):
        if bad[j] != 0:
            return False
    n = d.shape[1]
    dist = np.empty(n, dtype=np.int32)
    queue = np.empty(n, dtype=np.int32)
    for j in range(J + 1):
        if not leaders_far_apart(j, k, d, nbr, deg, dist, queue):
            return False
    return True


@njit(cache=True)
def run_loop(k, flags, d, err, c, b, nbr, deg, elig, lok, bad, stamp, tick,
             daemon, p, rng, rr, max_steps, stop_legit, J):
    """Select-and-step until the cap, a fixpoint, or (optionally) legitimacy
    of layers ``0..J``.

    Returns ``(steps, reason, d_change_steps, fault_node, tick)``.
    """
    L, n = d.shape
    act = np.empty(n, dtype=np.int32)
    sel = np.empty(n, dtype=np.int32)
    dist = np.empty(n, dtype=np.int32)
    queue = np.empty(n, dtype=np.int32)
    fired = np.zeros((L, n), dtype=np.int32)
    d_change_steps = 0
    # the leader-distance half of legitimacy only depends on d
    far_known = False
    far = False
    steps = 0
    while True:
        if stop_legit:
            clean = True
            for j in range(J + 1):
                if bad[j] != 0:
                    clean = False
                    break
            if clean:
                if not far_known:
                    far = True
                    for j in range(J + 1):
                        if not leaders_far_apart(j, k, d, nbr, deg, dist, queue):
                            far = False
                            break
                    far_known = True
                if far:
                    return steps, REASON_LEGITIMATE, d_change_steps, -1, tick
        cnt = activable_nodes(elig, act)
        if cnt == 0:
            return steps, REASON_FIXPOINT, d_change_steps, -1, tick
        if steps >= max_steps:
            return steps, REASON_CAP, d_change_steps, -1, tick
        ns = select_nodes(daemon, p, rng, rr, act, cnt, sel)
        tick += 1
        fault, fnode, nchg = step_nodes(sel[:ns], k, flags, d, err, c, b, nbr, deg,
                                        elig, lok, bad, stamp, tick, fired)
        if fault != FAULT_NONE:
            return steps, REASON_FAULT, d_change_steps, fnode, tick
        if nchg > 0:
            d_change_steps += 1
            far_known = False
        steps += 1


@njit(cache=True)
def walk_hashes(k, flags, d, err, c, b, nbr, deg, elig, lok, bad, stamp, tick,
                daemon, p, rng, rr, out):
    """Step like ``run_loop`` without a stop test, writing the post-step
    configuration hash of step t into ``out[t]``; ends at a fixpoint or when
    ``out`` is full.  Returns ``(steps, tick)``."""
    L, n = d.shape
    act = np.empty(n, dtype=np.int32)
    sel = np.empty(n, dtype=np.int32)
    fired = np.zeros((L, n), dtype=np.int32)
    steps = 0
    while steps < out.shape[0]:
        cnt = activable_nodes(elig, act)
        if cnt == 0:
            break
        ns = select_nodes(daemon, p, rng, rr, act, cnt, sel)
        tick += 1
        fault, fnode, nchg = step_nodes(sel[:ns], k, flags, d, err, c, b, nbr, deg,
                                        elig, lok, bad, stamp, tick, fired)
        if fault != FAULT_NONE:
            return -1 - fnode, tick
        out[steps] = fnv1a_config(k, d, err, c, b)
        steps += 1
    return steps, tick
