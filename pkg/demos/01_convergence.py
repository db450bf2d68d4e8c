"""
Ruling sets from arbitrary states
=================================

Start a random bounded-degree graph in a random configuration, let the
protocol run under a randomized daemon, then knock it over and watch it
recover.
"""

# %%
# A connected random graph with maximum degree 4.
import numpy as np

from rulingset import (SubsetRandom, generate, inject_faults, is_legitimate, is_ruling_set,
                       leaders, random_configuration, run)

g = generate("random", n=120, max_degree=4, seed=7)
k = 5
print(f"{g.n} nodes, {len(g.edges())} edges, max degree {g.max_degree}")

# %%
# Every node starts with garbage: random distance values, error bits and clocks.
cfg0 = random_configuration(g, k, 7)
print("initial d histogram:", np.bincount(cfg0.d, minlength=k))

# %%
# Each step the daemon picks a random nonempty subset of the activable nodes.
res = run(g, cfg0, SubsetRandom(0.5), cap=10**6, seed=1)
S = leaders(res.final)
print(f"legitimate after {res.steps} steps ({res.d_change_steps} changed some d)")
print(f"{len(S)} leaders; (k, k-1)-ruling set: {is_ruling_set(g, S, k, k - 1)}")
print("final d histogram:", np.bincount(res.final.d, minlength=k))

# %%
# Clocks keep ticking in a legitimate configuration, but distances stay put.
more = run(g, res.final, SubsetRandom(0.5), cap=10_000, stop=None, seed=2)
print("d changes over 10^4 further steps:", more.d_change_steps)

# %%
# Scramble 15 nodes and run again.
hit = inject_faults(res.final, 15, 3)
print("after the fault:", "legitimate" if is_legitimate(g, hit).legitimate else "broken")
back = run(g, hit, SubsetRandom(0.5), cap=10**6, seed=4)
print(f"recovered in {back.steps} steps; leaders now {len(leaders(back.final))}")
