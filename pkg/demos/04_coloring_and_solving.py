"""
From ruling sets to colorings to classic problems
=================================================

Stack ruling-set layers to get a distance-2 coloring. Use that coloring as
a processing order and a second, wider coloring as stand-in identifiers.
Then every node rebuilds its neighborhood map and decides locally.
"""

# %%
from rulingset import (SubsetRandom, extract_coloring, generate, is_maximal_independent_set,
                       is_proper_coloring, run_coloring, solve_pipeline, verify_coloring)

g = generate("random", n=20, max_degree=3, seed=3)

# %%
# Each layer elects a ruling set among nodes not claimed by earlier layers.
res = run_coloring(g, 3, 27, SubsetRandom(0.5), seed=3)
col = extract_coloring(res.final)
print(f"{res.steps} steps, colors used: {sorted(set(col.colors))}")
print("distance-2 coloring valid:", verify_coloring(g, col, 2, k=3).ok)

# %%
# The whole pipeline: order coloring, identifier coloring, ball maps, greedy.
mis = solve_pipeline(g, "mis", seed=3)
p = mis.prepared
print(f"radius {p.radius}, steps per stage {p.steps}")
print("MIS:", [u for u in range(g.n) if mis.outputs[u]])
print("maximal independent:", is_maximal_independent_set(g, mis.outputs),
      " equals sequential greedy:", mis.oracle_match)

# %%
# The same maps answer a different question without rerunning anything.
colors = solve_pipeline(g, "coloring", prepared=p)
print("coloring:", colors.outputs)
print("proper with max degree + 1 colors:", is_proper_coloring(g, colors.outputs, g.max_degree + 1))
