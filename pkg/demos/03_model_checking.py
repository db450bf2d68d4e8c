"""
Exhaustive checks on tiny graphs
================================

For a handful of nodes the whole configuration space fits in memory, so
closure and reachability can be checked for every configuration, not
sampled.
"""

# %%
from rulingset import generate, state_count, verify_closure, verify_reachability

cases = [("path", 4, 3), ("cycle", 5, 3), ("path", 3, 4)]

# %%
for kind, n, k in cases:
    g = generate(kind, n=n)
    closure = verify_closure(g, k)
    reach = verify_reachability(g, k)
    print(f"{kind}{n} k={k}: {state_count(g, k)} configurations, "
          f"{closure.legitimate_count} legitimate")
    print(f"  closed: {closure.closure_verified}  "
          f"every start reaches legitimacy: {reach.reachability_verified}  "
          f"({closure.seconds + reach.seconds:.2f}s)")
