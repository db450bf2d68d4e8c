"""
How two close leaders find out
==============================

Two leaders closer than k must not both survive. Adjacent or nearly
adjacent leaders see each other directly. Farther apart, the clocks
running out from each leader disagree where the two regions meet.
"""

# %%
import numpy as np

from rulingset import Arrow, Configuration, Scripted, generate, leaders, run

k = 6
delta = 5

# %%
# A path with a leader at each end. Distance values are correct for both, and
# every clock on the left half reads 0 while the right half reads 2.
g = generate("path", n=delta + 1)
d = [min(w, delta - w) for w in range(delta + 1)]
clocks = k // 2 - 1
c = np.array([[2 if 2 * w > delta else 0] * clocks for w in range(delta + 1)])
b = np.full((delta + 1, clocks), int(Arrow.DOWN))
cfg = Configuration(k, d, None, c, b)
print("d:", cfg.d.tolist(), " leaders:", leaders(cfg))

# %%
# Activate the middle node, then walk the error back to the left leader.
middle = delta // 2
script = [[middle]] + [[w] for w in range(middle - 1, -1, -1)] + [[0]]
res = run(g, cfg, Scripted(script), cap=len(script), stop=None, trace=True)
for ev in res.trace:
    if ev["type"] == "step":
        print(ev["step"], ev["fired"])

# %%
# The left leader reset itself; only one leader remains.
print("d:", res.final.d.tolist(), " leaders:", leaders(res.final))
