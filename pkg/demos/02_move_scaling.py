# %% [markdown]
# # How many points move?
#
# Mean number of moved points as the budget m grows, at a fixed n.
# For m well below sqrt(n) a typical sample is already within 1/m of the
# grid and nothing moves; beyond that the count grows with m.

# %%
import math

from edfreg.experiments import TrialPlan, sweep_moves

n = 2**15 - 1
plan = TrialPlan((n,), (32, 64, 128, 256, 512, 1024), trials=40, master_seed=11)
res = sweep_moves(plan)
print(f"sqrt(n) = {math.sqrt(n):.0f}")
for c in res.cells:
    m = c.params["m"]
    print(f"m={m:5d}  mean(m1)={c.mean:8.2f} +- {c.stderr:6.2f}  mean(m1)/m={c.mean / m:.3f}")

# %% [markdown]
# The sweep serializes to CSV for plotting elsewhere.

# %%
print(res.to_csv())
