# %% [markdown]
# # Tail behaviour
#
# The DKW inequality for the uncorrected sample, and the sub-Gaussian tail
# of the local discrepancy inside one dyadic node.

# %%
from edfreg.experiments import TailExperimentConfig, delta_tail, dkw_tail

res = dkw_tail(1000, 2000, seed=5)
for c in res.cells:
    print(f"t={c.params['t']:.1f}  P(D_n > t/sqrt n) ~ {c.mean:.4f}   bound {c.extra['bound']:.4f}")

# %% [markdown]
# Local discrepancy of a node of length 1/k holding its share of uniform
# points, scaled by sqrt(n k).

# %%
n = 10_000
for k in (4, 16, 64):
    r = delta_tail(n, k, 2000, TailExperimentConfig(k=k, k0=float(n)), seed=5)
    print(f"k={k:3d}  mean scaled delta {r.extras['mean_scaled']:.3f}  "
          f"log-tail slope vs lambda^2 {r.extras['log_tail_slope']:.2f}")
