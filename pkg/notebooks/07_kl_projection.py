# %% [markdown]
# # KL projection onto the deleted simplex
#
# The deleted simplex caps every weight at 1/((1 - eps) n). The KL projection
# has the form q = min(cap, lam p), so it caps the largest coordinates and
# rescales the rest; lam is found after one sort.

# %%
import numpy as np

from quasigrad import project_kl_deleted_simplex

p = np.array([0.5, 0.2, 0.2, 0.1])
for eps in (0.0, 0.1, 0.25):
    q = project_kl_deleted_simplex(p, eps)
    print(f"eps={eps}: cap {1 / ((1 - eps) * p.size):.4f}, q = {np.round(q, 4)}")

# %% [markdown]
# Ratios among uncapped coordinates are preserved, and the order of the
# coordinates never changes.

# %%
rng = np.random.default_rng(0)
p = rng.dirichlet(np.full(12, 0.3))
q = project_kl_deleted_simplex(p, 0.2)
free = q < q.max()
print("uncapped ratios q/p:", np.round(q[free] / p[free], 6))
