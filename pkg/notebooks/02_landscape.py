# %% [markdown]
# # Stationary points and the breakdown at 1/3
#
# Three atoms: -1 with mass eps, 0 with mass 1 - 2 eps and a with mass eps.
# The good points are the atoms at -1 and 0. The candidate q deletes the atom
# at -1 and keeps the outlier at a. It is a first-order stationary point of
# the spectral-norm objective exactly when a <= (1 - eps) / (1 - 3 eps).

# %%
import numpy as np

from quasigrad import approx_ratio_certificate, build_breakdown_example, stationarity_check

for eps in (0.1, 0.2, 0.25, 0.3):
    a_star = (1 - eps) / (1 - 3 * eps)
    flags = []
    for a in (0.99 * a_star, a_star, 1.01 * a_star):
        c = build_breakdown_example(eps, a)
        flags.append(stationarity_check(c.data, c.q, eps).is_stationary)
    print(f"eps={eps}: a*={a_star:.4f}, stationary just below/at/above: {flags}")

# %% [markdown]
# At eps = 1/3 the threshold is infinite: the bad candidate is stationary no
# matter how far the outlier sits, so no local method can beat breakdown 1/3.

# %%
for a in (1.0, 1e3, 1e6):
    c = build_breakdown_example(1 / 3, a)
    print(f"eps=1/3, a={a:g}: stationary {stationarity_check(c.data, c.q, 1 / 3).is_stationary}")

# %% [markdown]
# At the boundary the ratio of spectral norms matches the worst-case factor
# ((1 - eps) / (1 - 3 eps))^2, so that factor cannot be improved.

# %%
c = build_breakdown_example(0.2, 2.0)
cert = approx_ratio_certificate(c.data, c.q, 0.2)
print(f"ratio {cert.ratio:.6f}, landscape bound {cert.landscape_bound:.6f}")
