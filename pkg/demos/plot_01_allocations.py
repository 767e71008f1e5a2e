"""
Size-based allocations and the variance of aggregation weights
===============================================================

Ten clients of unequal size, five sampled per round. We compare plain
multinomial sampling with the size-based clustered allocation.
"""

# %%
# Build both allocations. Every row of the MD matrix is the size vector.
import numpy as np

from clustered_sampling import sampling
from clustered_sampling.alloc_size import allocate_by_size, support_bound_check

sizes = np.array([120, 80, 80, 60, 40, 30, 30, 20, 20, 20])
m = 5
md = sampling.md_allocation(sizes, m)
cl = allocate_by_size(sizes, m)
print(cl.r_prime)

# %%
# Each distribution has total mass M, and each client keeps total mass m * n_i,
# so the expected aggregation weight of client i is still n_i / M.
print("row sums   ", cl.r_prime.sum(axis=1))
print("column sums", cl.r_prime.sum(axis=0), "=", m * sizes)
print("support bound holds:", support_bound_check(cl))

# %%
# Per-client variance of the aggregation weight and probability of being sampled.
print(f"{'i':>2} {'p_i':>6} {'Var_MD':>9} {'Var_Cl':>9} {'P_MD':>6} {'P_Cl':>6}")
for rec in sampling.variance_dominance_report(cl):
    p = sizes[rec.client] / sizes.sum()
    print(f"{rec.client:>2} {p:6.3f} {rec.var_md:9.5f} {rec.var_cl:9.5f} {rec.p_md:6.3f} {rec.p_cl:6.3f}")

# %%
# A quick simulation: count how often the 5 draws hit 5 different clients.
from clustered_sampling.verify import distinct_client_distribution

for name, s in [("MD", sampling.md(sizes, m)), ("size", sampling.clustered(cl))]:
    hist = distinct_client_distribution(s, 20_000, seed=0)
    print(name, "P(all distinct) =", hist[-1] / hist.sum())
