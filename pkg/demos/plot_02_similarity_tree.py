"""
Grouping clients by their model updates
=======================================

Eight equal clients whose updates point in two directions. Ward clustering
on the angle between updates recovers the two families, and each family
gets its own sampling distributions.
"""

# %%
import numpy as np

from clustered_sampling.alloc_similarity import allocate_from_dissimilarity, similarity_matrix

rng = np.random.default_rng(0)
directions = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
family = np.array([0, 1, 0, 1, 1, 0, 0, 1])
grads = directions[family] + 0.05 * rng.normal(size=(8, 3))

d = similarity_matrix(grads, "arccos")
print(np.round(d, 2))

# %%
# Clients have equal size, so with m=2 each distribution holds exactly
# four clients' worth of mass: the tree cut stops at the two families.
res = allocate_from_dissimilarity([50] * 8, d, m=2)
print(res.tree.to_text())
print("groups:", res.cut.groups)
print(res.allocation.r_prime)

# %%
# With m=4, each family is split once more.
res4 = allocate_from_dissimilarity([50] * 8, d, m=4)
print("groups:", res4.cut.groups)
print((res4.allocation.probabilities > 0).astype(int))
