"""Clustered sampling based on model similarity.

Each client is summarized by a representative gradient (its latest local
model minus the global model it started from). Clients are clustered with
Ward's method on a pairwise dissimilarity, the tree is cut into groups that
fit in one distribution, the ``m`` heaviest groups seed the distributions and
the remaining clients are water-filled into the leftover capacity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateConfig, DimensionMismatch
from .hierarchy import ClusterCut, SimilarityTree, cut_tree, ward_tree
from .sampling import AllocationMatrix

MEASURES = ("arccos", "l2", "l1")


def _arccos_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    za, zb = na == 0, nb == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (a @ b.T) / np.outer(na, nb)
    out = np.arccos(np.clip(cos, -1.0, 1.0))
    # zero vs non-zero: orthogonal; zero vs zero: identical
    out[za[:, None] ^ zb[None, :]] = np.pi / 2
    out[za[:, None] & zb[None, :]] = 0.0
    return out


def dissimilarity_rows(vectors: np.ndarray, rows, measure: str) -> np.ndarray:
    """Dissimilarities between ``vectors[rows]`` and all vectors."""
    a = vectors[rows]
    if measure == "arccos":
        return _arccos_rows(a, vectors)
    if measure == "l2":
        return cdist(a, vectors, "euclidean")
    if measure == "l1":
        return cdist(a, vectors, "cityblock")
    raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")


def similarity_matrix(vectors, measure: str = "arccos") -> np.ndarray:
    """Symmetric n x n dissimilarity with a zero diagonal.

    ``arccos`` is the angle between vectors; ``l2``/``l1`` are the norms of
    their difference.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2:
        raise DimensionMismatch(f"expected an (n, d) array, got shape {v.shape}")
    d = dissimilarity_rows(v, np.arange(len(v)), measure)
    d = np.triu(d, 1)
    return d + d.T


class GradientCache:
    """Latest representative gradient per client.

    Never-sampled clients keep a zero vector. Dissimilarity matrices are
    kept per measure and only the rows/columns of clients whose gradient
    changed are recomputed.
    """

    def __init__(self, n: int, d: int):
        self.vectors = np.zeros((n, d))
        self.fresh = np.zeros(n, dtype=bool)
        self._dissim: dict[str, np.ndarray] = {}
        self._dirty: dict[str, set[int]] = {}

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def update(self, sampled, local_models, global_model) -> None:
        """Store theta_i - theta_global for every sampled client (last write wins on duplicates)."""
        global_model = np.asarray(global_model)
        if len(sampled) != len(local_models):
            raise DimensionMismatch(f"{len(sampled)} sampled entries but {len(local_models)} local models")
        for i, theta in zip(sampled, local_models):
            theta = np.asarray(theta)
            if theta.shape != global_model.shape or theta.shape != self.vectors.shape[1:]:
                raise DimensionMismatch(
                    f"local model shape {theta.shape}, global {global_model.shape}, cache d={self.vectors.shape[1]}")
            self.vectors[i] = theta - global_model
            self.fresh[i] = True
            for dirty in self._dirty.values():
                dirty.add(int(i))

    def dissimilarity(self, measure: str = "arccos") -> np.ndarray:
        if measure not in self._dissim:
            self._dissim[measure] = similarity_matrix(self.vectors, measure)
            self._dirty[measure] = set()
        d = self._dissim[measure]
        dirty = sorted(self._dirty[measure])
        if dirty:
            rows = dissimilarity_rows(self.vectors, dirty, measure)
            d[dirty, :] = rows
            d[:, dirty] = rows.T
            d[dirty, dirty] = 0.0
            self._dirty[measure] = set()
        return d.copy()


def split_large_clients(sizes, m: int) -> tuple[list[int], np.ndarray]:
    """Give clients with m n_i >= M their own probability-1 distributions.

    Returns the client index of each dedicated distribution (ascending client
    order) and every client's residual mass ``m n_i - a_i M`` still to place.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    M = int(sizes.sum())
    mass = m * sizes
    a = mass // M
    dedicated = [int(i) for i in np.flatnonzero(a) for _ in range(int(a[i]))]
    residual = mass - a * M
    if len(dedicated) > m or (len(dedicated) == m and residual.any()):
        raise DegenerateConfig("large clients leave no free distribution for the residual mass")
    return dedicated, residual


@dataclass
class SimilarityAllocation:
    allocation: AllocationMatrix
    dedicated: list[int]
    tree: SimilarityTree | None
    cut: ClusterCut | None
    # client ids of the tree leaves (clients with residual mass)
    leaf_clients: list[int]


def allocate_from_dissimilarity(sizes, dissim, m: int) -> SimilarityAllocation:
    """Similarity-based allocation given a precomputed client dissimilarity matrix."""
    sizes = np.asarray(sizes, dtype=np.int64)
    if m < 1:
        raise ValueError("m must be >= 1")
    if len(sizes) == 0 or (sizes < 1).any():
        raise ValueError("client sizes must all be >= 1")
    dissim = np.asarray(dissim, dtype=np.float64)
    if dissim.shape != (len(sizes), len(sizes)):
        raise DimensionMismatch(f"dissimilarity {dissim.shape} for {len(sizes)} clients")
    M = int(sizes.sum())
    n = len(sizes)

    dedicated, residual = split_large_clients(sizes, m)
    r = np.zeros((m, n), dtype=np.int64)
    for k, i in enumerate(dedicated):
        r[k, i] = M
    free = m - len(dedicated)
    leaf_clients = [int(i) for i in np.flatnonzero(residual)]
    if free == 0:
        return SimilarityAllocation(AllocationMatrix(r, sizes), dedicated, None, None, [])

    sub = dissim[np.ix_(leaf_clients, leaf_clients)]
    tree = ward_tree(sub)
    cut = cut_tree(tree, residual[leaf_clients], M)
    if cut.K < free:
        raise DegenerateConfig(f"tree cut gave {cut.K} groups for {free} distributions")

    groups = [[leaf_clients[j] for j in g] for g in cut.groups]
    order = sorted(range(cut.K), key=lambda g: (-cut.q[g], groups[g][0]))
    base = len(dedicated)
    fill = np.zeros(free, dtype=np.int64)
    for k, g in enumerate(order[:free]):
        for i in groups[g]:
            r[base + k, i] = residual[i]
        fill[k] = cut.q[g]

    k = 0
    for g in order[free:]:
        for i in groups[g]:
            u = int(residual[i])
            while u > 0:
                if fill[k] + u < M:
                    r[base + k, i] += u
                    fill[k] += u
                    u = 0
                else:
                    take = M - int(fill[k])
                    r[base + k, i] += take
                    u -= take
                    fill[k] = M
                    k += 1
    return SimilarityAllocation(AllocationMatrix(r, sizes), dedicated, tree,
                                ClusterCut(groups, list(cut.q)), leaf_clients)


def allocate_by_similarity(sizes, grads, m: int, measure: str = "arccos") -> AllocationMatrix:
    """Clustered-sampling distributions grouping clients with similar representative gradients.

    ``grads`` is an (n, d) array of representative gradients or a
    :class:`GradientCache`.
    """
    if isinstance(grads, GradientCache):
        dissim = grads.dissimilarity(measure)
    else:
        dissim = similarity_matrix(grads, measure)
    return allocate_from_dissimilarity(sizes, dissim, m).allocation
