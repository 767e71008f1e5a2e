"""Ward agglomerative clustering on a dissimilarity matrix, and capacity-bounded tree cuts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LeafOverCapacity

TIE_RTOL = 1e-10


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass
class SimilarityTree:
    """Binary merge tree over ``n`` leaves.

    Leaves are nodes ``0..n-1``; the ``j``-th merge creates node ``n + j``.
    Heights are Ward merge costs, i.e. the increase in within-cluster sum of
    squares when the two children are joined.
    """

    n: int
    merges: list[Merge]

    @property
    def root(self) -> int:
        return self.n + len(self.merges) - 1 if self.merges else 0

    def children(self, node: int) -> tuple[int, int] | None:
        if node < self.n:
            return None
        mg = self.merges[node - self.n]
        return mg.left, mg.right

    def leaves(self, node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            v = stack.pop()
            if v < self.n:
                out.append(v)
            else:
                mg = self.merges[v - self.n]
                stack.extend((mg.right, mg.left))
        return sorted(out)

    def node_weights(self, leaf_weights) -> np.ndarray:
        w = np.zeros(self.n + len(self.merges), dtype=np.int64)
        w[:self.n] = leaf_weights
        for j, mg in enumerate(self.merges):
            w[self.n + j] = w[mg.left] + w[mg.right]
        return w

    def merge_sequence(self) -> list[tuple[tuple[int, ...], tuple[int, ...], float]]:
        """Merges as (left leaf set, right leaf set, height); handy for comparisons."""
        return [(tuple(self.leaves(mg.left)), tuple(self.leaves(mg.right)), mg.height)
                for mg in self.merges]

    def to_text(self, node: int | None = None, labels=None) -> str:
        """Parenthesized form, e.g. ``(2,(0,1):0.5):13.5``."""
        node = self.root if node is None else node
        if node < self.n:
            return str(labels[node] if labels is not None else node)
        mg = self.merges[node - self.n]
        return f"({self.to_text(mg.left, labels)},{self.to_text(mg.right, labels)}):{mg.height:.6g}"


def _check_dissimilarity(d: np.ndarray) -> None:
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"dissimilarity must be square, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("dissimilarity has non-finite entries")
    if (d < 0).any():
        raise ValueError("dissimilarity must be non-negative")
    if np.any(np.diag(d) != 0):
        raise ValueError("dissimilarity must have a zero diagonal")
    if not np.allclose(d, d.T, rtol=1e-12, atol=1e-12):
        raise ValueError("dissimilarity must be symmetric")


def ward_tree(dissim) -> SimilarityTree:
    """Agglomerate with Ward's criterion via Lance-Williams updates on squared dissimilarities.

    Costs within a relative ``TIE_RTOL`` of the minimum count as ties (the
    recursive update and a direct recomputation can differ in the last bits).
    Ties go to the pair with the smallest (lower id, higher id), where merged
    clusters take ids n, n+1, ... in creation order.
    """
    d = np.asarray(dissim, dtype=np.float64)
    _check_dissimilarity(d)
    n = len(d)
    w = d * d
    np.fill_diagonal(w, np.inf)
    ids = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    merges = []
    for step in range(n - 1):
        low = w.min()
        ra, rb = np.nonzero(w <= low + TIE_RTOL * max(1.0, low))
        keep = ra < rb
        ra, rb = ra[keep], rb[keep]
        lo = np.minimum(ids[ra], ids[rb])
        hi = np.maximum(ids[ra], ids[rb])
        pick = np.lexsort((hi, lo))[0]
        a, b = ra[pick], rb[pick]
        best = w[a, b]
        if ids[a] > ids[b]:
            a, b = b, a
        na, nb = size[a], size[b]
        merges.append(Merge(int(ids[a]), int(ids[b]), float(best) / 2.0, int(na + nb)))

        others = alive.copy()
        others[[a, b]] = False
        nc = size[others]
        upd = ((na + nc) * w[a, others] + (nb + nc) * w[b, others] - nc * best) / (na + nb + nc)
        # slot a holds the new cluster, slot b is retired
        w[a, others] = upd
        w[others, a] = upd
        w[b, :] = np.inf
        w[:, b] = np.inf
        alive[b] = False
        size[a] = na + nb
        ids[a] = n + step
    return SimilarityTree(n, merges)


@dataclass
class ClusterCut:
    groups: list[list[int]]
    q: list[int]

    @property
    def K(self) -> int:
        return len(self.groups)


def cut_tree(tree: SimilarityTree, leaf_weights, capacity: int) -> ClusterCut:
    """Split the tree from the root down until every group weighs at most ``capacity``."""
    leaf_weights = np.asarray(leaf_weights, dtype=np.int64)
    over = np.flatnonzero(leaf_weights > capacity)
    if over.size:
        raise LeafOverCapacity(
            f"leaf {over[0]} weighs {leaf_weights[over[0]]} > capacity {capacity}")
    weights = tree.node_weights(leaf_weights)
    groups, q = [], []
    stack = [tree.root]
    while stack:
        v = stack.pop()
        if weights[v] <= capacity:
            groups.append(tree.leaves(v))
            q.append(int(weights[v]))
        else:
            left, right = tree.children(v)
            stack.extend((right, left))
    return ClusterCut(groups, q)
