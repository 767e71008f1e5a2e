"""Clustered sampling based on sample size.

Clients are sorted by decreasing size and their ``m * n_i`` samples are
poured, one after another, into ``m`` bins of capacity ``M``. A client that
overflows a bin spills into the next one, so each client ends up in a
contiguous run of distributions.
"""

from __future__ import annotations

import numpy as np

from .sampling import AllocationMatrix


def size_order(sizes) -> np.ndarray:
    """Client indices by descending size, ties broken by ascending index."""
    sizes = np.asarray(sizes)
    return np.lexsort((np.arange(len(sizes)), -sizes))


def allocate_by_size(sizes, m: int) -> AllocationMatrix:
    sizes = np.asarray(sizes, dtype=np.int64)
    if m < 1:
        raise ValueError("m must be >= 1")
    if len(sizes) == 0 or (sizes < 1).any():
        raise ValueError("client sizes must all be >= 1")
    M = int(sizes.sum())
    r = np.zeros((m, len(sizes)), dtype=np.int64)

    k, fill = 0, 0
    for i in size_order(sizes):
        left = m * int(sizes[i])
        while left > 0:
            take = min(left, M - fill)
            r[k, i] += take
            left -= take
            fill += take
            if fill == M:
                k, fill = k + 1, 0
    return AllocationMatrix(r, sizes)


def support_bound_check(alloc: AllocationMatrix, sizes=None, m: int | None = None) -> bool:
    """True iff every client sits in at most floor(m n_i / M) + 2 distributions."""
    sizes = alloc.sizes if sizes is None else np.asarray(sizes, dtype=np.int64)
    m = alloc.m if m is None else m
    M = int(sizes.sum())
    bound = (m * sizes) // M + 2
    return bool((alloc.support() <= bound).all())


def support_is_contiguous(alloc: AllocationMatrix) -> bool:
    """True iff each client's non-zero rows form one unbroken range of k."""
    nz = alloc.r_prime > 0
    for i in range(alloc.n):
        ks = np.flatnonzero(nz[:, i])
        if ks.size and ks[-1] - ks[0] + 1 != ks.size:
            return False
    return True
