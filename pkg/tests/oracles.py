"""Independent reference computations used by the tests.

Nothing here imports the code under test's algorithms; each oracle rebuilds
the expected result from first principles.
"""

import numpy as np


def naive_ward(d, tie_rtol=1e-10):
    """O(n^3)-per-step Ward: recompute every cluster-pair cost from raw squared dissimilarities.

    cost(A, B) = |A||B| / (|A| + |B|) * (mean_AxB d^2 - mean_AxA d^2 / 2 - mean_BxB d^2 / 2),
    which for Euclidean inputs is the Ward objective |A||B|/(|A|+|B|) ||mu_A - mu_B||^2.
    Costs within ``tie_rtol`` (relative) of the minimum tie; ties go to the
    smallest (lower id, higher id), new clusters numbered n, n+1, ...
    Returns [(left leaves, right leaves, cost)] with left the lower id.
    """
    d2 = np.asarray(d, dtype=float) ** 2
    n = len(d2)
    clusters = {i: [i] for i in range(n)}
    out = []
    next_id = n
    while len(clusters) > 1:
        ids = sorted(clusters)
        cand = []
        for x in range(len(ids)):
            for y in range(x + 1, len(ids)):
                a, b = clusters[ids[x]], clusters[ids[y]]
                na, nb = len(a), len(b)
                cross = d2[np.ix_(a, b)].mean()
                wa = d2[np.ix_(a, a)].mean()
                wb = d2[np.ix_(b, b)].mean()
                cand.append((na * nb / (na + nb) * (cross - wa / 2 - wb / 2), ids[x], ids[y]))
        low = min(c[0] for c in cand)
        best = min((c for c in cand if c[0] <= low + tie_rtol * max(1.0, low)), key=lambda c: c[1:])
        cost, ia, ib = best
        out.append((tuple(sorted(clusters[ia])), tuple(sorted(clusters[ib])), cost))
        clusters[next_id] = clusters.pop(ia) + clusters.pop(ib)
        next_id += 1
    return out


def centroid_ward_cost(points_a, points_b):
    """Ward objective increase from explicit point sets."""
    a, b = np.asarray(points_a, float), np.asarray(points_b, float)
    na, nb = len(a), len(b)
    diff = a.mean(axis=0) - b.mean(axis=0)
    return na * nb / (na + nb) * float(diff @ diff)


def prefix_sum_allocation(sizes, m):
    """Water-filling re-derived from prefix sums over the descending-size order."""
    sizes = list(sizes)
    M = sum(sizes)
    order = sorted(range(len(sizes)), key=lambda i: (-sizes[i], i))
    r = np.zeros((m, len(sizes)), dtype=np.int64)
    Q = 0
    for i in order:
        lo, hi = Q, Q + m * sizes[i]
        for k in range(lo // M, (hi - 1) // M + 1):
            r[k, i] = min(hi, (k + 1) * M) - max(lo, k * M)
        Q = hi
    return r


def central_difference(f, theta, h=1e-6):
    g = np.zeros_like(theta)
    for j in range(len(theta)):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def all_distinct_equal(n, m):
    """P(m iid uniform draws over n items are distinct) = prod_{j<m} (1 - j/n)."""
    p = 1.0
    for j in range(m):
        p *= 1 - j / n
    return p


def random_valid_allocation(rng, n, m, max_size=50, swaps=20):
    """Random (r', sizes) meeting both margin conditions, built without the package's allocators.

    Start from a random-order water-filling, blend with MD rows, then apply
    random 2x2 mass swaps (which keep every row and column sum fixed).
    """
    sizes = rng.integers(1, max_size + 1, size=n).astype(np.int64)
    M = int(sizes.sum())
    r = np.zeros((m, n), dtype=np.int64)
    bins = rng.permutation(m)
    k, fill = 0, 0
    for i in rng.permutation(n):
        left = m * int(sizes[i])
        while left:
            take = min(left, M - fill)
            r[bins[k], i] += take
            left -= take
            fill += take
            if fill == M:
                k, fill = k + 1, 0
    lam = int(rng.integers(0, 3))
    r = r + lam * np.tile(sizes, (m, 1))
    sizes = sizes * (1 + lam)
    if m > 1 and n > 1:
        for _ in range(swaps):
            k, l = rng.choice(m, 2, replace=False)
            i, j = rng.choice(n, 2, replace=False)
            cap = min(r[k, i], r[l, j])
            if cap:
                d = int(rng.integers(1, cap + 1))
                r[k, i] -= d
                r[l, i] += d
                r[l, j] -= d
                r[k, j] += d
    return r, sizes
