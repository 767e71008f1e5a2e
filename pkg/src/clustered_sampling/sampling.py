"""Sampling schemes as integer allocation matrices, draws, and closed-form statistics.

A clustered sampler is a stack of ``m`` distributions over ``n`` clients. Row
``k`` of the allocation holds integer sample counts ``r'[k, i]``; the
probability of drawing client ``i`` from distribution ``k`` is
``r'[k, i] / M``. Unbiasedness requires every row to sum to ``M`` and every
column to sum to ``m * n_i``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidAllocation


class AllocationMatrix:
    """Immutable m x n integer matrix of per-distribution sample counts."""

    def __init__(self, r_prime, sizes):
        r = np.array(r_prime, dtype=np.int64)
        sizes = np.array(sizes, dtype=np.int64)
        if r.ndim != 2 or sizes.ndim != 1 or r.shape[1] != len(sizes):
            raise InvalidAllocation(f"shape mismatch: r' {r.shape}, sizes {sizes.shape}")
        if r.shape[0] < 1 or len(sizes) < 1:
            raise InvalidAllocation("allocation needs m >= 1 and n >= 1")
        if (sizes < 1).any():
            raise InvalidAllocation("client sizes must be >= 1")
        if (r < 0).any():
            raise InvalidAllocation("negative entries in r'")
        M = int(sizes.sum())
        m = r.shape[0]
        bad_rows = np.flatnonzero(r.sum(axis=1) != M)
        if bad_rows.size:
            raise InvalidAllocation(
                f"row {bad_rows[0]} sums to {r[bad_rows[0]].sum()}, expected M={M}")
        bad_cols = np.flatnonzero(r.sum(axis=0) != m * sizes)
        if bad_cols.size:
            i = bad_cols[0]
            raise InvalidAllocation(
                f"column {i} sums to {r[:, i].sum()}, expected m*n_i={m * sizes[i]}")
        r.setflags(write=False)
        sizes.setflags(write=False)
        self._r = r
        self._sizes = sizes
        self.M = M

    @property
    def r_prime(self) -> np.ndarray:
        return self._r

    @property
    def sizes(self) -> np.ndarray:
        return self._sizes

    @property
    def m(self) -> int:
        return self._r.shape[0]

    @property
    def n(self) -> int:
        return self._r.shape[1]

    @property
    def probabilities(self) -> np.ndarray:
        """r[k, i] = r'[k, i] / M."""
        return self._r / self.M

    def support(self) -> np.ndarray:
        """Number of distributions in which each client has non-zero mass."""
        return (self._r > 0).sum(axis=0)

    def __eq__(self, other):
        if not isinstance(other, AllocationMatrix):
            return NotImplemented
        return np.array_equal(self._r, other._r) and np.array_equal(self._sizes, other._sizes)

    def __repr__(self):
        return f"AllocationMatrix(m={self.m}, n={self.n}, M={self.M})"


def md_allocation(sizes, m: int) -> AllocationMatrix:
    """MD sampling: every distribution is the multinomial W_0 over client sizes."""
    if m < 1:
        raise ValueError("m must be >= 1")
    sizes = np.asarray(sizes, dtype=np.int64)
    return AllocationMatrix(np.tile(sizes, (m, 1)), sizes)


def save_allocation(alloc: AllocationMatrix, csv_path) -> Path:
    """Write r' as CSV (header = client ids) plus a ``.json`` sidecar with m, n, M."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(range(alloc.n))
        w.writerows(alloc.r_prime.tolist())
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps({"m": alloc.m, "n": alloc.n, "M": alloc.M}) + "\n")
    return sidecar


def load_allocation(csv_path) -> AllocationMatrix:
    """Read an allocation written by :func:`save_allocation`; client sizes are column sums / m."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as f:
        rows = list(csv.reader(f))
    r = np.array([[int(v) for v in row] for row in rows[1:]], dtype=np.int64)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    if r.shape != (meta["m"], meta["n"]):
        raise InvalidAllocation(f"CSV shape {r.shape} disagrees with sidecar m={meta['m']}, n={meta['n']}")
    col = r.sum(axis=0)
    if (col % meta["m"]).any():
        raise InvalidAllocation("column sums are not multiples of m")
    sizes = col // meta["m"]
    alloc = AllocationMatrix(r, sizes)
    if alloc.M != meta["M"]:
        raise InvalidAllocation(f"sidecar M={meta['M']} but sizes sum to {alloc.M}")
    return alloc


# ---------------------------------------------------------------------------
# Sampler kinds

@dataclass(frozen=True)
class UniformSampler:
    """FedAvg's original scheme: m distinct clients uniformly without replacement."""

    sizes: tuple
    m: int

    @property
    def n(self) -> int:
        return len(self.sizes)


@dataclass(frozen=True)
class MDSampler:
    sizes: tuple
    m: int

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def allocation(self) -> AllocationMatrix:
        return md_allocation(self.sizes, self.m)


@dataclass(frozen=True)
class ClusteredSampler:
    allocation: AllocationMatrix

    @property
    def m(self) -> int:
        return self.allocation.m

    @property
    def n(self) -> int:
        return self.allocation.n

    @property
    def sizes(self) -> tuple:
        return tuple(self.allocation.sizes.tolist())


Sampler = UniformSampler | MDSampler | ClusteredSampler


def uniform(sizes, m: int) -> UniformSampler:
    return UniformSampler(tuple(int(s) for s in sizes), int(m))


def md(sizes, m: int) -> MDSampler:
    return MDSampler(tuple(int(s) for s in sizes), int(m))


def clustered(alloc: AllocationMatrix) -> ClusteredSampler:
    return ClusteredSampler(alloc)


def _inverse_cdf(r_prime: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniform integers u[..., k] in [0, M) to client indices through row k of r'."""
    cum = np.cumsum(r_prime, axis=1)
    out = np.empty(u.shape, dtype=np.int64)
    for k in range(r_prime.shape[0]):
        out[..., k] = np.searchsorted(cum[k], u[..., k], side="right")
    return out


def draw_many(sampler: Sampler, rng: np.random.Generator, trials: int) -> np.ndarray:
    """(trials, m) matrix of sampled client indices, one independent draw per row."""
    if isinstance(sampler, UniformSampler):
        if sampler.m > sampler.n:
            raise ValueError(f"cannot draw {sampler.m} distinct clients out of {sampler.n}")
        # argpartition of iid keys gives a uniformly random m-subset per row
        keys = rng.random((trials, sampler.n))
        idx = np.argpartition(keys, sampler.m - 1, axis=1)[:, :sampler.m]
        return np.sort(idx, axis=1)
    alloc = sampler.allocation
    u = rng.integers(0, alloc.M, size=(trials, alloc.m))
    return _inverse_cdf(alloc.r_prime, u)


def draw(sampler: Sampler, rng: np.random.Generator) -> np.ndarray:
    """Sample one client set of length m.

    MD and clustered samplers draw one client per distribution k, in k order,
    with a single uniform integer in [0, M) each; duplicates are possible.
    The uniform sampler returns m distinct indices in ascending order.
    """
    if isinstance(sampler, UniformSampler):
        if sampler.m > sampler.n:
            raise ValueError(f"cannot draw {sampler.m} distinct clients out of {sampler.n}")
        return np.sort(rng.choice(sampler.n, size=sampler.m, replace=False))
    alloc = sampler.allocation
    u = rng.integers(0, alloc.M, size=alloc.m)
    return _inverse_cdf(alloc.r_prime, u[None, :])[0]


# ---------------------------------------------------------------------------
# Closed forms

def expected_weight(alloc: AllocationMatrix, i: int) -> float:
    return float(alloc.r_prime[:, i].sum() / (alloc.m * alloc.M))


def _variance_numerators(alloc: AllocationMatrix):
    """Integer numerators of Var_Cl and Var_MD over the common denominator m^2 M^2."""
    r = alloc.r_prime.astype(object)
    M, m = alloc.M, alloc.m
    var_cl = [sum(int(v) * (M - int(v)) for v in r[:, i]) for i in range(alloc.n)]
    var_md = [m * int(s) * (M - int(s)) for s in alloc.sizes]
    return var_cl, var_md


def weight_variance(alloc: AllocationMatrix, i: int) -> float:
    """(1/m^2) sum_k r_ki (1 - r_ki), computed from integers."""
    M, m = alloc.M, alloc.m
    num = sum(int(v) * (M - int(v)) for v in alloc.r_prime[:, i])
    return num / (m * m * M * M)


def md_weight_variance(p: float, m: int) -> float:
    return m * p * (1 - p) / (m * m)


def prob_sampled(alloc: AllocationMatrix, i: int) -> float:
    """1 - prod_k (1 - r_ki)."""
    q = 1.0
    for v in alloc.r_prime[:, i]:
        q *= 1.0 - int(v) / alloc.M
    return 1.0 - q


def md_prob_sampled(p: float, m: int) -> float:
    q = 1.0
    for _ in range(m):
        q *= 1.0 - p
    return 1.0 - q


@dataclass(frozen=True)
class DominanceRecord:
    client: int
    var_md: float
    var_cl: float
    p_md: float
    p_cl: float
    var_equal: bool
    prob_equal: bool

    @property
    def holds(self) -> bool:
        return self.var_cl <= self.var_md + 1e-12 and self.p_cl >= self.p_md - 1e-12


def variance_dominance_report(alloc: AllocationMatrix) -> list[DominanceRecord]:
    """Per-client MD vs clustered weight variance and inclusion probability.

    Equality flags are decided in exact integer arithmetic; they hold exactly
    when every entry of the client's column equals n_i.
    """
    M, m = alloc.M, alloc.m
    denom = m * m * M * M
    var_cl, var_md = _variance_numerators(alloc)
    out = []
    for i in range(alloc.n):
        n_i = int(alloc.sizes[i])
        col = [int(v) for v in alloc.r_prime[:, i]]
        p_cl_num = 1
        for v in col:
            p_cl_num *= M - v
        p_md_num = (M - n_i) ** m
        q_cl = 1.0
        q_md = 1.0
        for v in col:
            q_cl *= 1.0 - v / M
            q_md *= 1.0 - n_i / M
        out.append(DominanceRecord(
            client=i,
            var_md=var_md[i] / denom,
            var_cl=var_cl[i] / denom,
            p_md=1.0 - q_md,
            p_cl=1.0 - q_cl,
            var_equal=var_cl[i] == var_md[i],
            prob_equal=p_cl_num == p_md_num,
        ))
    return out
