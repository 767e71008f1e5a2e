"""Monte-Carlo checks of sampler statistics against their closed forms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import sampling

CHUNK = 10_000
DEFAULT_TRIALS = 100_000
FAST_TRIALS = 10_000


@dataclass
class WeightStats:
    mean: np.ndarray
    var: np.ndarray
    inclusion: np.ndarray
    trials: int


def _occurrence_counts(draws: np.ndarray, n: int) -> np.ndarray:
    """(trials, n) occurrence counts from a (trials, m) matrix of indices."""
    trials = len(draws)
    flat = (np.arange(trials)[:, None] * n + draws).ravel()
    return np.bincount(flat, minlength=trials * n).reshape(trials, n)


def estimate_weight_stats(sampler, trials: int, seed: int) -> WeightStats:
    """Empirical mean/variance of omega_i(S) = (#i in S) / m, and inclusion frequency."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n, m = sampler.n, sampler.m
    s1 = np.zeros(n, dtype=np.int64)
    s2 = np.zeros(n, dtype=np.int64)
    hits = np.zeros(n, dtype=np.int64)
    done = 0
    while done < trials:
        b = min(CHUNK, trials - done)
        c = _occurrence_counts(sampling.draw_many(sampler, rng, b), n)
        s1 += c.sum(axis=0)
        s2 += (c * c).sum(axis=0)
        hits += (c > 0).sum(axis=0)
        done += b
    mean_c = s1 / trials
    var_c = s2 / trials - mean_c ** 2
    return WeightStats(mean_c / m, np.maximum(var_c, 0.0) / (m * m), hits / trials, trials)


def distinct_client_distribution(sampler, trials: int, seed: int) -> np.ndarray:
    """Counts of rounds by number of distinct clients; index j holds the count for j distinct."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    hist = np.zeros(sampler.m + 1, dtype=np.int64)
    done = 0
    while done < trials:
        b = min(CHUNK, trials - done)
        d = np.sort(sampling.draw_many(sampler, rng, b), axis=1)
        distinct = 1 + (np.diff(d, axis=1) != 0).sum(axis=1)
        hist += np.bincount(distinct, minlength=sampler.m + 1)
        done += b
    return hist


def all_distinct_probability(weights, m: int) -> float:
    """P(m iid draws from ``weights`` are all different) = m! e_m(weights)."""
    e = np.zeros(m + 1)
    e[0] = 1.0
    for p in weights:
        e[1:] = e[1:] + p * e[:-1]
    return float(math.factorial(m) * e[m])


@dataclass
class ClosedForms:
    mean: np.ndarray
    var: np.ndarray
    inclusion: np.ndarray
    # fourth central moment of omega_i, for the standard error of the sample variance
    mu4: np.ndarray


def _bernoulli_sum_moments(r: np.ndarray):
    """Variance and fourth central moment of column sums of independent Bernoulli(r[k, i])."""
    v = r * (1 - r)
    kappa2 = v.sum(axis=0)
    kappa4 = (v * (1 - 6 * v)).sum(axis=0)
    return kappa2, kappa4 + 3 * kappa2 ** 2


def closed_forms(sampler) -> ClosedForms:
    m = sampler.m
    if isinstance(sampler, sampling.UniformSampler):
        pi = np.full(sampler.n, m / sampler.n)
        var_c, mu4_c = _bernoulli_sum_moments(pi[None, :])
        return ClosedForms(pi / m, var_c / m**2, pi, mu4_c / m**4)
    alloc = sampler.allocation
    r = alloc.probabilities
    var_c, mu4_c = _bernoulli_sum_moments(r)
    mean = alloc.r_prime.sum(axis=0) / (m * alloc.M)
    inclusion = 1.0 - np.prod(1.0 - r, axis=0)
    return ClosedForms(mean, var_c / m**2, inclusion, mu4_c / m**4)


def _z(emp: np.ndarray, closed: np.ndarray, se: np.ndarray) -> np.ndarray:
    diff = emp - closed
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), 0.0)
    # zero standard error means a deterministic quantity: any deviation is a failure
    return np.where((se == 0) & (np.abs(diff) > 1e-12), np.inf, z)


def _triple(closed, emp, z) -> list:
    """(closed form, empirical, z-score); an infinite z is written as null."""
    return [float(closed), float(emp), float(z) if np.isfinite(z) else None]


def familywise_band(z: float, tests: int) -> float:
    """Per-test band giving ``tests`` independent checks the false-alarm rate of one ``z`` check."""
    alpha = 2 * norm.sf(z)
    per_test = 1 - (1 - alpha) ** (1 / tests)
    return float(norm.isf(per_test / 2))


def verify_report(sampler, trials: int = DEFAULT_TRIALS, seed: int = 0, z: float = 3.0,
                  familywise: bool = True) -> dict:
    """Compare empirical weight mean, variance and inclusion frequency to the closed forms.

    Every quantity carries an analytic standard error. With ``familywise``
    the band is widened so that the whole report (3 checks per client) has
    the false-alarm rate of a single ``z``-sigma check; otherwise each check
    uses ``z`` directly.
    """
    z_band = familywise_band(z, 3 * sampler.n) if familywise else z
    cf = closed_forms(sampler)
    est = estimate_weight_stats(sampler, trials, seed)
    R = trials
    z_mean = _z(est.mean, cf.mean, np.sqrt(cf.var / R))
    z_var = _z(est.var, cf.var, np.sqrt(np.maximum(cf.mu4 - cf.var ** 2, 0.0) / R))
    z_inc = _z(est.inclusion, cf.inclusion, np.sqrt(cf.inclusion * (1 - cf.inclusion) / R))
    clients = []
    for i in range(sampler.n):
        ok = bool(max(abs(z_mean[i]), abs(z_var[i]), abs(z_inc[i])) <= z_band)
        clients.append({
            "client": i,
            "mean": _triple(cf.mean[i], est.mean[i], z_mean[i]),
            "var": _triple(cf.var[i], est.var[i], z_var[i]),
            "inclusion": _triple(cf.inclusion[i], est.inclusion[i], z_inc[i]),
            "pass": ok,
        })
    hist = distinct_client_distribution(sampler, trials, seed + 1)
    return {
        "sampler": type(sampler).__name__,
        "n": sampler.n,
        "m": sampler.m,
        "trials": trials,
        "seed": seed,
        "z": z,
        "z_band": z_band,
        "beyond_z": int((np.maximum.reduce([abs(z_mean), abs(z_var), abs(z_inc)]) > z).sum()),
        "distinct_histogram": hist.tolist(),
        "clients": clients,
        "failures": sum(not c["pass"] for c in clients),
        "pass": all(c["pass"] for c in clients),
    }
