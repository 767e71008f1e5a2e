"""FedAvg simulation: local SGD (with optional proximal term), aggregation, training loop, diagnostics."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import sampling
from .alloc_similarity import GradientCache, allocate_by_similarity
from .alloc_size import allocate_by_size
from .data import FederatedDataset, Samples
from .errors import DimensionMismatch
from .models import MLP1, Architecture, SoftmaxRegression, accuracy, forward_loss_grad, mean_loss

POLICIES = ("uniform", "md", "size", "similarity")
ROLLING_WINDOW = 50


@dataclass(frozen=True)
class LocalUpdateConfig:
    N: int = 50
    lr: float = 0.01
    batch: int = 50
    mu: float = 0.0

    def __post_init__(self):
        if self.N < 1 or self.batch < 1:
            raise ValueError("N and batch must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


def local_update(arch: Architecture, theta_global, data: Samples, cfg: LocalUpdateConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """Run N SGD steps from the global model on batches drawn with replacement.

    A batch at least as large as the shard means full-batch steps.
    With ``mu > 0`` each step also pulls toward the global model through the
    gradient of (mu / 2) * ||theta - theta_global||^2.
    """
    theta_global = np.asarray(theta_global, dtype=np.float64)
    theta = theta_global.copy()
    n = len(data)
    full = cfg.batch >= n
    for _ in range(cfg.N):
        if full:
            _, g = forward_loss_grad(arch, theta, data.x, data.y)
        else:
            idx = rng.integers(0, n, size=cfg.batch)
            _, g = forward_loss_grad(arch, theta, data.x[idx], data.y[idx])
        if cfg.mu:
            g = g + cfg.mu * (theta - theta_global)
        theta -= cfg.lr * g
    return theta


def aggregate(sampler, sampled, locals_, theta_global, weights) -> np.ndarray:
    """New global model from the sampled clients' local models.

    MD/clustered: plain average over the m draws, duplicates counted each
    time. Uniform: clients outside the sample contribute the current global
    model with their data weight.
    """
    theta_global = np.asarray(theta_global, dtype=np.float64)
    if len(sampled) != len(locals_):
        raise DimensionMismatch(f"{len(sampled)} sampled entries but {len(locals_)} local models")
    for theta in locals_:
        if np.shape(theta) != theta_global.shape:
            raise DimensionMismatch(f"local model {np.shape(theta)} vs global {theta_global.shape}")
    if isinstance(sampler, sampling.UniformSampler):
        by_client = {int(i): np.asarray(t) for i, t in zip(sampled, locals_)}
        out = np.zeros_like(theta_global)
        for i, p in enumerate(weights):
            out += p * by_client.get(i, theta_global)
        return out
    out = np.zeros_like(theta_global)
    for theta in locals_:
        out += theta
    return out / len(locals_)


@dataclass
class RoundMetrics:
    t: int
    train_loss: float
    test_accuracy: float | None
    sampled: list[int]
    distinct_count: int
    per_class_presence: list[bool]

    @property
    def classes_present(self) -> int:
        return sum(self.per_class_presence)

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


@dataclass
class TrainingResult:
    metrics: list[RoundMetrics]
    params: np.ndarray
    arch: Architecture
    allocations: list = field(default_factory=list)


def default_arch(dataset: FederatedDataset, model: str = "mlp", hidden: int = 50) -> Architecture:
    if model == "mlp":
        return MLP1(dataset.dim, hidden, dataset.num_classes)
    if model == "softmax":
        return SoftmaxRegression(dataset.dim, dataset.num_classes)
    raise ValueError(f"unknown model {model!r}")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def build_sampler(policy: str, sizes, m: int, cache: GradientCache | None = None,
                  measure: str = "arccos"):
    if policy == "uniform":
        return sampling.uniform(sizes, m)
    if policy == "md":
        return sampling.md(sizes, m)
    if policy == "size":
        return sampling.clustered(allocate_by_size(sizes, m))
    if policy == "similarity":
        return sampling.clustered(allocate_by_similarity(sizes, cache, m, measure))
    raise ValueError(f"unknown sampler policy {policy!r}; expected one of {POLICIES}")


def run_training(
    dataset: FederatedDataset,
    policy: str,
    cfg: LocalUpdateConfig,
    rounds: int,
    seed: int,
    m: int = 10,
    measure: str = "arccos",
    arch: Architecture | None = None,
    threads: int = 1,
    keep_allocations: bool = False,
) -> TrainingResult:
    """Simulate ``rounds`` FedAvg iterations under the given client-sampling policy.

    Random streams are keyed by (seed, purpose, round[, client]) so results do
    not depend on thread count. A client drawn several times in a round
    trains once; its local model is counted once per draw in the aggregate.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown sampler policy {policy!r}; expected one of {POLICIES}")
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    arch = arch or default_arch(dataset)
    sizes = dataset.sizes
    weights = dataset.weights
    hist = dataset.class_histograms() > 0
    train_all = dataset.pooled_train()
    test_all = dataset.pooled_test()

    theta = arch.init(_stream(seed, 0))
    cache = GradientCache(dataset.n, arch.num_params) if policy == "similarity" else None
    sampler = None if policy == "similarity" else build_sampler(policy, sizes, m)

    metrics, allocations = [], []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for t in range(1, rounds + 1):
            if policy == "similarity":
                sampler = build_sampler(policy, sizes, m, cache, measure)
            if keep_allocations and isinstance(sampler, sampling.ClusteredSampler):
                allocations.append(sampler.allocation)
            sampled = sampling.draw(sampler, _stream(seed, 1, t))
            unique = sorted(set(int(i) for i in sampled))

            def work(i, theta=theta, t=t):
                return local_update(arch, theta, dataset.clients[i].train, cfg, _stream(seed, 2, t, i))

            trained = list(pool.map(work, unique)) if pool else [work(i) for i in unique]
            by_client = dict(zip(unique, trained))
            locals_ = [by_client[int(i)] for i in sampled]

            if cache is not None:
                cache.update(unique, trained, theta)
            theta = aggregate(sampler, sampled, locals_, theta, weights)

            test_acc = accuracy(arch, theta, test_all.x, test_all.y)
            metrics.append(RoundMetrics(
                t=t,
                train_loss=mean_loss(arch, theta, train_all.x, train_all.y),
                test_accuracy=None if math.isnan(test_acc) else test_acc,
                sampled=[int(i) for i in sampled],
                distinct_count=len(unique),
                per_class_presence=hist[unique].any(axis=0).tolist(),
            ))
    finally:
        if pool:
            pool.shutdown()
    return TrainingResult(metrics, theta, arch, allocations)


def global_loss(arch: Architecture, theta, dataset: FederatedDataset) -> float:
    """sum_i p_i L_i(theta) with p_i = n_i / M."""
    return float(sum(p * mean_loss(arch, theta, c.train.x, c.train.y)
                     for p, c in zip(dataset.weights, dataset.clients)))


def drift_bounds(grads, sizes, alloc: sampling.AllocationMatrix) -> tuple[float, float]:
    """Sampling-induced gradient dispersion under MD (B_MD) and under ``alloc`` (B_Cl).

    B_Cl <= B_MD for every allocation satisfying the unbiasedness conditions,
    with equality when all rows equal the client sizes.
    """
    g = np.asarray(grads, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    if g.ndim != 2 or len(g) != len(sizes) or alloc.n != len(sizes):
        raise DimensionMismatch(f"gradients {g.shape}, {len(sizes)} sizes, allocation n={alloc.n}")
    M = int(sizes.sum())
    m = alloc.m
    spread = float((sizes / M) @ np.einsum("ij,ij->i", g, g)) / m

    def dispersion(rows, counts):
        means = (rows / M) @ g
        return spread - float((counts / m) @ np.einsum("ij,ij->i", means, means)) / m

    # MD is the allocation whose m rows all equal the sizes: same arithmetic path
    b_md = dispersion(sizes[None, :], np.array([m]))
    b_cl = dispersion(*np.unique(alloc.r_prime, axis=0, return_counts=True))
    return b_md, b_cl


# ---------------------------------------------------------------------------
# Metrics files

def write_metrics_jsonl(path, header: dict, metrics: list[RoundMetrics]) -> None:
    """First line is a header record with the run configuration, then one line per round."""
    with open(path, "w") as f:
        f.write(json.dumps({"header": header}, sort_keys=True, separators=(",", ":")) + "\n")
        for rm in metrics:
            f.write(rm.to_json() + "\n")


def read_metrics_jsonl(path) -> tuple[dict, list[RoundMetrics]]:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])["header"]
    return header, [RoundMetrics(**json.loads(line)) for line in lines[1:]]


def rolling_mean(values, window: int = ROLLING_WINDOW) -> np.ndarray:
    """Trailing mean over up to ``window`` most recent values."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def write_metrics_csv(path, metrics: list[RoundMetrics], window: int = ROLLING_WINDOW) -> None:
    roll = rolling_mean([rm.train_loss for rm in metrics], window)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "train_loss", f"train_loss_rolling{window}", "test_accuracy",
                    "distinct_count", "classes_present"])
        for rm, r in zip(metrics, roll):
            w.writerow([rm.t, repr(rm.train_loss), repr(float(r)),
                        "" if rm.test_accuracy is None else repr(rm.test_accuracy),
                        rm.distinct_count, rm.classes_present])
