"""Federated dataset construction: synthetic groups, MNIST IDX files, Dirichlet partitioning."""

from __future__ import annotations

import gzip
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, CountMismatch, PoolExhausted, TruncatedFile

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# 10, 30, 30, 20 and 10 clients holding 100, 250, 500, 750 and 1000 samples.
UNBALANCED_PROFILE = ((10, 100), (30, 250), (30, 500), (20, 750), (10, 1000))


@dataclass
class Samples:
    """A labeled sample set stored column-wise: ``x`` is (count, d_in), ``y`` is (count,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.ndim != 1 or len(self.x) != len(self.y):
            raise ValueError(f"inconsistent sample arrays: x{self.x.shape}, y{self.y.shape}")

    def __len__(self):
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Samples":
        return Samples(self.x[idx], self.y[idx])


@dataclass
class ClientShard:
    train: Samples
    test: Samples

    def __post_init__(self):
        if len(self.train) == 0:
            raise ValueError("a client needs at least one training sample")

    @property
    def n_train(self) -> int:
        return len(self.train)


@dataclass
class FederatedDataset:
    clients: list[ClientShard]
    num_classes: int
    # generator name and parameters; enough to rebuild the dataset bit-for-bit
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.clients)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([c.n_train for c in self.clients], dtype=np.int64)

    @property
    def total_train(self) -> int:
        return int(self.sizes.sum())

    @property
    def weights(self) -> np.ndarray:
        sizes = self.sizes
        return sizes / sizes.sum()

    @property
    def dim(self) -> int:
        return self.clients[0].train.dim

    def class_histograms(self) -> np.ndarray:
        """(n, C) per-client training label counts."""
        return np.stack(
            [np.bincount(c.train.y, minlength=self.num_classes) for c in self.clients]
        )

    def pooled_train(self) -> Samples:
        return Samples(
            np.concatenate([c.train.x for c in self.clients]),
            np.concatenate([c.train.y for c in self.clients]),
        )

    def pooled_test(self) -> Samples:
        return Samples(
            np.concatenate([c.test.x for c in self.clients]).reshape(-1, self.dim),
            np.concatenate([c.test.y for c in self.clients]),
        )


def test_count(n_train: int) -> int:
    return math.ceil(n_train / 5)


def _group_means(num_groups: int, d_in: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, 1.0, size=(num_groups, d_in))


def make_synthetic(
    num_latent: int,
    clients_per_latent: int,
    n_per_client: int,
    d_in: int,
    noise_sigma: float,
    seed: int,
) -> FederatedDataset:
    """Gaussian-cluster federation where every client holds a single latent group.

    Group ``g`` has a fixed mean drawn from the seed; its clients' samples are
    that mean plus isotropic noise and all carry label ``g``. Each client also
    gets ``ceil(n_per_client / 5)`` test samples from the same group.
    """
    for name, v in (("num_latent", num_latent), ("clients_per_latent", clients_per_latent),
                    ("n_per_client", n_per_client), ("d_in", d_in)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")

    root = np.random.SeedSequence(seed)
    mean_seq, *client_seqs = root.spawn(1 + num_latent * clients_per_latent)
    means = _group_means(num_latent, d_in, np.random.default_rng(mean_seq))
    n_test = test_count(n_per_client)

    clients = []
    for g in range(num_latent):
        for j in range(clients_per_latent):
            rng = np.random.default_rng(client_seqs[g * clients_per_latent + j])
            x = means[g] + noise_sigma * rng.standard_normal((n_per_client + n_test, d_in))
            y = np.full(n_per_client + n_test, g)
            clients.append(ClientShard(Samples(x[:n_per_client], y[:n_per_client]),
                                       Samples(x[n_per_client:], y[n_per_client:])))
    provenance = {
        "generator": "synthetic",
        "params": {"num_latent": num_latent, "clients_per_latent": clients_per_latent,
                   "n_per_client": n_per_client, "d_in": d_in, "noise_sigma": noise_sigma},
        "seed": seed,
    }
    return FederatedDataset(clients, num_latent, provenance)


def make_pool(num_classes: int, size: int, d_in: int, noise_sigma: float, seed: int) -> Samples:
    """Balanced Gaussian-mixture pool used as a stand-in source for Dirichlet partitioning."""
    rng = np.random.default_rng(seed)
    means = _group_means(num_classes, d_in, rng)
    y = np.arange(size) % num_classes
    x = means[y] + noise_sigma * rng.standard_normal((size, d_in))
    return Samples(x, y)


# ---------------------------------------------------------------------------
# IDX files

def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic: int, header_ints: int) -> tuple[tuple[int, ...], bytes]:
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 4 * (1 + header_ints):
        raise TruncatedFile(f"{path}: header too short ({len(raw)} bytes)")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    dims = struct.unpack(f">{header_ints}I", raw[4:4 + 4 * header_ints])
    body = raw[4 + 4 * header_ints:]
    need = int(np.prod(dims))
    if len(body) < need:
        raise TruncatedFile(f"{path}: expected {need} data bytes, found {len(body)}")
    return dims, body[:need]


def load_idx(images_path, labels_path) -> Samples:
    """Read an MNIST-layout IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    (count, rows, cols), img = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    (n_labels,), lab = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if count != n_labels:
        raise CountMismatch(f"{count} images but {n_labels} labels")
    x = np.frombuffer(img, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    y = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    return Samples(x, y)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (count, rows, cols) and labels in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


# ---------------------------------------------------------------------------
# Dirichlet partitioning

def sample_dirichlet(alpha: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from a symmetric Dir(alpha) on k categories by normalizing Gamma variates.

    Shapes below 1 use G(a) = G(a + 1) * U**(1/a), evaluated in log space so
    that alpha as small as 1e-4 does not underflow to an all-zero vector.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if alpha < 1:
        log_g = np.log(rng.standard_gamma(alpha + 1.0, size=k)) + np.log(rng.random(k)) / alpha
    else:
        log_g = np.log(rng.standard_gamma(alpha, size=k))
    log_g -= log_g.max()
    g = np.exp(log_g)
    return g / g.sum()


def _fill_quota(quota: int, q: np.ndarray, pools: list[list[int]], cursor: np.ndarray,
                rng: np.random.Generator) -> list[int]:
    """Take ``quota`` indices from the class pools following proportions ``q``.

    Classes that run dry hand their unmet share to the classes still holding
    samples, proportionally to ``q`` (or to remaining supply if ``q`` has no
    mass left there).
    """
    taken: list[int] = []
    weights = q.copy()
    while quota > 0:
        remaining = np.array([len(p) for p in pools]) - cursor
        avail = remaining > 0
        if not avail.any():
            raise PoolExhausted("class pools ran dry")
        w = np.where(avail, weights, 0.0)
        if w.sum() <= 0:
            w = np.where(avail, remaining, 0).astype(float)
        counts = rng.multinomial(quota, w / w.sum())
        for c in np.flatnonzero(counts):
            k = min(int(counts[c]), int(remaining[c]))
            taken.extend(pools[c][cursor[c]:cursor[c] + k])
            cursor[c] += k
            quota -= k
    return taken


def partition_dirichlet(
    pool: Samples,
    client_sizes,
    alpha: float,
    seed: int,
    test_pool: Samples | None = None,
    num_classes: int | None = None,
) -> FederatedDataset:
    """Split ``pool`` into clients whose class mix is drawn from Dir(alpha).

    Each client draws its own class-proportion vector, then fills its quota
    without replacement from per-class pools. When ``test_pool`` is given,
    every client also receives ``ceil(size / 5)`` test samples drawn from it
    with the same proportions.
    """
    client_sizes = [int(s) for s in client_sizes]
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if any(s < 1 for s in client_sizes):
        raise ValueError("client sizes must be >= 1")
    if sum(client_sizes) > len(pool):
        raise PoolExhausted(f"demand {sum(client_sizes)} exceeds pool of {len(pool)}")
    C = num_classes or int(pool.y.max()) + 1
    if test_pool is not None:
        need = sum(test_count(s) for s in client_sizes)
        if need > len(test_pool):
            raise PoolExhausted(f"test demand {need} exceeds test pool of {len(test_pool)}")

    root = np.random.SeedSequence(seed)
    shuffle_seq, test_shuffle_seq, *client_seqs = root.spawn(2 + len(client_sizes))

    def class_pools(samples, seq):
        order = np.random.default_rng(seq).permutation(len(samples))
        labels = samples.y[order]
        return [order[labels == c].tolist() for c in range(C)]

    pools = class_pools(pool, shuffle_seq)
    cursor = np.zeros(C, dtype=np.int64)
    if test_pool is not None:
        tpools = class_pools(test_pool, test_shuffle_seq)
        tcursor = np.zeros(C, dtype=np.int64)

    clients = []
    for size, seq in zip(client_sizes, client_seqs):
        rng = np.random.default_rng(seq)
        q = sample_dirichlet(alpha, C, rng)
        train = pool.subset(np.array(_fill_quota(size, q, pools, cursor, rng), dtype=np.int64))
        if test_pool is not None:
            tidx = _fill_quota(test_count(size), q, tpools, tcursor, rng)
            test = test_pool.subset(np.array(tidx, dtype=np.int64))
        else:
            test = Samples(np.empty((0, pool.dim)), np.empty(0, dtype=np.int64))
        clients.append(ClientShard(train, test))
    return FederatedDataset(clients, C, {"generator": "dirichlet", "seed": seed,
                                         "params": {"alpha": alpha, "client_sizes": client_sizes}})


def sizes_profile(name: str) -> list[int]:
    """Named client-size profiles: ``paper-unbalanced`` or ``equal:<clients>:<size>``."""
    if name == "paper-unbalanced":
        return [size for count, size in UNBALANCED_PROFILE for _ in range(count)]
    if name.startswith("equal:"):
        _, count, size = name.split(":")
        return [int(size)] * int(count)
    raise ValueError(f"unknown sizes profile {name!r}")


# ---------------------------------------------------------------------------
# Manifest export / import

def manifest(dataset: FederatedDataset) -> dict:
    return {
        **dataset.provenance,
        "n": dataset.n,
        "num_classes": dataset.num_classes,
        "M": dataset.total_train,
        "client_sizes": dataset.sizes.tolist(),
        "test_sizes": [len(c.test) for c in dataset.clients],
        "class_histograms": dataset.class_histograms().tolist(),
    }


def save_manifest(dataset: FederatedDataset, path) -> None:
    Path(path).write_text(json.dumps(manifest(dataset), indent=1, sort_keys=True) + "\n")


def build_from_manifest(spec: dict) -> FederatedDataset:
    """Regenerate a dataset from a manifest and check it against the recorded histograms."""
    gen = spec.get("generator")
    params = spec.get("params", {})
    if gen == "synthetic":
        ds = make_synthetic(seed=spec["seed"], **params)
    elif gen == "dirichlet":
        src = spec["source"]
        if src["kind"] == "synthetic-pool":
            pool = make_pool(src["num_classes"], src["size"], src["d_in"], src["noise_sigma"], src["seed"])
            test_pool = make_pool(src["num_classes"], src["test_size"], src["d_in"],
                                  src["noise_sigma"], src["seed"] + 1) if src.get("test_size") else None
        elif src["kind"] == "idx":
            pool = load_idx(src["images"], src["labels"])
            test_pool = (load_idx(src["test_images"], src["test_labels"])
                         if src.get("test_images") else None)
        else:
            raise ValueError(f"unknown source kind {src['kind']!r}")
        ds = partition_dirichlet(pool, params["client_sizes"], params["alpha"], spec["seed"],
                                 test_pool=test_pool, num_classes=spec.get("num_classes"))
        ds.provenance["source"] = src
    else:
        raise ValueError(f"unknown generator {gen!r}")
    if "class_histograms" in spec and ds.class_histograms().tolist() != spec["class_histograms"]:
        raise ValueError("regenerated dataset does not match the manifest histograms")
    return ds


def load_manifest(path) -> FederatedDataset:
    return build_from_manifest(json.loads(Path(path).read_text()))
