"""Synthetic federated data and label-based partitioners."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .domain import (
    STREAM_PARTITION,
    STREAM_SPLIT,
    STREAM_SYNTHETIC,
    STREAM_TEST,
    ClientProfile,
    InvalidInputError,
    PartitionInfeasibleError,
    derive_rng,
)

SYNTHETIC_DIM = 60
SYNTHETIC_CLASSES = 10


@dataclass
class ClientData:
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @classmethod
    def empty(cls, dim: int) -> "ClientData":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=np.int64))


@dataclass
class FederatedDataset:
    clients: list[ClientData]
    test: ClientData
    num_classes: int
    # per-client vectors describing the local distribution (oracle graph input)
    features: np.ndarray | None = None
    # clients whose validation part came out empty
    flagged: tuple[int, ...] = field(default=())

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    @property
    def dim(self) -> int:
        return int(self.test.x.shape[1]) if self.test.x.ndim == 2 else int(self.clients[0].x.shape[1])

    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.clients], dtype=np.int64)

    def profiles(self) -> list[ClientProfile]:
        out = []
        for k, c in enumerate(self.clients):
            feats = None if self.features is None else self.features[k]
            out.append(ClientProfile(id=k, n_k=max(len(c), 1), labels=frozenset(np.unique(c.y).tolist()), features=feats))
        return out

    def pooled(self) -> ClientData:
        return ClientData(np.concatenate([c.x for c in self.clients]), np.concatenate([c.y for c in self.clients]))


def synthetic_covariance_diag(dim: int = SYNTHETIC_DIM) -> np.ndarray:
    return np.arange(1, dim + 1, dtype=np.float64) ** -1.2


def _synthetic_size(rng: np.random.Generator) -> int:
    return max(2, math.ceil(rng.lognormal(4.0, 2.0)))


def generate_synthetic(
    alpha: float,
    beta: float,
    N: int,
    data_seed: int,
    test_fraction: float = 0.2,
    dim: int = SYNTHETIC_DIM,
    num_classes: int = SYNTHETIC_CLASSES,
) -> FederatedDataset:
    """Synthetic(alpha, beta): every client labels its inputs with its own softmax model.

    ``alpha`` and ``beta`` are used as standard deviations of the model-mean and
    input-mean draws. Extra examples (``test_fraction`` of each client's size,
    rounded up) are drawn from each local distribution and pooled into the
    global test set. Features are the flattened local models ``(W_k, b_k)``.
    """
    if alpha < 0 or beta < 0:
        raise InvalidInputError("alpha and beta must be non-negative")
    if N < 2:
        raise InvalidInputError("need at least 2 clients")
    sd = np.sqrt(synthetic_covariance_diag(dim))
    clients, tests, feats = [], [], []
    for k in range(N):
        rng = derive_rng(data_seed, STREAM_SYNTHETIC, k)
        n_k = _synthetic_size(rng)
        mu_k = rng.normal(0.0, alpha)
        W = rng.normal(mu_k, 1.0, size=(num_classes, dim))
        b = rng.normal(mu_k, 1.0, size=num_classes)
        B_k = rng.normal(0.0, beta)
        v_k = rng.normal(B_k, 1.0, size=dim)

        def draw(n: int, gen: np.random.Generator) -> ClientData:
            x = v_k + gen.standard_normal((n, dim)) * sd
            y = np.argmax(x @ W.T + b, axis=1).astype(np.int64)
            return ClientData(x, y)

        clients.append(draw(n_k, rng))
        n_test = math.ceil(test_fraction * n_k) if test_fraction > 0 else 0
        tests.append(draw(n_test, derive_rng(data_seed, STREAM_TEST, k)))
        feats.append(np.concatenate([W.ravel(), b]))
    test = ClientData(np.concatenate([t.x for t in tests]), np.concatenate([t.y for t in tests]))
    return FederatedDataset(clients, test, num_classes, features=np.array(feats))


def generate_pool(n: int, data_seed: int, dim: int = SYNTHETIC_DIM, num_classes: int = SYNTHETIC_CLASSES) -> ClientData:
    """One labelled example pool from a single random softmax model (input for the partitioners)."""
    rng = derive_rng(data_seed, STREAM_SYNTHETIC, 2**31)
    W = rng.normal(0.0, 1.0, size=(num_classes, dim))
    b = rng.normal(0.0, 1.0, size=num_classes)
    x = rng.standard_normal((n, dim)) * np.sqrt(synthetic_covariance_diag(dim))
    y = np.argmax(x @ W.T + b, axis=1).astype(np.int64)
    return ClientData(x, y)


def _round_to_total(weights: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder rounding of ``weights * total`` to integers summing to ``total``."""
    raw = weights * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


def _label_counts(y: np.ndarray, num_classes: int) -> np.ndarray:
    return np.bincount(y, minlength=num_classes).astype(np.int64)


def partition_dirichlet(
    x: np.ndarray,
    y: np.ndarray,
    N: int,
    dir_alpha: float,
    data_seed: int,
    sizes=None,
    num_classes: int | None = None,
    max_retries: int = 10000,
    test: ClientData | None = None,
    max_fill: float = 0.95,
) -> FederatedDataset:
    """Unequal, label-skewed partition.

    Sizes default to ``lognormal(log(n/N) - 0.5, 1)`` draws; if they ask for
    more than ``max_fill * n`` examples they are scaled down to that total so
    the last clients still have room to pick a label mix. Each client's label
    mix is drawn from ``Dirichlet(dir_alpha * p*)`` and redrawn until its
    per-label counts fit the remaining supply, largest clients first. Data left
    over after every client is served stays unassigned.
    """
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    if dir_alpha <= 0:
        raise InvalidInputError("dirichlet alpha must be > 0")
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    C = int(num_classes if num_classes is not None else y.max() + 1)
    supply = _label_counts(y, C)
    p_star = supply / n
    rng = derive_rng(data_seed, STREAM_PARTITION)

    by_label = [rng.permutation(np.flatnonzero(y == c)) for c in range(C)]
    if N == 1:
        alloc = [supply.copy()]
    else:
        if sizes is None:
            sizes = np.maximum(1, np.round(rng.lognormal(math.log(n / N) - 0.5, 1.0, size=N))).astype(np.int64)
        sizes = np.asarray(sizes, dtype=np.int64)
        if sizes.shape != (N,) or (sizes < 1).any():
            raise InvalidInputError("sizes must be N positive integers")
        cap = int(max_fill * n)
        if sizes.sum() > cap:
            sizes = np.maximum(1, _round_to_total(sizes / sizes.sum(), cap))
        remaining = supply.copy()
        alloc = [None] * N
        conc = dir_alpha * p_star
        active = conc > 0
        # largest clients first: they have the fewest feasible label mixes
        for k in sorted(range(N), key=lambda i: (-sizes[i], i)):
            crng = derive_rng(data_seed, STREAM_PARTITION, k + 1)
            for _ in range(max_retries):
                p = np.zeros(C)
                p[active] = crng.dirichlet(conc[active])
                counts = _round_to_total(p, int(sizes[k]))
                if (counts <= remaining).all():
                    break
            else:
                raise PartitionInfeasibleError(f"client {k}: no label mix fits the remaining supply after {max_retries} draws")
            remaining -= counts
            alloc[k] = counts

    cursor = np.zeros(C, dtype=np.int64)
    clients = []
    for counts in alloc:
        idx = []
        for c in range(C):
            idx.append(by_label[c][cursor[c]:cursor[c] + counts[c]])
            cursor[c] += counts[c]
        idx = np.sort(np.concatenate(idx))
        clients.append(ClientData(np.asarray(x)[idx], y[idx]))
    if test is None:
        test = ClientData.empty(np.asarray(x).shape[1])
    feats = np.array([_label_counts(c.y, C) for c in clients], dtype=np.float64)
    return FederatedDataset(clients, test, C, features=feats)


def partition_two_label(
    x: np.ndarray,
    y: np.ndarray,
    N: int,
    data_seed: int,
    num_classes: int | None = None,
    test: ClientData | None = None,
) -> FederatedDataset:
    """Balanced pathological split: sort by label, cut ``2N`` single-label shards, two per client."""
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    if n % (2 * N):
        raise InvalidInputError(f"{n} examples cannot be cut into {2 * N} equal shards")
    shard = n // (2 * N)
    C = int(num_classes if num_classes is not None else y.max() + 1)
    counts = _label_counts(y, C)
    if (counts % shard).any():
        raise InvalidInputError(f"shard size {shard} does not divide every label count; shards would mix labels")
    rng = derive_rng(data_seed, STREAM_PARTITION)
    # stable sort on label after a shuffle: random order within each label
    perm = rng.permutation(n)
    order = perm[np.argsort(y[perm], kind="stable")]
    shards = order.reshape(2 * N, shard)
    assign = rng.permutation(2 * N)
    clients = []
    for k in range(N):
        idx = np.sort(np.concatenate([shards[assign[2 * k]], shards[assign[2 * k + 1]]]))
        clients.append(ClientData(np.asarray(x)[idx], y[idx]))
    if test is None:
        test = ClientData.empty(np.asarray(x).shape[1])
    feats = np.array([_label_counts(c.y, C) for c in clients], dtype=np.float64)
    return FederatedDataset(clients, test, C, features=feats)


def shard_compatible_subset(y: np.ndarray, N: int, num_classes: int | None = None) -> np.ndarray:
    """Indices of the largest label-balanced subset ``partition_two_label`` accepts.

    ``2N`` shards are spread over labels in proportion to their counts (largest
    remainder), and each label keeps a multiple of the common shard size.
    The first examples of each label are kept, so shuffle beforehand.
    """
    y = np.asarray(y, dtype=np.int64)
    C = int(num_classes if num_classes is not None else y.max() + 1)
    counts = _label_counts(y, C)
    quota = 2 * N * counts / counts.sum()
    per_label = np.floor(quota).astype(np.int64)
    short = 2 * N - int(per_label.sum())
    per_label[np.lexsort((np.arange(C), -(quota - per_label)))[:short]] += 1
    used = per_label > 0
    shard = int((counts[used] // per_label[used]).min())
    if shard < 1:
        raise InvalidInputError(f"too few examples for {2 * N} single-label shards")
    keep = [np.flatnonzero(y == c)[: shard * per_label[c]] for c in range(C)]
    return np.sort(np.concatenate(keep))


def split_train_validation(dataset: FederatedDataset, fraction: float, data_seed: int) -> tuple[FederatedDataset, FederatedDataset]:
    """Split each client into train/validation; both parts nonempty whenever the client has 2+ examples.

    A single-example client keeps it in train; its id is listed in ``flagged``
    on both returned datasets.
    """
    if not 0 < fraction < 1:
        raise InvalidInputError("fraction must lie in (0, 1)")
    train, val, flagged = [], [], []
    for k, c in enumerate(dataset.clients):
        n = len(c)
        perm = derive_rng(data_seed, STREAM_SPLIT, k).permutation(n)
        if n < 2:
            n_train = n
            flagged.append(k)
        else:
            n_train = min(max(int(round(fraction * n)), 1), n - 1)
        tr, va = perm[:n_train], perm[n_train:]
        train.append(ClientData(c.x[tr], c.y[tr]))
        val.append(ClientData(c.x[va], c.y[va]))
    flagged = tuple(flagged)
    return (
        replace(dataset, clients=train, flagged=flagged),
        replace(dataset, clients=val, flagged=flagged),
    )


# -- binary dump --------------------------------------------------------------
# little-endian layout:
#   b"FGDS" | u32 version=1 | u32 N | u32 dim | u32 num_classes | u32 feature_dim (0 = none)
#   N client blocks, then one test block; block = u64 n | n*dim f64 x | n i64 y
#   N*feature_dim f64 features (if feature_dim > 0)

_MAGIC = b"FGDS"
_HEADER = struct.Struct("<4sIIIII")


def _write_block(fh, c: ClientData, dim: int) -> None:
    fh.write(struct.pack("<Q", len(c)))
    fh.write(np.ascontiguousarray(c.x.reshape(len(c), dim), dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(c.y, dtype="<i8").tobytes())


def _read_block(fh, dim: int) -> ClientData:
    (n,) = struct.unpack("<Q", fh.read(8))
    x = np.frombuffer(fh.read(8 * n * dim), dtype="<f8").reshape(n, dim).astype(np.float64)
    y = np.frombuffer(fh.read(8 * n), dtype="<i8").astype(np.int64)
    return ClientData(x, y)


def save_dataset(dataset: FederatedDataset, path) -> None:
    dim = dataset.dim
    fdim = 0 if dataset.features is None else int(dataset.features.shape[1])
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, dataset.num_clients, dim, dataset.num_classes, fdim))
        for c in dataset.clients:
            _write_block(fh, c, dim)
        _write_block(fh, dataset.test, dim)
        if fdim:
            fh.write(np.ascontiguousarray(dataset.features, dtype="<f8").tobytes())


def load_dataset(path) -> FederatedDataset:
    with open(Path(path), "rb") as fh:
        magic, version, N, dim, C, fdim = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC or version != 1:
            raise InvalidInputError(f"{path}: not a dataset dump")
        clients = [_read_block(fh, dim) for _ in range(N)]
        test = _read_block(fh, dim)
        feats = None
        if fdim:
            feats = np.frombuffer(fh.read(8 * N * fdim), dtype="<f8").reshape(N, fdim).astype(np.float64)
    return FederatedDataset(clients, test, C, features=feats)
