import numpy as np
import pytest

from fedgs.datagen import (
    ClientData,
    FederatedDataset,
    generate_pool,
    generate_synthetic,
    load_dataset,
    partition_dirichlet,
    partition_two_label,
    save_dataset,
    shard_compatible_subset,
    split_train_validation,
    synthetic_covariance_diag,
)
from fedgs.domain import InvalidInputError, PartitionInfeasibleError


def test_synthetic_shape():
    ds = generate_synthetic(0.5, 0.5, 30, data_seed=1)
    assert ds.num_clients == 30
    assert ds.num_classes == 10
    for c in ds.clients:
        assert c.x.shape == (len(c), 60)
        assert len(c) >= 2
        assert c.y.min() >= 0 and c.y.max() < 10
    assert ds.features.shape == (30, 610)
    assert len(ds.test) == sum(int(np.ceil(0.2 * len(c))) for c in ds.clients)


def test_covariance_diagonal():
    d = synthetic_covariance_diag()
    assert d[0] == 1.0
    assert d[59] == pytest.approx(60 ** -1.2)


def test_synthetic_zero_heterogeneity_centres_models_at_zero():
    # with alpha = 0 every local model mean is exactly 0, so W and b entries are N(0, 1)
    ds = generate_synthetic(0.0, 0.0, 2, data_seed=11)
    for f in ds.features:
        assert abs(f.mean()) < 4 / np.sqrt(f.size)


def test_synthetic_is_bit_identical():
    a = generate_synthetic(0.5, 0.5, 5, data_seed=42)
    b = generate_synthetic(0.5, 0.5, 5, data_seed=42)
    for ca, cb in zip(a.clients, b.clients):
        assert ca.x.tobytes() == cb.x.tobytes()
        assert ca.y.tobytes() == cb.y.tobytes()
    assert a.test.x.tobytes() == b.test.x.tobytes()


def test_synthetic_labels_follow_local_model():
    ds = generate_synthetic(0.5, 0.5, 3, data_seed=2)
    for c, f in zip(ds.clients, ds.features):
        W, b = f[:600].reshape(10, 60), f[600:]
        np.testing.assert_array_equal(np.argmax(c.x @ W.T + b, axis=1), c.y)


def test_synthetic_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        generate_synthetic(-1, 0.5, 3, 0)
    with pytest.raises(InvalidInputError):
        generate_synthetic(0.5, 0.5, 1, 0)


def _tv(p, q):
    return 0.5 * np.abs(p - q).sum()


def _label_dist(c, C):
    return np.bincount(c.y, minlength=C) / len(c)


def test_dirichlet_large_concentration_recovers_global_mix():
    pool = generate_pool(100_000, data_seed=5)
    p_star = np.bincount(pool.y, minlength=10) / len(pool)
    ds = partition_dirichlet(pool.x, pool.y, 10, 1e6, data_seed=5, num_classes=10)
    for c in ds.clients:
        assert _tv(_label_dist(c, 10), p_star) < 0.05


def test_dirichlet_single_client_takes_everything():
    pool = generate_pool(500, data_seed=1)
    ds = partition_dirichlet(pool.x, pool.y, 1, 0.5, data_seed=1, num_classes=10)
    assert len(ds.clients[0]) == 500
    np.testing.assert_array_equal(np.bincount(ds.clients[0].y, minlength=10), np.bincount(pool.y, minlength=10))


def test_dirichlet_small_concentration_is_near_one_hot():
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 200)
    x = rng.normal(size=(400, 3))
    hits = 0
    for seed in range(20):
        try:
            ds = partition_dirichlet(x, y, 2, 0.01, data_seed=seed, sizes=[100, 100])
        except PartitionInfeasibleError:
            continue
        hits += all(_label_dist(c, 2).max() > 0.95 for c in ds.clients)
    assert hits >= 15


def test_dirichlet_monte_carlo_mean_matches_global_mix():
    # client label distributions averaged over seeds and clients approach the global mix
    rng = np.random.default_rng(1)
    y = rng.integers(0, 10, 5000)
    x = rng.normal(size=(5000, 2))
    p_star = np.bincount(y, minlength=10) / 5000
    total, runs = np.zeros((20, 10)), 0
    for seed in range(200):
        try:
            ds = partition_dirichlet(x, y, 20, 1.75, data_seed=seed)
        except PartitionInfeasibleError:
            continue
        total += [_label_dist(c, 10) for c in ds.clients]
        runs += 1
    assert runs >= 190
    assert _tv(total.mean(axis=0) / runs, p_star) < 0.05


def test_dirichlet_conserves_examples_and_respects_supply():
    pool = generate_pool(3000, data_seed=2)
    ds = partition_dirichlet(pool.x, pool.y, 15, 0.5, data_seed=2, num_classes=10)
    assert ds.sizes().sum() <= 3000
    got = sum(np.bincount(c.y, minlength=10) for c in ds.clients)
    assert (got <= np.bincount(pool.y, minlength=10)).all()
    # no example handed out twice
    rows = np.concatenate([c.x for c in ds.clients])
    assert len(np.unique(rows, axis=0)) == len(rows)


def test_dirichlet_retry_exhaustion():
    y = np.repeat([0, 1], 10)
    x = np.zeros((20, 1))
    # one client wants 15 examples of a near one-hot mix from 10 + 10
    with pytest.raises(PartitionInfeasibleError):
        partition_dirichlet(x, y, 2, 1e-3, data_seed=0, sizes=[15, 2], max_retries=50, max_fill=1.0)


def test_dirichlet_rejects_bad_alpha():
    with pytest.raises(InvalidInputError):
        partition_dirichlet(np.zeros((4, 1)), np.array([0, 1, 0, 1]), 2, 0.0, 0)


def _sorted_pool():
    y = np.repeat(np.arange(10), 10)
    x = np.arange(100, dtype=float).reshape(100, 1)
    return x, y


def test_two_label_counts():
    x, y = _sorted_pool()
    ds = partition_two_label(x, y, 5, data_seed=0)
    for c in ds.clients:
        assert len(c) == 20
        assert len(np.unique(c.y)) <= 2
    assert sorted(np.concatenate([c.x[:, 0] for c in ds.clients]).tolist()) == list(range(100))


def test_two_label_one_client_per_label_pair():
    x, y = _sorted_pool()
    ds = partition_two_label(x, y, 5, data_seed=3)
    for c in ds.clients:
        counts = np.bincount(c.y, minlength=10)
        assert sorted(counts[counts > 0].tolist()) in ([10, 10], [20])


def test_two_label_rejects_leftover_data():
    x, y = _sorted_pool()
    with pytest.raises(InvalidInputError):
        partition_two_label(x, y, 1, data_seed=0)
    with pytest.raises(InvalidInputError):
        partition_two_label(x[:99], y[:99], 5, data_seed=0)


@pytest.mark.parametrize("N", [1, 3, 7, 30])
def test_shard_compatible_subset_is_accepted(N):
    pool = generate_pool(2000, data_seed=4)
    keep = shard_compatible_subset(pool.y, N, num_classes=10)
    ds = partition_two_label(pool.x[keep], pool.y[keep], N, data_seed=4, num_classes=10)
    assert len({len(c) for c in ds.clients}) == 1
    assert all(len(np.unique(c.y)) <= 2 for c in ds.clients)


def _dataset_of_sizes(sizes):
    return FederatedDataset(
        [ClientData(np.arange(n, dtype=float).reshape(n, 1), np.zeros(n, dtype=np.int64)) for n in sizes],
        ClientData.empty(1),
        1,
    )


@pytest.mark.parametrize("n, fraction, expected", [(10, 0.8, (8, 2)), (2, 0.9, (1, 1)), (1, 0.5, (1, 0))])
def test_split_sizes(n, fraction, expected):
    train, val = split_train_validation(_dataset_of_sizes([n]), fraction, data_seed=0)
    assert (len(train.clients[0]), len(val.clients[0])) == expected
    assert train.flagged == ((0,) if n == 1 else ())


def test_split_is_deterministic_and_disjoint():
    ds = _dataset_of_sizes([10, 7, 3])
    a_train, a_val = split_train_validation(ds, 0.7, data_seed=9)
    b_train, _ = split_train_validation(ds, 0.7, data_seed=9)
    for ta, tb, va, orig in zip(a_train.clients, b_train.clients, a_val.clients, ds.clients):
        np.testing.assert_array_equal(ta.x, tb.x)
        assert sorted(np.concatenate([ta.x[:, 0], va.x[:, 0]]).tolist()) == orig.x[:, 0].tolist()


def test_split_rejects_bad_fraction():
    with pytest.raises(InvalidInputError):
        split_train_validation(_dataset_of_sizes([4]), 1.0, 0)


def test_dump_round_trip(tmp_path):
    ds = generate_synthetic(0.5, 0.5, 4, data_seed=8)
    path = tmp_path / "ds.bin"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.num_clients == 4 and back.num_classes == 10
    for a, b in zip(ds.clients + [ds.test], back.clients + [back.test]):
        assert a.x.tobytes() == b.x.tobytes()
        assert a.y.tobytes() == b.y.tobytes()
    assert ds.features.tobytes() == back.features.tobytes()


def test_dump_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"\0" * 64)
    with pytest.raises(InvalidInputError):
        load_dataset(p)
