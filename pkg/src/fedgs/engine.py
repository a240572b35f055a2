"""The federated training loop: availability, selection, local SGD, aggregation, bookkeeping."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import graph as g3
from . import model as logreg
from .availability import AvailabilityModel, availability_trace
from .config import ExperimentConfig, TrainerConfig
from .datagen import (
    ClientData,
    FederatedDataset,
    generate_pool,
    generate_synthetic,
    partition_dirichlet,
    partition_two_label,
    shard_compatible_subset,
    split_train_validation,
)
from .domain import STREAM_LOCAL_SGD, DivergenceError, SamplerState, counts_variance, derive_rng
from .sampler import (
    SelectionProblem,
    SelectionResult,
    select_fedgs_exact,
    select_fedgs_heuristic,
    select_md,
    select_power_of_choice,
    select_uniform,
)
from .sspp import build_similarity_via_sspp

log = logging.getLogger(__name__)

# round index reserved for the pre-training pass that feeds model-based graphs
WARMUP_ROUND = 2**32 - 1


@dataclass
class RoundRecord:
    t: int
    active: list[int]
    selected: list[int]
    objective: float
    g: float
    var_v: float
    train_loss: float
    test_loss: float
    test_acc: float = float("nan")
    skipped: bool = False
    draws: list[int] = field(default_factory=list)
    elapsed: dict[str, float] = field(default_factory=dict, compare=False)


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    summary: dict
    counts: np.ndarray
    trace: list[list[int]]
    graph: g3.Graph3DG | None = None


# -- local training -------------------------------------------------------------

def local_sgd(
    theta_global: np.ndarray,
    data: ClientData,
    config: TrainerConfig,
    eta: float,
    train_seed: int,
    t: int,
    client_id: int = 0,
    num_classes: int = 10,
) -> np.ndarray:
    """``E`` mini-batch steps on the local cross-entropy, with optional proximal pull to ``theta_global``.

    Batches are drawn without replacement from a per-(seed, round, client)
    permutation, reshuffled when fewer than ``B`` unseen examples remain.
    """
    n = len(data)
    if n < 1:
        raise ValueError(f"client {client_id} has no training data")
    rng = derive_rng(train_seed, STREAM_LOCAL_SGD, t, client_id)
    B = min(config.B, n)
    perm = rng.permutation(n)
    pos = 0
    theta = theta_global.copy()
    for _ in range(config.E):
        if pos + B > n:
            perm = rng.permutation(n)
            pos = 0
        idx = perm[pos:pos + B]
        pos += B
        loss, grad = logreg.loss_and_grad(theta, data.x[idx], data.y[idx], num_classes)
        if config.prox_mu > 0:
            grad = grad + config.prox_mu * (theta - theta_global)
        if not np.isfinite(loss) or not np.isfinite(grad).all():
            raise DivergenceError(client_id, t)
        theta = theta - eta * grad
    if not np.isfinite(theta).all():
        raise DivergenceError(client_id, t, "non-finite parameters")
    return theta


def aggregate_fedgs(models) -> np.ndarray:
    """Data-size weighted mean of ``(theta, n_k)`` pairs, accumulated in the given (ascending id) order."""
    models = list(models)
    if not models:
        raise ValueError("nothing to aggregate")
    total = float(sum(n for _, n in models))
    out = np.zeros_like(np.asarray(models[0][0], dtype=np.float64))
    for theta, n in models:
        out += (n / total) * theta
    return out


def aggregate_uniform(models) -> np.ndarray:
    """Plain mean over the uploaded models; a client drawn twice counts twice."""
    models = list(models)
    if not models:
        raise ValueError("nothing to aggregate")
    out = np.zeros_like(np.asarray(models[0], dtype=np.float64))
    for theta in models:
        out += theta
    return out / len(models)


def evaluate(theta: np.ndarray, examples: ClientData, num_classes: int = 10) -> tuple[float, float]:
    return logreg.evaluate(theta, examples.x, examples.y, num_classes)


# -- setup ---------------------------------------------------------------------

def build_dataset(config: ExperimentConfig) -> tuple[FederatedDataset, FederatedDataset]:
    """Return (train, validation) client splits for the configured scheme."""
    d = config.dataset
    seed = config.seeds.data_seed
    N = config.num_clients
    if d.scheme == "synthetic":
        full = generate_synthetic(d.alpha, d.beta, N, seed, test_fraction=d.test_fraction)
    else:
        pool = generate_pool(d.pool_size, seed)
        n_test = int(round(d.test_fraction * d.pool_size))
        test = ClientData(pool.x[:n_test], pool.y[:n_test])
        x, y = pool.x[n_test:], pool.y[n_test:]
        if d.scheme == "dirichlet":
            full = partition_dirichlet(x, y, N, d.dir_alpha, seed, num_classes=10, max_retries=d.max_retries, test=test)
        else:
            keep = shard_compatible_subset(y, N, num_classes=10)
            full = partition_two_label(x[keep], y[keep], N, seed, num_classes=10, test=test)
    return split_train_validation(full, d.train_fraction, seed)


def build_client_graph(config: ExperimentConfig, train: FederatedDataset, val: FederatedDataset, theta0: np.ndarray) -> g3.Graph3DG:
    gc = config.graph
    method = gc.method
    profiles = train.profiles()
    if method == "oracle":
        V = g3.build_similarity_oracle(profiles)
    elif method == "sspp":
        V = build_similarity_via_sspp(profiles, config.seeds.data_seed)
    else:
        # every client is assumed reachable before round 0
        locals_ = [
            local_sgd(theta0, c, config.trainer, config.trainer.eta0, config.seeds.train_seed, WARMUP_ROUND, k, train.num_classes)
            for k, c in enumerate(train.clients)
        ]
        if method == "cosine":
            V = g3.build_similarity_cosine_updates(locals_, theta0)
        else:
            pooled = val.pooled()
            if len(pooled) < 2:
                pooled = train.pooled()
            spec = g3.NoiseSpec.from_examples(pooled.x[: gc.noise_pool], gc.noise_batch)
            V = g3.build_similarity_functional(locals_, spec, train.num_classes, config.seeds.train_seed)
    return g3.build_graph(V, gc.epsilon, gc.sigma2)


def select_clients(config: ExperimentConfig, active, state: SamplerState, H: np.ndarray, sizes, t: int, theta, train) -> SelectionResult:
    s = config.sampler
    M = config.M
    if s.name == "fedgs":
        problem = SelectionProblem.from_state(active, H, state, s.alpha, M, time_budget=s.time_budget, max_iters=s.max_iters)
        return select_fedgs_exact(problem) if s.solver == "exact" else select_fedgs_heuristic(problem)
    if s.name == "uniform":
        return select_uniform(active, M, config.seeds.train_seed, t)
    if s.name == "md":
        return select_md(active, sizes, M, config.seeds.train_seed, t)
    cap = s.poc_loss_cap
    losses = []
    for k in sorted(active):
        c = train.clients[k]
        sub = c if cap is None else ClientData(c.x[:cap], c.y[:cap])
        losses.append(evaluate(theta, sub, train.num_classes)[0])
    return select_power_of_choice(active, M, losses)


# -- main loop -----------------------------------------------------------------

def run_experiment(config: ExperimentConfig, data: tuple[FederatedDataset, FederatedDataset] | None = None) -> ExperimentResult:
    train, val = data if data is not None else build_dataset(config)
    N = train.num_clients
    C = train.num_classes
    sizes = train.sizes()
    profiles = train.profiles()
    seeds = config.seeds
    theta = logreg.init_params(train.dim, C)

    graph = build_client_graph(config, train, val, theta)
    H = graph.H

    av = config.availability
    avail = AvailabilityModel.build(av.mode, av.beta, profiles, seeds.availability_seed, period=av.period, lognormal_param=av.lognormal_param, num_y=C)
    trace = availability_trace(avail, config.rounds, seeds.availability_seed)

    pooled_train = train.pooled()
    state = SamplerState.zeros(N)
    records: list[RoundRecord] = []
    init_loss, init_acc = evaluate(theta, train.test, C)
    best = (init_loss, -1)
    aborted = None
    weighted = config.aggregation == "weighted"
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for t in range(config.rounds):
            active = trace[t]
            if not active:
                log.info("round %d: no client available, skipped", t)
                state.t += 1
                tr_loss, _ = evaluate(theta, pooled_train, C)
                te_loss, te_acc = evaluate(theta, train.test, C)
                records.append(RoundRecord(t, [], [], float("nan"), 0.0, counts_variance(state.v), tr_loss, te_loss, te_acc, skipped=True))
                continue
            t0 = time.perf_counter()
            res = select_clients(config, active, state, H, sizes, t, theta, train)
            t1 = time.perf_counter()
            eta = config.trainer.eta0 * config.trainer.decay**t

            def work(k, theta=theta, eta=eta, t=t):
                return local_sgd(theta, train.clients[k], config.trainer, eta, seeds.train_seed, t, k, C)

            ids = res.selected
            try:
                locals_ = list(pool.map(work, ids)) if pool else [work(k) for k in ids]
            except DivergenceError as exc:
                aborted = str(exc)
                log.error("aborting: %s", exc)
                break
            trained = dict(zip(ids, locals_))
            if weighted:
                theta = aggregate_fedgs((trained[k], int(sizes[k])) for k in ids)
            else:
                theta = aggregate_uniform(trained[k] for k in sorted(res.draws))
            state.record(ids)
            t2 = time.perf_counter()
            tr_loss, _ = evaluate(theta, pooled_train, C)
            te_loss, te_acc = evaluate(theta, train.test, C)
            if te_loss < best[0]:
                best = (te_loss, t)
            records.append(
                RoundRecord(
                    t,
                    list(active),
                    list(ids),
                    res.objective,
                    g3.avg_shortest_path_score(ids, H, N),
                    counts_variance(state.v),
                    tr_loss,
                    te_loss,
                    te_acc,
                    draws=list(res.draws),
                    elapsed={"select": t1 - t0, "train": t2 - t1, "eval": time.perf_counter() - t2},
                )
            )
    finally:
        if pool:
            pool.shutdown()

    summary = {
        "name": config.name,
        "rounds": config.rounds,
        "min_test_loss": best[0],
        "min_test_loss_round": best[1],
        "initial_test_loss": init_loss,
        "initial_test_acc": init_acc,
        "final_test_loss": records[-1].test_loss if records else init_loss,
        "final_var_v": counts_variance(state.v),
        "counts_spread": int(state.v.max() - state.v.min()),
        "total_sampled": int(state.total_sampled),
        "skipped_rounds": sum(r.skipped for r in records),
        "aborted": aborted,
        "seeds": seeds.to_seeds().as_dict(),
        "config": config.to_dict(),
    }
    return ExperimentResult(records, summary, state.v.copy(), trace, graph)
