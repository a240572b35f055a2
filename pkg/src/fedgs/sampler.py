"""Client selection: the graph-based quadratic selector and three baselines."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .domain import STREAM_SAMPLER, InvalidInputError, SamplerState, TooLargeError, derive_rng, z_vector

EXACT_LIMIT = 10**6


def _tol(x: float) -> float:
    return 1e-12 * (1.0 + abs(x))


@dataclass
class SelectionProblem:
    available: np.ndarray      # sorted global ids
    H: np.ndarray              # distances restricted to ``available``
    z: np.ndarray              # count coefficients restricted to ``available``
    alpha: float
    N: int
    M: int
    time_budget: float | None = None   # seconds of local search
    max_iters: int | None = None       # accepted swaps

    def __post_init__(self):
        self.available = np.asarray(self.available, dtype=np.int64)
        if self.available.size == 0:
            raise InvalidInputError("no available clients")
        if self.H.shape != (self.available.size,) * 2 or self.z.shape != (self.available.size,):
            raise InvalidInputError("H and z must match the available set")
        if self.alpha < 0 or self.M < 1:
            raise InvalidInputError("need alpha >= 0 and M >= 1")

    @property
    def m(self) -> int:
        return min(self.M, int(self.available.size))

    @classmethod
    def from_state(cls, available, H_full: np.ndarray, state: SamplerState | np.ndarray, alpha: float, M: int, **budget) -> "SelectionProblem":
        avail = np.array(sorted(int(k) for k in available), dtype=np.int64)
        N = H_full.shape[0]
        z = z_vector(state, M, N)
        return cls(avail, H_full[np.ix_(avail, avail)], z[avail], alpha, N, M, **budget)


@dataclass
class SelectionResult:
    selected: list[int]                 # distinct global ids, ascending
    objective: float
    solver: str
    iterations: int = 0
    elapsed: float = 0.0
    draws: list[int] = field(default_factory=list)   # aggregation multiset (baselines with replacement)
    greedy_objective: float | None = None

    def __post_init__(self):
        if not self.draws:
            self.draws = list(self.selected)


def fedgs_objective(s, H: np.ndarray, z: np.ndarray, alpha: float, N: int) -> float:
    """``(alpha/N) s'Hs - z's`` for a binary vector ``s``."""
    s = np.asarray(s, dtype=np.float64)
    return float(alpha / N * (s @ H @ s) - z @ s)


def _subset_objective(idx, H, z, c) -> float:
    idx = list(idx)
    return float(c * H[np.ix_(idx, idx)].sum() - z[idx].sum())


def select_fedgs_exact(problem: SelectionProblem) -> SelectionResult:
    """Enumerate every feasible subset; ties go to the lexicographically smallest id set."""
    start = time.perf_counter()
    n, m = problem.available.size, problem.m
    total = math.comb(n, m)
    if total > EXACT_LIMIT:
        raise TooLargeError(f"C({n}, {m}) = {total} subsets exceeds the enumeration limit {EXACT_LIMIT}")
    c = problem.alpha / problem.N
    H, z = problem.H, problem.z
    best_val, best = -np.inf, None
    combos = itertools.combinations(range(n), m)
    while True:
        chunk = np.array(list(itertools.islice(combos, 100_000)), dtype=np.int64).reshape(-1, m)
        if chunk.shape[0] == 0:
            break
        vals = c * H[chunk[:, :, None], chunk[:, None, :]].sum(axis=(1, 2)) - z[chunk].sum(axis=1)
        top = vals.max()
        if best is None or top > best_val + _tol(best_val):
            # first lexicographic index attaining the max (within round-off)
            i = int(np.argmax(vals >= top - _tol(top)))
            best_val, best = float(vals[i]), chunk[i]
    selected = problem.available[best].tolist()
    return SelectionResult(selected, best_val, "exact", total, time.perf_counter() - start)


def _greedy(H, z, c, m) -> list[int]:
    n = z.size
    chosen: list[int] = []
    in_set = np.zeros(n, dtype=bool)
    rowsum = np.zeros(n)
    for _ in range(m):
        gain = 2.0 * c * rowsum - z
        gain[in_set] = -np.inf
        top = gain.max()
        j = int(np.argmax(gain >= top - _tol(top)))
        chosen.append(j)
        in_set[j] = True
        rowsum += H[:, j]
    return sorted(chosen)


def select_fedgs_heuristic(problem: SelectionProblem) -> SelectionResult:
    """Greedy construction followed by first-improvement 1-swap local search.

    Scans (selected, unselected) pairs in id order and restarts after each
    accepted swap. Stops at a 1-swap local optimum or when the budget runs out.
    """
    start = time.perf_counter()
    H, z = problem.H, problem.z
    c = problem.alpha / problem.N
    n, m = z.size, problem.m
    S = _greedy(H, z, c, m)
    greedy_val = _subset_objective(S, H, z, c)
    current = greedy_val

    in_set = np.zeros(n, dtype=bool)
    in_set[S] = True
    rowsum = H[:, in_set].sum(axis=1)
    iters = 0
    deadline = None if problem.time_budget is None else start + problem.time_budget
    improved = m < n
    while improved:
        if problem.max_iters is not None and iters >= problem.max_iters:
            break
        if deadline is not None and time.perf_counter() >= deadline:
            break
        improved = False
        outside = np.flatnonzero(~in_set)
        for i in np.flatnonzero(in_set):
            # delta of swapping i out and each candidate j in
            delta = 2.0 * c * (rowsum[outside] - H[outside, i] - rowsum[i]) - z[outside] + z[i]
            hits = np.flatnonzero(delta > _tol(current))
            if hits.size:
                j = int(outside[hits[0]])
                in_set[i], in_set[j] = False, True
                rowsum += H[:, j] - H[:, i]
                current = _subset_objective(np.flatnonzero(in_set), H, z, c)
                iters += 1
                improved = True
                break
    selected = problem.available[np.flatnonzero(in_set)].tolist()
    return SelectionResult(selected, current, "heuristic", iters, time.perf_counter() - start, greedy_objective=greedy_val)


def _sorted_available(available) -> np.ndarray:
    avail = np.array(sorted(int(k) for k in available), dtype=np.int64)
    if avail.size == 0:
        raise InvalidInputError("no available clients")
    return avail


def select_uniform(available, M: int, seed: int, t: int = 0) -> SelectionResult:
    avail = _sorted_available(available)
    m = min(M, avail.size)
    if m == avail.size:
        return SelectionResult(avail.tolist(), float("nan"), "uniform")
    rng = derive_rng(seed, STREAM_SAMPLER, t)
    pick = rng.choice(avail, size=m, replace=False)
    return SelectionResult(sorted(pick.tolist()), float("nan"), "uniform")


def select_md(available, sizes, M: int, seed: int, t: int = 0) -> SelectionResult:
    """``m`` draws with replacement, probability proportional to data size.

    ``selected`` holds the distinct clients; ``draws`` keeps the multiplicity.
    """
    avail = _sorted_available(available)
    m = min(M, avail.size)
    n = np.asarray(sizes, dtype=np.float64)[avail]
    rng = derive_rng(seed, STREAM_SAMPLER, t)
    draws = rng.choice(avail, size=m, replace=True, p=n / n.sum()).tolist()
    return SelectionResult(sorted(set(draws)), float("nan"), "md", draws=draws)


def select_power_of_choice(available, M: int, local_losses) -> SelectionResult:
    """Top-``m`` available clients by local loss (ties to the lower id)."""
    avail = _sorted_available(available)
    losses = np.asarray(local_losses, dtype=np.float64)
    if losses.shape != avail.shape:
        raise InvalidInputError("need one loss per available client")
    m = min(M, avail.size)
    order = np.lexsort((avail, -losses))
    return SelectionResult(sorted(avail[order[:m]].tolist()), float("nan"), "poc")
