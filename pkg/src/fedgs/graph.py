"""Client similarity graphs: similarity matrices, thresholded adjacency, shortest paths."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as logreg
from .domain import STREAM_NOISE, InvalidInputError, derive_rng

ABSENT = np.inf


class SimilarityWarning(UserWarning):
    pass


@dataclass
class SimilarityMatrix:
    V: np.ndarray
    warnings: tuple[str, ...] = field(default=())

    @property
    def degenerate(self) -> bool:
        return bool(self.warnings)


@dataclass
class Graph3DG:
    """``R`` holds ``np.inf`` for absent edges; ``H`` is the capped distance matrix."""

    R: np.ndarray
    H: np.ndarray | None
    sigma2: float
    epsilon: float

    @property
    def N(self) -> int:
        return int(self.R.shape[0])

    def edges(self) -> set[tuple[int, int]]:
        iu, ju = np.triu_indices(self.N, k=1)
        keep = np.isfinite(self.R[iu, ju])
        return set(zip(iu[keep].tolist(), ju[keep].tolist()))


def _warn(msg: str) -> str:
    warnings.warn(msg, SimilarityWarning, stacklevel=3)
    return msg


def minmax_normalize(raw: np.ndarray) -> SimilarityMatrix:
    """Min-max scale the off-diagonal entries to [0, 1]; diagonal set to 1."""
    N = raw.shape[0]
    off = ~np.eye(N, dtype=bool)
    lo, hi = raw[off].min(), raw[off].max()
    # relative tolerance so protocol round-off on equal inputs still counts as degenerate
    if hi - lo <= 1e-8 * max(1.0, abs(hi), abs(lo)):
        V = np.full((N, N), 0.5)
        np.fill_diagonal(V, 1.0)
        return SimilarityMatrix(V, (_warn("all off-diagonal similarities equal; normalized to 0.5"),))
    V = (raw - lo) / (hi - lo)
    V = np.clip((V + V.T) / 2, 0.0, 1.0)
    np.fill_diagonal(V, 1.0)
    return SimilarityMatrix(V)


def _feature_matrix(profiles) -> np.ndarray:
    if len(profiles) < 2:
        raise InvalidInputError("need at least 2 clients")
    if any(p.features is None for p in profiles):
        raise InvalidInputError("every profile needs a feature vector")
    U = np.array([np.asarray(p.features, dtype=np.float64) for p in profiles])
    if U.ndim != 2:
        raise InvalidInputError("feature vectors must share one dimension")
    return U


def build_similarity_oracle(profiles, sim_fn=None) -> SimilarityMatrix:
    """Pairwise ``sim_fn`` over client features (inner product by default), min-max normalized."""
    U = _feature_matrix(profiles)
    if sim_fn is None:
        raw = U @ U.T
    else:
        N = U.shape[0]
        raw = np.zeros((N, N))
        for i, j in itertools.combinations(range(N), 2):
            raw[i, j] = raw[j, i] = sim_fn(U[i], U[j])
    return minmax_normalize(raw)


def clipped_cosine(E: np.ndarray) -> SimilarityMatrix:
    """``max(cos(e_i, e_j), 0)`` for the rows of ``E``; zero rows get similarity 0."""
    norms = np.linalg.norm(E, axis=1)
    notes = []
    zero = norms == 0
    if zero.any():
        notes.append(_warn(f"zero-norm vectors for clients {np.flatnonzero(zero).tolist()}; similarity set to 0"))
    safe = np.where(zero, 1.0, norms)
    unit = E / safe[:, None]
    V = np.clip(unit @ unit.T, 0.0, 1.0)
    V[zero, :] = 0.0
    V[:, zero] = 0.0
    np.fill_diagonal(V, 1.0)
    return SimilarityMatrix(V, tuple(notes))


def build_similarity_cosine_updates(local_models, global_model) -> SimilarityMatrix:
    g = np.asarray(global_model, dtype=np.float64)
    if any(np.shape(m) != g.shape for m in local_models):
        raise InvalidInputError("local and global models differ in dimension")
    return clipped_cosine(np.array([np.asarray(m, dtype=np.float64) - g for m in local_models]))


@dataclass(frozen=True)
class NoiseSpec:
    mean: np.ndarray
    cov: np.ndarray
    batch_size: int = 64

    @classmethod
    def from_examples(cls, x: np.ndarray, batch_size: int = 64) -> "NoiseSpec":
        x = np.asarray(x, dtype=np.float64)
        cov = np.cov(x, rowvar=False) if x.shape[0] > 1 else np.eye(x.shape[1])
        return cls(x.mean(axis=0), np.atleast_2d(cov), batch_size)

    def sample(self, seed: int) -> np.ndarray:
        rng = derive_rng(seed, STREAM_NOISE)
        return rng.multivariate_normal(self.mean, self.cov, size=self.batch_size, method="eigh")


def output_embeddings(local_models, noise: np.ndarray, num_classes: int) -> np.ndarray:
    """Mean output-layer activation (logits) of each model over the noise batch."""
    return np.array([logreg.logits(np.asarray(m), noise, num_classes).mean(axis=0) for m in local_models])


def build_similarity_functional(local_models, noise_spec: NoiseSpec, num_classes: int, train_seed: int) -> SimilarityMatrix:
    """Clipped cosine of the models' responses to a shared Gaussian noise batch."""
    noise = noise_spec.sample(train_seed)
    return clipped_cosine(output_embeddings(local_models, noise, num_classes))


def adjacency_from_similarity(V, epsilon: float, sigma2: float) -> Graph3DG:
    if epsilon < 0 or sigma2 <= 0:
        raise InvalidInputError("need epsilon >= 0 and sigma2 > 0")
    V = V.V if isinstance(V, SimilarityMatrix) else np.asarray(V, dtype=np.float64)
    R = np.where(V >= epsilon, np.exp(-V / sigma2), ABSENT)
    np.fill_diagonal(R, 0.0)
    return Graph3DG(R=R, H=None, sigma2=sigma2, epsilon=epsilon)


def floyd_warshall(R: np.ndarray) -> np.ndarray:
    """All-pairs shortest paths over finite edges; unreachable pairs capped.

    The cap is twice the largest finite distance (1 when no pair is connected).
    Each ``k`` layer is a vectorised relaxation identical to the scalar triple loop.
    """
    R = R.R if isinstance(R, Graph3DG) else R
    H = np.array(R, dtype=np.float64, copy=True)
    N = H.shape[0]
    np.fill_diagonal(H, 0.0)
    for k in range(N):
        np.minimum(H, H[:, k:k + 1] + H[k:k + 1, :], out=H)
    finite = np.isfinite(H)
    off = ~np.eye(N, dtype=bool)
    reach = finite & off
    cap = 2.0 * H[reach].max() if reach.any() else 1.0
    H[~finite] = cap
    return H


def build_graph(V, epsilon: float, sigma2: float) -> Graph3DG:
    g = adjacency_from_similarity(V, epsilon, sigma2)
    g.H = floyd_warshall(g.R)
    return g


def avg_shortest_path_score(S, H: np.ndarray, N: int) -> float:
    """Sum of distances over ordered pairs of distinct selected clients, over ``N(N-1)``."""
    idx = np.array(sorted(set(int(k) for k in S)), dtype=np.int64)
    if idx.size < 2:
        return 0.0
    sub = H[np.ix_(idx, idx)]
    return float((sub.sum() - np.trace(sub)) / (N * (N - 1)))


def edge_prediction_scores(predicted: Graph3DG, oracle: Graph3DG) -> tuple[float, float, float]:
    if predicted.N != oracle.N:
        raise InvalidInputError("graphs differ in size")
    pe, oe = predicted.edges(), oracle.edges()
    tp = len(pe & oe)
    precision = tp / len(pe) if pe else 0.0
    recall = tp / len(oe) if oe else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


# -- edge-list text format ----------------------------------------------------
# "# 3dg N=<N> epsilon=<eps> sigma2=<s2>" then one "i j weight" line per edge (i < j).
# Weights are written with repr() so they parse back bit-exactly.

def export_edge_list(graph: Graph3DG, path) -> None:
    lines = [f"# 3dg N={graph.N} epsilon={graph.epsilon!r} sigma2={graph.sigma2!r}"]
    for i, j in sorted(graph.edges()):
        lines.append(f"{i} {j} {float(graph.R[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def import_edge_list(path) -> Graph3DG:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# 3dg"):
        raise InvalidInputError(f"{path}: missing 3dg header")
    meta = dict(tok.split("=", 1) for tok in text[0].split()[2:])
    N = int(meta["N"])
    R = np.full((N, N), ABSENT)
    np.fill_diagonal(R, 0.0)
    for line in text[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        i, j, w = line.split()
        R[int(i), int(j)] = R[int(j), int(i)] = float(w)
    g = Graph3DG(R=R, H=None, sigma2=float(meta["sigma2"]), epsilon=float(meta["epsilon"]))
    g.H = floyd_warshall(R)
    return g
