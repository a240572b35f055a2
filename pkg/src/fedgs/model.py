"""Multinomial logistic regression on flat parameter vectors.

Parameters are laid out as ``W.ravel()`` (row-major, shape ``(num_classes, dim)``)
followed by ``b`` (length ``num_classes``).
"""

from __future__ import annotations

import numpy as np


def num_params(dim: int, num_classes: int) -> int:
    return num_classes * dim + num_classes


def init_params(dim: int, num_classes: int) -> np.ndarray:
    return np.zeros(num_params(dim, num_classes), dtype=np.float64)


def unpack(theta: np.ndarray, dim: int, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    split = num_classes * dim
    return theta[:split].reshape(num_classes, dim), theta[split:]


def pack(W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(W, dtype=np.float64).ravel(), np.asarray(b, dtype=np.float64)])


def logits(theta: np.ndarray, x: np.ndarray, num_classes: int) -> np.ndarray:
    W, b = unpack(theta, x.shape[1], num_classes)
    return x @ W.T + b


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(theta: np.ndarray, x: np.ndarray, y: np.ndarray, num_classes: int) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. ``theta``."""
    logp = _log_softmax(logits(theta, x, num_classes))
    n = x.shape[0]
    loss = -float(logp[np.arange(n), y].mean())
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, pack(delta.T @ x, delta.sum(axis=0))


def evaluate(theta: np.ndarray, x: np.ndarray, y: np.ndarray, num_classes: int) -> tuple[float, float]:
    """Return (mean cross-entropy, top-1 accuracy)."""
    if x.shape[0] == 0:
        return float("nan"), float("nan")
    logp = _log_softmax(logits(theta, x, num_classes))
    loss = -float(logp[np.arange(x.shape[0]), y].mean())
    acc = float((logp.argmax(axis=1) == y).mean())
    return loss, acc
