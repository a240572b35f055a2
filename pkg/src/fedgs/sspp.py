"""Commodity-server scalar product protocol, simulated in-process.

Three roles take part: ``server`` (the commodity server and message relay),
``clientA`` and ``clientB``. Clients never talk to each other directly; every
intermediate value passes through the server, in the order below:

1. server -> clientA: (R_a, r_a)
2. server -> clientB: (R_b, r_b)        with r_a + r_b = R_a . R_b
3. clientA -> server: A_hat = A + R_a
4. clientB -> server: B_hat = B + R_b
5. server -> clientB: A_hat
6. server -> clientA: B_hat
7. clientB -> server: u = A_hat . B + r_b - v_2
8. clientB -> server: v_2
9. server -> clientA: u
10. clientA -> server: v_1 = u - R_a . B_hat + r_a
The server outputs v_1 + v_2 = A . B.

Note that B hands v_2 to the server together with u, so the server alone learns
both shares; only the raw vectors stay hidden. No cryptographic guarantee is
claimed: the masks are ordinary floating-point noise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import STREAM_SSPP, InvalidInputError, derive_rng
from .graph import SimilarityMatrix, _feature_matrix, minmax_normalize


@dataclass(frozen=True)
class Message:
    sender: str
    receiver: str
    name: str
    payload: tuple


@dataclass
class ProtocolTranscript:
    messages: list[Message]

    def get(self, name: str, receiver: str | None = None) -> tuple:
        for m in self.messages:
            if m.name == name and (receiver is None or m.receiver == receiver):
                return m.payload
        raise KeyError(name)

    def replay(self) -> float:
        """Recompute the result from the transcript alone."""
        R_a, r_a = self.get("masks", "clientA")
        R_b, r_b = self.get("masks", "clientB")
        (b_hat,) = self.get("B_hat", "clientA")
        (u,) = self.get("u", "clientA")
        (v2,) = self.get("v2")
        (v1,) = self.get("v1")
        assert np.isclose(r_a + r_b, float(np.dot(R_a, R_b)), rtol=1e-9, atol=1e-9)
        assert v1 == u - float(np.dot(R_a, b_hat)) + r_a
        return v1 + v2

    def dumps(self) -> str:
        out = []
        for m in self.messages:
            parts = []
            for p in m.payload:
                if np.ndim(p):
                    parts.append("[" + ",".join(repr(float(a)) for a in p) + "]")
                else:
                    parts.append(repr(float(p)))
            out.append(f"{m.sender}\t{m.receiver}\t{m.name}\t{' '.join(parts)}")
        return "\n".join(out) + "\n"

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())


def scalar_product_protocol(A, B, protocol_seed: int) -> tuple[float, ProtocolTranscript]:
    A = np.asarray(A, dtype=np.float64).ravel()
    B = np.asarray(B, dtype=np.float64).ravel()
    if A.shape != B.shape or A.size == 0:
        raise InvalidInputError(f"vector dimensions differ or are empty: {A.size} vs {B.size}")
    d = A.size
    # masks sized like the vector they hide, so round-off tracks |A| |B|
    sa = float(np.abs(A).max()) or 1.0
    sb = float(np.abs(B).max()) or 1.0
    server = derive_rng(protocol_seed, STREAM_SSPP, 0)
    R_a = server.standard_normal(d) * sa
    R_b = server.standard_normal(d) * sb
    r_a = float(server.uniform(-1.0, 1.0)) * sa * sb
    r_b = float(np.dot(R_a, R_b)) - r_a

    a_hat = A + R_a
    b_hat = B + R_b

    v2 = float(derive_rng(protocol_seed, STREAM_SSPP, 2).uniform(-1.0, 1.0)) * sa * sb
    u = float(np.dot(a_hat, B)) + r_b - v2
    v1 = u - float(np.dot(R_a, b_hat)) + r_a
    result = v1 + v2

    msgs = [
        Message("server", "clientA", "masks", (R_a, r_a)),
        Message("server", "clientB", "masks", (R_b, r_b)),
        Message("clientA", "server", "A_hat", (a_hat,)),
        Message("clientB", "server", "B_hat", (b_hat,)),
        Message("server", "clientB", "A_hat", (a_hat,)),
        Message("server", "clientA", "B_hat", (b_hat,)),
        Message("clientB", "server", "u", (u,)),
        Message("clientB", "server", "v2", (v2,)),
        Message("server", "clientA", "u", (u,)),
        Message("clientA", "server", "v1", (v1,)),
    ]
    return result, ProtocolTranscript(msgs)


def pair_seed(protocol_seed: int, i: int, j: int) -> int:
    return int(derive_rng(protocol_seed, STREAM_SSPP, i, j).integers(0, 2**63))


def build_similarity_via_sspp(profiles, protocol_seed: int) -> SimilarityMatrix:
    """Dot-product similarity computed pair by pair through the protocol, then min-max normalized."""
    U = _feature_matrix(profiles)
    N = U.shape[0]
    raw = np.zeros((N, N))
    for i, j in itertools.combinations(range(N), 2):
        raw[i, j] = raw[j, i] = scalar_product_protocol(U[i], U[j], pair_seed(protocol_seed, i, j))[0]
    return minmax_normalize(raw)
