"""Synthetic data: Indian buffet process draws and graphs sampled from the model.

The sampler follows the sequential buffet construction: customer i takes an
already-tasted dish k with probability (count so far)/i, then tries
Poisson(alpha/i) brand-new dishes. The total dish count is therefore a sum
of independent Poisson(alpha/i) draws, i.e. Poisson(alpha * H_n) exactly,
which the tests use as an oracle.

``ibp_log_prior`` evaluates the closed-form density of a binary matrix under
this process using the binomial-coefficient form

    log P(Z) = K log(alpha) - sum_h log(m_h!) - alpha * H_n
               - sum_k [ log(c_k) + log C(n, c_k) ]

where c_k counts the ones in column k and m_h counts duplicate columns.
Note the standard exchangeable IBP density is usually written with
factorials of c_k and n - c_k instead of the c_k * C(n, c_k) product; the
two disagree in general. This function deliberately implements the binomial
form (see the n=1 test, where both agree). It is a verification utility
only and plays no role in fitting.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .graph import AdjacencyMatrix
from .model import sigmoid

__all__ = [
    "IbpStats",
    "sample_ibp",
    "ibp_log_prior",
    "sample_edges",
    "sample_lfrm",
    "planted_blocks",
    "block_weights",
]


@dataclass(frozen=True)
class IbpStats:
    """Column occupancy counts and duplicate-column multiplicities of a binary matrix."""

    column_counts: tuple[int, ...]
    history_multiplicities: tuple[int, ...]
    n: int
    k_plus: int

    @classmethod
    def from_matrix(cls, z: np.ndarray) -> "IbpStats":
        z = np.asarray(z)
        n, k = z.shape
        counts = tuple(int(c) for c in z.sum(axis=0))
        histories = Counter(z[:, col].astype(np.int8).tobytes() for col in range(k))
        return cls(
            column_counts=counts,
            history_multiplicities=tuple(sorted(histories.values())),
            n=n,
            k_plus=k,
        )


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_ibp(n: int, alpha: float, seed) -> np.ndarray:
    """Draw a binary feature-allocation matrix for n customers.

    Row i samples each existing dish k with probability counts[k]/(i+1) and
    appends Poisson(alpha/(i+1)) new dishes. Columns appear in discovery
    order. ``seed`` may be an int or an existing Generator (the stream is
    consumed, which lets callers chain draws deterministically).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    rng = _as_rng(seed)

    rows: list[np.ndarray] = []
    counts = np.zeros(0, dtype=np.int64)
    for i in range(1, n + 1):
        k = counts.size
        taken = np.zeros(k, dtype=np.int8)
        if k:
            taken = (rng.random(k) < counts / i).astype(np.int8)
        n_new = int(rng.poisson(alpha / i))
        rows.append(np.concatenate([taken, np.ones(n_new, dtype=np.int8)]))
        counts = np.concatenate([counts + taken, np.ones(n_new, dtype=np.int64)])

    k_total = counts.size
    z = np.zeros((n, k_total), dtype=np.int8)
    for i, row in enumerate(rows):
        z[i, : row.size] = row
    return z


def ibp_log_prior(z: np.ndarray, alpha: float) -> float:
    """Log-density of a binary matrix under the buffet prior (binomial form)."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    z = np.asarray(z)
    if z.ndim != 2:
        raise ValueError("z must be 2-d")
    if z.shape[1] and (z.sum(axis=0) == 0).any():
        raise ValueError("z must not contain all-zero columns; prune them first")

    stats = IbpStats.from_matrix(z)
    n = stats.n
    harmonic = sum(1.0 / i for i in range(1, n + 1))

    logp = stats.k_plus * math.log(alpha) - alpha * harmonic
    for mult in stats.history_multiplicities:
        logp -= math.lgamma(mult + 1)
    for c in stats.column_counts:
        log_binom = math.lgamma(n + 1) - math.lgamma(c + 1) - math.lgamma(n - c + 1)
        logp -= math.log(c) + log_binom
    return logp


def sample_edges(z: np.ndarray, w: np.ndarray, seed) -> AdjacencyMatrix:
    """Draw a directed graph from fixed factors: y_ij ~ Bernoulli(sigma(z_i W z_j)).

    The diagonal is fixed at 0 to match the no-self-link convention.
    """
    rng = _as_rng(seed)
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    n = z.shape[0]
    probs = sigmoid((z @ w) @ z.T)
    y = (rng.random((n, n)) < probs).astype(np.int8)
    np.fill_diagonal(y, 0)
    symmetric = bool((y == y.T).all())
    return AdjacencyMatrix(n, y, symmetric_hint=symmetric)


def sample_lfrm(
    n: int, alpha: float, sigma_w: float, seed
) -> tuple[np.ndarray, np.ndarray, AdjacencyMatrix]:
    """Full generative draw: Z from the buffet prior, Gaussian W, Bernoulli edges."""
    if sigma_w <= 0:
        raise ValueError(f"sigma_w must be positive, got {sigma_w}")
    rng = _as_rng(seed)
    z = sample_ibp(n, alpha, rng)
    k = z.shape[1]
    w = rng.normal(0.0, sigma_w, (k, k))
    y = sample_edges(z, w, rng)
    return z, w, y


def planted_blocks(n: int, k: int) -> np.ndarray:
    """Membership matrix assigning nodes to k disjoint, near-equal blocks."""
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    z = np.zeros((n, k))
    bounds = np.linspace(0, n, k + 1).astype(int)
    for block in range(k):
        z[bounds[block] : bounds[block + 1], block] = 1.0
    return z


def block_weights(k: int, on: float = 6.0, off: float = -6.0) -> np.ndarray:
    """Interaction matrix with ``on`` on the diagonal and ``off`` elsewhere."""
    return np.full((k, k), off) + (on - off) * np.eye(k)
