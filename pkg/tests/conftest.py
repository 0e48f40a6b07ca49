"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the implementation's computation paths:
the objective oracle uses direct -y log p - (1-y) log(1-p) sums instead of
the softplus form, the AUC oracle enumerates positive/negative pairs, and
gradient checks use central finite differences.
"""

import numpy as np
import pytest

from laftr import AdjacencyMatrix, ModelState, ObservationMask


def oracle_nll(y: AdjacencyMatrix, mask: ObservationMask, state: ModelState) -> float:
    """Direct log-form cross-entropy over observed entries (no softplus)."""
    logits = (state.z @ state.w) @ state.z.T
    p = 1.0 / (1.0 + np.exp(-logits))
    terms = -y.entries * np.log(p) - (1 - y.entries) * np.log1p(-p)
    return float(terms[mask.observed].sum())


def oracle_objective(y: AdjacencyMatrix, mask: ObservationMask, state: ModelState) -> float:
    return oracle_nll(y, mask, state) + state.k_plus * state.lam**2


def oracle_flip_delta(y, mask, state, n, k) -> float:
    """Objective change from flipping z[n, k], by full from-scratch recompute."""
    z_flipped = state.z.copy()
    z_flipped[n, k] = 1.0 - z_flipped[n, k]
    flipped = ModelState.from_factors(z_flipped, state.w, state.lam)
    return oracle_objective(y, mask, flipped) - oracle_objective(y, mask, state)


def exhaustive_flip_improvements(y, mask, state) -> np.ndarray:
    """Objective deltas of every single z-coordinate flip, by recompute."""
    deltas = np.zeros(state.z.shape)
    for n in range(state.z.shape[0]):
        for k in range(state.z.shape[1]):
            deltas[n, k] = oracle_flip_delta(y, mask, state, n, k)
    return deltas


def oracle_auc(scores, labels) -> float:
    """Pairwise enumeration: concordant pairs plus half credit for ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def random_instance(rng, n, k, density=0.4):
    """Random adjacency, full off-diagonal mask, and a random coherent state."""
    entries = (rng.random((n, n)) < density).astype(np.int8)
    np.fill_diagonal(entries, 0)
    y = AdjacencyMatrix(n, entries)
    mask = ObservationMask.full(n)
    z = (rng.random((n, k)) < 0.5).astype(float)
    w = rng.normal(0.0, 1.0, (k, k))
    state = ModelState.from_factors(z, w, lam=0.5)
    return y, mask, state


def assert_monotone_trace(report, slack=1e-9):
    trace = np.asarray(report.objective_trace)
    assert trace.size > 0
    assert (np.diff(trace) <= slack).all(), f"objective trace increased: {trace}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
