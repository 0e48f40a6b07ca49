"""Link probabilities, masked cross-entropy objective, and its W-gradient.

The model scores a directed pair (i, j) with a bilinear logit z_i^T W z_j,
where z_i is node i's binary community-membership row and W is a real
community-interaction matrix. The fitting objective is

    Q(W, Z) = sum over observed (i,j) of [-y_ij * a_ij + softplus(a_ij)]
              + K * lambda^2

with a_ij the logit and K the current number of communities. The
penalty charges lambda^2 per community, which is what stops the trivial
one-community-per-node solution.

Also here: the Bernoulli Bregman divergence and the scaled log-partition
function. Neither is used in the hot path; they exist so the test suite can
verify that the objective really is the divergence form of the Bernoulli
likelihood and that the scaled family has mean q and variance q(1-q)/beta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import AdjacencyMatrix, ObservationMask

__all__ = [
    "ModelState",
    "sigmoid",
    "softplus",
    "link_probability",
    "negative_log_likelihood",
    "objective",
    "nll_gradient_w",
    "bernoulli_bregman",
    "scaled_log_partition",
]

# Clamp applied to exp() arguments only. Both stable forms below feed exp a
# non-positive argument, so this guards underflow noise, never overflow; the
# linear terms must see the raw logit or the saturated-entry loss -y*a +
# softplus(a) would lose its lower bound of zero.
LOGIT_CLAMP = 500.0


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=float)
    e = np.exp(np.maximum(-np.abs(x), -LOGIT_CLAMP))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x):
    """log(1 + exp(x)) computed as max(x, 0) + log1p(exp(-|x|)), elementwise."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(np.maximum(-np.abs(x), -LOGIT_CLAMP)))


@dataclass
class ModelState:
    """Binary memberships Z, interaction weights W, and derived caches.

    Caches (kept coherent by every mutating operation in the optimizer):

    - ``logits``:      N x N, logits[i, j] = z_i^T W z_j
    - ``left_cache``:  N x K, left_cache[j, k] = W[k, :] . z_j   (= Z W^T)
    - ``right_cache``: N x K, right_cache[i, k] = z_i . W[:, k]  (= Z W)

    Flipping z[n, k] shifts logit row n by +-left_cache[:, k] and column n
    by +-right_cache[:, k], which is what makes single-coordinate moves
    O(N) instead of a full recompute.

    K = 0 (Z with zero columns) is a legal state: all logits are 0 and every
    pair gets probability 0.5.
    """

    z: np.ndarray
    w: np.ndarray
    lam: float
    logits: np.ndarray
    left_cache: np.ndarray
    right_cache: np.ndarray

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def k_plus(self) -> int:
        return self.z.shape[1]

    @classmethod
    def from_factors(cls, z: np.ndarray, w: np.ndarray, lam: float) -> "ModelState":
        z = np.asarray(z, dtype=float)
        w = np.asarray(w, dtype=float)
        if z.ndim != 2:
            raise ValueError("z must be 2-d")
        k = z.shape[1]
        if w.shape != (k, k):
            raise ValueError(f"w must be {k}x{k} to match z, got {w.shape}")
        if not np.isin(z, (0.0, 1.0)).all():
            raise ValueError("z entries must be 0 or 1")
        if lam < 0:
            raise ValueError(f"lambda must be >= 0, got {lam}")
        state = cls(z=z.copy(), w=w.copy(), lam=float(lam),
                    logits=None, left_cache=None, right_cache=None)  # type: ignore[arg-type]
        state.rebuild_caches()
        return state

    def rebuild_caches(self) -> None:
        """Recompute right/left caches and logits ((Z W) Z^T, in that order)."""
        self.right_cache = self.z @ self.w
        self.left_cache = self.z @ self.w.T
        self.logits = self.right_cache @ self.z.T

    def copy(self) -> "ModelState":
        return ModelState(
            z=self.z.copy(),
            w=self.w.copy(),
            lam=self.lam,
            logits=self.logits.copy(),
            left_cache=self.left_cache.copy(),
            right_cache=self.right_cache.copy(),
        )

    def max_cache_error(self) -> float:
        """Largest absolute deviation of any cache entry from its definition."""
        errs = [np.abs((self.z @ self.w) @ self.z.T - self.logits).max(initial=0.0),
                np.abs(self.z @ self.w.T - self.left_cache).max(initial=0.0),
                np.abs(self.z @ self.w - self.right_cache).max(initial=0.0)]
        return float(max(errs))


def _check_dims(y: AdjacencyMatrix, mask: ObservationMask, state: ModelState) -> None:
    if not (y.n == mask.n == state.n):
        raise ValueError(
            f"dimension mismatch: adjacency n={y.n}, mask n={mask.n}, state n={state.n}"
        )


def link_probability(state: ModelState, i: int, j: int) -> float:
    """sigma(z_i^T W z_j), read from the logit cache."""
    n = state.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"pair ({i}, {j}) out of range for n={n}")
    return float(sigmoid(state.logits[i, j]))


def negative_log_likelihood(y: AdjacencyMatrix, mask: ObservationMask, state: ModelState) -> float:
    """Masked Bernoulli cross-entropy, via the softplus form.

    Per observed entry: -y_ij * a_ij + softplus(a_ij), which equals
    -y log p - (1-y) log(1-p) and stays finite for saturated logits.
    """
    _check_dims(y, mask, state)
    a = state.logits
    yv = y.entries
    terms = -yv * a + softplus(a)
    return float(terms[mask.observed].sum())


def objective(y: AdjacencyMatrix, mask: ObservationMask, state: ModelState) -> float:
    """negative_log_likelihood plus the community-count penalty K * lambda^2."""
    return negative_log_likelihood(y, mask, state) + state.k_plus * state.lam**2


def nll_gradient_w(y: AdjacencyMatrix, mask: ObservationMask, state: ModelState) -> np.ndarray:
    """Exact gradient of the masked cross-entropy w.r.t. W.

    G[k, k'] = sum over observed (i,j) of (p_ij - y_ij) * z[i,k] * z[j,k'],
    computed as Z^T R Z with R the masked residual matrix.
    """
    _check_dims(y, mask, state)
    residual = (sigmoid(state.logits) - y.entries) * mask.observed
    return state.z.T @ residual @ state.z


def bernoulli_bregman(x, q):
    """Bregman divergence of x from a Bernoulli mean q, for phi(x) = x log x + (1-x) log(1-x).

    d(x, q) = x log(x/q) + (1-x) log((1-x)/(1-q)), with the 0 log 0 = 0
    convention at the endpoints. For binary x this is exactly the
    cross-entropy -x log q - (1-x) log(1-q): the divergence and the
    likelihood agree with no leftover carrier term because phi(0) = phi(1) = 0.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise ValueError("q must lie strictly inside (0, 1)")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("x must lie in [0, 1]")

    # evaluate x*log(x) style terms with the endpoint convention, no warnings
    safe_x = np.where(x > 0.0, x, 1.0)
    term_x = np.where(x > 0.0, x * (np.log(safe_x) - np.log(q)), 0.0)
    safe_1x = np.where(x < 1.0, 1.0 - x, 1.0)
    term_1x = np.where(x < 1.0, (1.0 - x) * (np.log(safe_1x) - np.log1p(-q)), 0.0)
    out = term_x + term_1x
    return float(out) if out.ndim == 0 else out


def scaled_log_partition(eta_tilde, beta: float):
    """Log-partition of the Bernoulli scaled by beta: beta * log(1 + exp(eta/beta)).

    Its first derivative in eta_tilde is sigma(eta_tilde/beta) (the mean q,
    independent of beta); its second is q(1-q)/beta (variance shrinking as
    beta grows). beta never enters the fitted model: the objective is the
    beta -> infinity limit taken analytically.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    eta_tilde = np.asarray(eta_tilde, dtype=float)
    out = beta * softplus(eta_tilde / beta)
    return float(out) if out.ndim == 0 else out
