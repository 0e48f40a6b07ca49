"""Greedy alternating minimization of the penalized cross-entropy objective.

One outer iteration: sweep the binary membership coordinates to a one-flip
fixed point, descend on W (convex for fixed Z), prune communities nobody
belongs to, then propose growing the model by one community and keep the
grown model only if it lowers the objective. Every move is a descent move,
so the objective trace is non-increasing and the loop reaches a local
minimum in finitely many iterations.

Coordinate moves are evaluated without touching the full N x N logit matrix:
flipping z[n, k] shifts logit row n by +-left_cache[:, k] and column n by
+-right_cache[:, k], so the objective delta is a sum of O(N)
softplus-difference terms over the observed entries of row/column n.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .graph import AdjacencyMatrix, ObservationMask
from .model import ModelState, objective, sigmoid, softplus

__all__ = [
    "FitConfig",
    "FitReport",
    "init_state",
    "delta_objective_flip",
    "sweep_z",
    "optimize_w",
    "propose_feature",
    "prune_empty_features",
    "fit",
]

# Strict-improvement margin for accepting a coordinate flip or a grown model.
# Exact arithmetic would accept any negative delta; the margin prevents
# cycling on floating-point ties.
FLIP_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters and stopping rules for :func:`fit`.

    lam is the per-community penalty weight (the objective charges lam^2 per
    community); sigma_w scales the Gaussian initialization of W entries.
    """

    lam: float = 0.5
    sigma_w: float = 1.0
    k_init: int = 1
    max_outer_iters: int = 100
    rel_tol: float = 1e-6
    w_max_steps: int = 200
    w_grad_tol: float = 1e-6
    seed: int = 0
    births_per_iter: int = 1
    include_diagonal: bool = False
    # when False, the grown model's coordinate sweep visits only the new column
    birth_sweep_full: bool = True

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.sigma_w <= 0:
            raise ValueError(f"sigma_w must be positive, got {self.sigma_w}")
        if self.k_init < 1:
            raise ValueError(f"k_init must be >= 1, got {self.k_init}")
        if self.max_outer_iters < 1:
            raise ValueError(f"max_outer_iters must be >= 1, got {self.max_outer_iters}")
        if self.rel_tol <= 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.w_max_steps < 1:
            raise ValueError(f"w_max_steps must be >= 1, got {self.w_max_steps}")
        if self.w_grad_tol <= 0:
            raise ValueError(f"w_grad_tol must be positive, got {self.w_grad_tol}")
        if self.births_per_iter < 0:
            raise ValueError(f"births_per_iter must be >= 0, got {self.births_per_iter}")


@dataclass
class FitReport:
    """Per-outer-iteration trace of a fit run.

    objective_trace is non-increasing (within 1e-9 slack); elapsed holds each
    iteration's wall-clock duration in seconds.
    """

    objective_trace: list[float] = field(default_factory=list)
    k_trace: list[int] = field(default_factory=list)
    accepted_births: list[bool] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    converged: bool = False
    final_state: ModelState | None = None


def init_state(n: int, config: FitConfig, rng: np.random.Generator | None = None) -> ModelState:
    """Fair-coin Z (n x k_init) and Gaussian(0, sigma_w^2) W, from the seeded RNG."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    z = (rng.random((n, config.k_init)) < 0.5).astype(float)
    w = rng.normal(0.0, config.sigma_w, (config.k_init, config.k_init))
    return ModelState.from_factors(z, w, config.lam)


class _MaskIndex:
    """Precomputed per-node views of the observed entries.

    For each node n: the observed partners j != n in row n with their y
    values, the observed partners i != n in column n with theirs, and
    whether (n, n) itself is observed. Built once per fit; the mask and y
    never change during a run.
    """

    def __init__(self, y: AdjacencyMatrix, mask: ObservationMask):
        obs = mask.observed
        yv = y.entries
        n = mask.n
        self.row_js: list[np.ndarray] = []
        self.row_y: list[np.ndarray] = []
        self.col_is: list[np.ndarray] = []
        self.col_y: list[np.ndarray] = []
        self.rowcol_y: list[np.ndarray] = []
        self.diag_observed = np.diagonal(obs).copy()
        self.diag_y = np.diagonal(yv).astype(float)
        for node in range(n):
            js = np.flatnonzero(obs[node])
            js = js[js != node]
            self.row_js.append(js)
            self.row_y.append(yv[node, js].astype(float))
            is_ = np.flatnonzero(obs[:, node])
            is_ = is_[is_ != node]
            self.col_is.append(is_)
            self.col_y.append(yv[is_, node].astype(float))
            self.rowcol_y.append(np.concatenate([self.row_y[-1], self.col_y[-1]]))


def _flip_delta(idx: _MaskIndex, state: ModelState, n: int, k: int) -> float:
    """Objective change from flipping z[n, k], in O(N) using the caches."""
    d = 1.0 - 2.0 * state.z[n, k]

    js = idx.row_js[n]
    da_row = d * state.left_cache[js, k]
    a_row = state.logits[n, js]
    delta = float((-idx.row_y[n] * da_row + softplus(a_row + da_row) - softplus(a_row)).sum())

    is_ = idx.col_is[n]
    da_col = d * state.right_cache[is_, k]
    a_col = state.logits[is_, n]
    delta += float((-idx.col_y[n] * da_col + softplus(a_col + da_col) - softplus(a_col)).sum())

    if idx.diag_observed[n]:
        # the diagonal logit is quadratic in z[n, k]: both caches shift it,
        # plus the d^2 = 1 self-term w[k, k]
        da = d * (state.left_cache[n, k] + state.right_cache[n, k]) + state.w[k, k]
        a = state.logits[n, n]
        delta += float(-idx.diag_y[n] * da + softplus(a + da) - softplus(a))
    return delta


def _apply_flip(state: ModelState, n: int, k: int) -> None:
    """Flip z[n, k] and patch logits row/column n and cache row n in place."""
    d = 1.0 - 2.0 * state.z[n, k]
    state.logits[n, :] += d * state.left_cache[:, k]
    state.logits[:, n] += d * state.right_cache[:, k]
    # the two updates above already contributed d*(left + right) at (n, n)
    state.logits[n, n] += state.w[k, k]
    state.left_cache[n, :] += d * state.w[:, k]
    state.right_cache[n, :] += d * state.w[k, :]
    state.z[n, k] += d


def delta_objective_flip(
    y: AdjacencyMatrix, mask: ObservationMask, state: ModelState, n: int, k: int
) -> float:
    """Q(state with z[n,k] flipped) - Q(state), without materializing the flip.

    The community-count penalty is unchanged by a flip, so this is purely a
    likelihood delta over the observed entries of row and column n.
    """
    if not (0 <= n < state.n):
        raise IndexError(f"node index {n} out of range for n={state.n}")
    if not (0 <= k < state.k_plus):
        raise IndexError(f"feature index {k} out of range for k={state.k_plus}")
    if y.n != state.n or mask.n != state.n:
        raise ValueError("adjacency/mask/state dimensions disagree")
    return _flip_delta(_MaskIndex(y, mask), state, n, k)


def _softplus_scalar(a: float) -> float:
    return max(a, 0.0) + math.log1p(math.exp(max(-abs(a), -500.0)))


def _sweep_pass(idx: _MaskIndex, state: ModelState, apply: bool) -> bool:
    """One row-major pass over all (n, k).

    With apply=True this is a sweep step: every strictly improving flip is
    taken and the pass reports whether any happened. With apply=False it is
    a read-only scan that stops at the first improving flip.

    Row/column slices for node n are gathered once and patched incrementally
    after accepted flips (the patches replay exactly the arithmetic
    _apply_flip performs on the full matrices, so local and global views
    stay bitwise identical).
    """
    improved = False
    n_nodes, k_plus = state.z.shape
    if k_plus == 0:
        return False
    w = state.w
    for n in range(n_nodes):
        js = idx.row_js[n]
        is_ = idx.col_is[n]
        y_all = idx.rowcol_y[n]
        # row-side entries first, then column-side, in one working vector
        a_all = np.concatenate([state.logits[n, js], state.logits[is_, n]])
        shifts = np.concatenate([state.left_cache[js, :], state.right_cache[is_, :]])
        sp_all = float(softplus(a_all).sum())
        diag_obs = bool(idx.diag_observed[n])
        if diag_obs:
            a_nn = float(state.logits[n, n])
            y_nn = float(idx.diag_y[n])
            left_n = state.left_cache[n, :].copy()
            right_n = state.right_cache[n, :].copy()

        for k in range(k_plus):
            d = 1.0 - 2.0 * state.z[n, k]
            da = d * shifts[:, k]
            a_new = a_all + da
            sp_new = float(softplus(a_new).sum())
            delta = sp_new - sp_all - float(y_all @ da)
            if diag_obs:
                da_nn = d * (left_n[k] + right_n[k]) + w[k, k]
                delta += -y_nn * da_nn + _softplus_scalar(a_nn + da_nn) - _softplus_scalar(a_nn)
            if delta < -FLIP_TOLERANCE:
                if not apply:
                    return True
                _apply_flip(state, n, k)
                improved = True
                a_all, sp_all = a_new, sp_new
                if diag_obs:
                    a_nn += da_nn
                    left_n += d * w[:, k]
                    right_n += d * w[k, :]
    return improved


def _sweep_once(idx: _MaskIndex, state: ModelState) -> bool:
    """One row-major pass over all (n, k); returns whether any flip happened."""
    return _sweep_pass(idx, state, apply=True)


def _any_improving_flip(idx: _MaskIndex, state: ModelState) -> bool:
    return _sweep_pass(idx, state, apply=False)


def sweep_z(
    y: AdjacencyMatrix, mask: ObservationMask, state: ModelState
) -> tuple[ModelState, bool]:
    """One coordinate pass in fixed row-major order; flips on strict improvement.

    Mutates ``state`` in place and returns it along with whether any
    coordinate moved. The objective never increases.
    """
    improved = _sweep_once(_MaskIndex(y, mask), state)
    return state, improved


def _sweep_to_fixed_point(idx: _MaskIndex, state: ModelState) -> bool:
    improved_any = False
    while _sweep_once(idx, state):
        improved_any = True
    return improved_any


def _sweep_column_to_fixed_point(idx: _MaskIndex, state: ModelState, k: int) -> None:
    """Fixed point of flips restricted to column k (the cheap birth sweep)."""
    n_nodes = state.n
    improved = True
    while improved:
        improved = False
        for n in range(n_nodes):
            if _flip_delta(idx, state, n, k) < -FLIP_TOLERANCE:
                _apply_flip(state, n, k)
                improved = True


def optimize_w(
    y: AdjacencyMatrix, mask: ObservationMask, state: ModelState, config: FitConfig
) -> ModelState:
    """Backtracking gradient descent on W for fixed Z (the objective is convex here).

    Armijo condition with halving steps; the first step's line search starts
    at 1.0 and later searches start from twice the last accepted step
    (capped at 1.0), which keeps trial counts near one once the scale is
    found. Stops when the gradient infinity-norm drops below w_grad_tol,
    after w_max_steps, or when a step can no longer make measurable
    progress. Caches are rebuilt from scratch on exit.

    The hot path works on flat per-observed-entry logit vectors: a trial
    step shifts them by -t * (gradient's logit image), so each Armijo trial
    costs one softplus pass over the observed entries and no matrix product.
    """
    if state.k_plus == 0:
        return state
    z = state.z
    obs_i, obs_j = np.nonzero(mask.observed)
    y_obs = y.entries[obs_i, obs_j].astype(float)
    w = state.w.copy()

    a_obs = ((z @ w) @ z.T)[obs_i, obs_j]
    f = float(softplus(a_obs).sum() - y_obs @ a_obs)
    if not np.isfinite(f):
        raise NumericalError("non-finite objective entering W descent", state)

    step_start = 1.0
    n = state.n
    residual_full = np.zeros((n, n))
    for _ in range(config.w_max_steps):
        residual_full[obs_i, obs_j] = sigmoid(a_obs) - y_obs
        grad = z.T @ residual_full @ z
        if np.abs(grad).max() < config.w_grad_tol:
            break
        grad_sq = float((grad * grad).sum())
        g_obs = ((z @ grad) @ z.T)[obs_i, obs_j]

        step = step_start
        accepted = False
        while step > 1e-20:
            a_new = a_obs - step * g_obs
            f_new = float(softplus(a_new).sum() - y_obs @ a_new)
            if np.isfinite(f_new) and f_new <= f - 1e-4 * step * grad_sq:
                accepted = True
                break
            step *= 0.5
        if not accepted or f_new >= f:
            break  # line search exhausted; no strict descent available
        w -= step * grad
        a_obs = a_new
        step_start = min(1.0, 2.0 * step)
        # stall guard: once per-step progress is below measurement noise,
        # further steps cannot change the outer loop's decisions
        if (f - f_new) < 1e-12 * max(1.0, abs(f)):
            f = f_new
            break
        f = f_new
    state.w = w
    state.rebuild_caches()
    return state


def propose_feature(
    y: AdjacencyMatrix,
    mask: ObservationMask,
    state: ModelState,
    config: FitConfig,
    rng: np.random.Generator,
) -> ModelState:
    """Candidate state with one extra community, optimized but not yet accepted.

    Appends a zero membership column and turns it on for one uniformly drawn
    node; borders W with Gaussian(0, sigma_w^2) entries (new row first, then
    the new column); then descends on the full W and sweeps the candidate's
    coordinates to a fixed point. The input state is not mutated.
    """
    n_nodes = state.n
    k = state.k_plus
    node = int(rng.integers(n_nodes))

    z_new = np.zeros((n_nodes, k + 1))
    z_new[:, :k] = state.z
    z_new[node, k] = 1.0

    w_new = np.zeros((k + 1, k + 1))
    w_new[:k, :k] = state.w
    border = rng.normal(0.0, config.sigma_w, 2 * k + 1)
    w_new[k, :] = border[: k + 1]
    w_new[:k, k] = border[k + 1 :]

    candidate = ModelState.from_factors(z_new, w_new, state.lam)
    optimize_w(y, mask, candidate, config)
    idx = _MaskIndex(y, mask)
    if config.birth_sweep_full:
        _sweep_to_fixed_point(idx, candidate)
    else:
        _sweep_column_to_fixed_point(idx, candidate, k)
    return candidate


def prune_empty_features(state: ModelState) -> ModelState:
    """Drop all-zero membership columns (and their W rows/columns) in place.

    Inert columns contribute exactly zero to every logit, so the logit cache
    is kept as-is; only the penalty drops, by lam^2 per removed column.
    """
    occupancy = state.z.sum(axis=0)
    keep = occupancy > 0
    if keep.all():
        return state
    state.z = state.z[:, keep]
    state.w = state.w[np.ix_(keep, keep)]
    state.left_cache = state.z @ state.w.T
    state.right_cache = state.z @ state.w
    return state


def fit(
    y: AdjacencyMatrix,
    mask: ObservationMask,
    config: FitConfig,
    on_iteration=None,
) -> FitReport:
    """Run the full greedy loop and return its report.

    Each outer iteration: sweep Z to a one-flip fixed point, descend on W,
    prune empty communities, then births_per_iter grow-by-one proposals,
    each accepted only if it strictly lowers the objective. The run stops
    when an iteration's relative improvement falls below rel_tol, the last
    proposal was rejected, and no single coordinate flip can improve the
    final state (so the returned state is a one-flip local minimum), or at
    max_outer_iters.

    ``on_iteration(iteration, state, elapsed_seconds)``, if given, is called
    after each outer iteration with the cumulative wall-clock time.

    Deterministic for a fixed config: one RNG stream seeded with config.seed
    drives initialization and every birth proposal.
    """
    if y.n != mask.n:
        raise ValueError(f"adjacency n={y.n} and mask n={mask.n} disagree")
    rng = np.random.default_rng(config.seed)
    state = init_state(y.n, config, rng=rng)
    idx = _MaskIndex(y, mask)
    report = FitReport()
    t_start = time.perf_counter()
    q = objective(y, mask, state)

    for iteration in range(config.max_outer_iters):
        t_iter = time.perf_counter()
        q_start = q

        _sweep_to_fixed_point(idx, state)
        optimize_w(y, mask, state, config)
        state = prune_empty_features(state)

        last_birth_accepted = False
        for _ in range(config.births_per_iter):
            candidate = propose_feature(y, mask, state, config, rng)
            q_current = objective(y, mask, state)
            q_candidate = objective(y, mask, candidate)
            accepted = q_candidate < q_current - FLIP_TOLERANCE
            if accepted:
                state = candidate
            report.accepted_births.append(accepted)
            last_birth_accepted = accepted

        q = objective(y, mask, state)
        report.objective_trace.append(q)
        report.k_trace.append(state.k_plus)
        report.elapsed.append(time.perf_counter() - t_iter)
        if on_iteration is not None:
            on_iteration(iteration, state, time.perf_counter() - t_start)

        rel_improvement = (q_start - q) / max(abs(q_start), 1e-12)
        if rel_improvement < config.rel_tol and not last_birth_accepted:
            # declare convergence only from a genuine one-flip local minimum:
            # the W update may have shifted some coordinate's best value
            if not _any_improving_flip(idx, state):
                report.converged = True
                break

    report.final_state = state
    return report
