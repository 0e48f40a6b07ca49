"""Held-out link prediction scoring and hyperparameter cross-validation."""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError
from .graph import AdjacencyMatrix, ObservationMask, split_observations
from .model import ModelState, link_probability
from .optimizer import FitConfig, FitReport, fit

__all__ = [
    "ScoredPairs",
    "SplitResult",
    "predict_links",
    "auc_roc",
    "auc_from_scores",
    "evaluate_split",
    "cross_validate_lambda",
    "run_splits",
]


@dataclass(frozen=True)
class ScoredPairs:
    """Scored node pairs with binary ground-truth labels.

    Stored as parallel arrays; every (i, j) pair may appear at most once and
    all scores must be finite.
    """

    i: np.ndarray
    j: np.ndarray
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int8)
        if not (i.shape == j.shape == scores.shape == labels.shape):
            raise ValueError("i, j, scores, labels must have identical shapes")
        if not np.isfinite(scores).all():
            raise ValueError("scores must be finite")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        pairs = set(zip(i.tolist(), j.tolist()))
        if len(pairs) != i.size:
            raise ValueError("duplicate (i, j) pair")
        for name, arr in (("i", i), ("j", j), ("scores", scores), ("labels", labels)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_lists(cls, pairs, scores, labels) -> "ScoredPairs":
        pairs = list(pairs)
        return cls(
            i=np.array([p[0] for p in pairs], dtype=np.int64),
            j=np.array([p[1] for p in pairs], dtype=np.int64),
            scores=np.asarray(scores, dtype=float),
            labels=np.asarray(labels, dtype=np.int8),
        )


def predict_links(state: ModelState, pairs) -> list[float]:
    """Link probability for each (i, j) pair, in order."""
    return [link_probability(state, i, j) for i, j in pairs]


def auc_from_scores(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties at half credit."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC needs both classes; got {n_pos} positives and {n_neg} negatives"
        )
    ranks = rankdata(scores)  # average ranks give tied pairs half credit
    u = float(ranks[labels == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auc_roc(scored: ScoredPairs) -> float:
    return auc_from_scores(scored.scores, scored.labels)


def _test_entries(test_mask: ObservationMask) -> np.ndarray:
    return np.argwhere(test_mask.observed)


def evaluate_split(
    y: AdjacencyMatrix,
    train_mask: ObservationMask,
    test_mask: ObservationMask,
    config: FitConfig,
) -> tuple[float, FitReport]:
    """Fit on the train mask and score every test entry by AUC.

    Only the train mask is handed to the fitter, so held-out entries cannot
    influence the learned model.
    """
    if (train_mask.observed & test_mask.observed).any():
        raise ValueError("train and test masks overlap")
    report = fit(y, train_mask, config)
    entries = _test_entries(test_mask)
    scores = np.array([link_probability(report.final_state, i, j) for i, j in entries])
    labels = y.entries[entries[:, 0], entries[:, 1]] if entries.size else np.array([])
    return auc_from_scores(scores, labels), report


def cross_validate_lambda(
    y: AdjacencyMatrix,
    train_mask: ObservationMask,
    grid,
    folds: int,
    seed: int,
    config: FitConfig,
) -> tuple[float, list[tuple[float, float]]]:
    """k-fold cross-validation of the penalty weight over the observed train entries.

    Entries are permuted with the given seed and dealt into ``folds`` nearly
    equal folds; each grid value is scored by mean validation AUC over the
    usable folds (folds whose validation labels are single-class are skipped
    with a warning). Returns the best value (ties go to the smaller lambda)
    and the full (lambda, mean_auc) table in grid order.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("lambda grid must be non-empty")
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")

    entries = np.argwhere(train_mask.observed)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(entries))
    fold_chunks = np.array_split(order, folds)

    # fold usability depends only on the labels, not on lambda
    usable: list[tuple[ObservationMask, ObservationMask]] = []
    for f, chunk in enumerate(fold_chunks):
        val_entries = entries[chunk]
        labels = y.entries[val_entries[:, 0], val_entries[:, 1]]
        if chunk.size == 0 or len(np.unique(labels)) < 2:
            warnings.warn(f"fold {f} skipped: single-class validation labels")
            continue
        val = np.zeros((y.n, y.n), dtype=bool)
        val[val_entries[:, 0], val_entries[:, 1]] = True
        tr = train_mask.observed & ~val
        usable.append((ObservationMask(y.n, tr), ObservationMask(y.n, val)))
    if not usable:
        raise UndefinedMetricError("every cross-validation fold was single-class")

    table: list[tuple[float, float]] = []
    for lam in grid:
        lam_config = replace(config, lam=lam)
        aucs = [evaluate_split(y, tr, val, lam_config)[0] for tr, val in usable]
        table.append((lam, float(np.mean(aucs))))

    best_lambda = min(table, key=lambda row: (-row[1], row[0]))[0]
    return best_lambda, table


@dataclass(frozen=True)
class SplitResult:
    """Outcome of one seeded train/test split."""

    seed: int
    lam: float
    k_final: int
    auc: float
    seconds: float
    train_mask: ObservationMask
    test_mask: ObservationMask


def _run_one_split(
    y: AdjacencyMatrix,
    split_seed: int,
    train_fraction: float,
    tie_symmetric: bool | None,
    config: FitConfig,
) -> SplitResult:
    t0 = time.perf_counter()
    train, test = split_observations(y, train_fraction, split_seed, tie_symmetric)
    split_config = replace(config, seed=split_seed)
    auc, report = evaluate_split(y, train, test, split_config)
    return SplitResult(
        seed=split_seed,
        lam=config.lam,
        k_final=report.final_state.k_plus,
        auc=auc,
        seconds=time.perf_counter() - t0,
        train_mask=train,
        test_mask=test,
    )


def run_splits(
    y: AdjacencyMatrix,
    n_splits: int,
    train_fraction: float,
    config: FitConfig,
    tie_symmetric: bool | None = None,
    max_workers: int = 1,
) -> list[SplitResult]:
    """Repeat the split/fit/score protocol for seeds config.seed .. config.seed+n_splits-1.

    Splits are independent, so they may run on a worker pool; results come
    back ordered by seed regardless of completion order.
    """
    if n_splits < 1:
        raise ValueError(f"n_splits must be >= 1, got {n_splits}")
    seeds = [config.seed + s for s in range(n_splits)]
    if max_workers <= 1:
        return [
            _run_one_split(y, s, train_fraction, tie_symmetric, config) for s in seeds
        ]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [
            pool.submit(_run_one_split, y, s, train_fraction, tie_symmetric, config)
            for s in seeds
        ]
        return [f.result() for f in futures]
