"""Overlapping latent-feature graph models: deterministic fitting and link prediction.

Nodes carry binary community-membership vectors; a pair links with
probability sigma(z_i^T W z_j). Fitting minimizes the masked cross-entropy
plus a penalty per active community, by greedy coordinate sweeps over the
memberships, convex descent on W, and grow-by-one community proposals that
are kept only when they lower the objective. The community count is learned,
not fixed in advance.
"""

from .errors import LaftrError, NumericalError, ParseError, UndefinedMetricError
from .evaluation import (
    ScoredPairs,
    SplitResult,
    auc_from_scores,
    auc_roc,
    cross_validate_lambda,
    evaluate_split,
    predict_links,
    run_splits,
)
from .generator import (
    IbpStats,
    block_weights,
    ibp_log_prior,
    planted_blocks,
    sample_edges,
    sample_ibp,
    sample_lfrm,
)
from .graph import (
    AdjacencyMatrix,
    ObservationMask,
    load_dense_matrix,
    load_edge_list,
    load_mask,
    split_observations,
    write_dense,
    write_mask,
)
from .model import (
    ModelState,
    bernoulli_bregman,
    link_probability,
    negative_log_likelihood,
    nll_gradient_w,
    objective,
    scaled_log_partition,
    sigmoid,
    softplus,
)
from .optimizer import (
    FitConfig,
    FitReport,
    delta_objective_flip,
    fit,
    init_state,
    optimize_w,
    propose_feature,
    prune_empty_features,
    sweep_z,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMatrix",
    "FitConfig",
    "FitReport",
    "IbpStats",
    "LaftrError",
    "ModelState",
    "NumericalError",
    "ObservationMask",
    "ParseError",
    "ScoredPairs",
    "SplitResult",
    "UndefinedMetricError",
    "auc_from_scores",
    "auc_roc",
    "bernoulli_bregman",
    "block_weights",
    "cross_validate_lambda",
    "delta_objective_flip",
    "evaluate_split",
    "fit",
    "ibp_log_prior",
    "init_state",
    "link_probability",
    "load_dense_matrix",
    "load_edge_list",
    "load_mask",
    "negative_log_likelihood",
    "nll_gradient_w",
    "objective",
    "optimize_w",
    "planted_blocks",
    "predict_links",
    "propose_feature",
    "prune_empty_features",
    "run_splits",
    "sample_edges",
    "sample_ibp",
    "sample_lfrm",
    "scaled_log_partition",
    "sigmoid",
    "softplus",
    "split_observations",
    "sweep_z",
    "write_dense",
    "write_mask",
]
