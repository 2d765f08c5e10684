"""Certified graph unlearning on lazily maintained GPR embeddings.

The package keeps approximate generalized-PageRank node embeddings up to
date under edge/node/feature removals with local forward-push updates,
trains perturbed regularized linear classifiers on them, unlearns via
Newton steps, and accounts the certified-removal privacy budget with
worst-case and data-dependent gradient-residual bounds.
"""

from .errors import (
    ConfigError,
    GraphUnlearnError,
    NotFoundError,
    ParseError,
    SolveError,
    TrainingError,
)
from .graph import EdgeDelta, FeatureStore, Graph, load_dataset, load_edge_list
from .models import LossSpec, OneVsAllModel
from .propagation import (
    EmbeddingMatrix,
    PropagationState,
    apply_batch_removal,
    apply_edge_removal,
    apply_feature_removal,
    apply_node_removal,
    basic_prop,
    init_propagation,
    materialize_embeddings,
)
from .oracle import exact_embeddings, exact_gradient_residual
from .unlearn import (
    BatchRemoval,
    BudgetLedger,
    EdgeRemoval,
    FeatureRemoval,
    NodeRemoval,
    RetrainBaseline,
    StepReport,
    UnlearnEngine,
    data_dependent_bound,
    newton_update,
    privacy_budget,
    worst_case_bound,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "GraphUnlearnError", "NotFoundError", "ParseError",
    "SolveError", "TrainingError",
    "EdgeDelta", "FeatureStore", "Graph", "load_dataset", "load_edge_list",
    "LossSpec", "OneVsAllModel",
    "EmbeddingMatrix", "PropagationState", "init_propagation", "basic_prop",
    "materialize_embeddings", "apply_edge_removal", "apply_feature_removal",
    "apply_node_removal", "apply_batch_removal",
    "exact_embeddings", "exact_gradient_residual",
    "EdgeRemoval", "NodeRemoval", "FeatureRemoval", "BatchRemoval",
    "UnlearnEngine", "RetrainBaseline", "BudgetLedger", "StepReport",
    "newton_update", "worst_case_bound", "data_dependent_bound", "privacy_budget",
    "__version__",
]
