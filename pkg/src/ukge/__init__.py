"""Knowledge-graph embeddings on pseudo-hyperboloids.

Entities live on a constant-curvature pseudo-Riemannian manifold whose
signature interpolates between hyperbolic and spherical space; relations act
on it by norm-preserving linear maps built from 2x2 rotation, reflection and
hyperbolic-rotation blocks.  See the README for the command-line workflow.
"""

from .errors import (
    CheckpointError,
    ConfigurationError,
    CorruptHeaderError,
    DegeneratePointError,
    DigestMismatchError,
    DimensionError,
    DivergenceError,
    EmptySplitError,
    IdLookupError,
    NameLookupError,
    NonFiniteGradientError,
    NumericError,
    ParseError,
    PreconditionError,
    SignatureMismatchError,
    StateError,
    TruncatedPayloadError,
    UkgeError,
    UndefinedMetricError,
    VersionMismatchError,
)
from .geometry import (
    Signature,
    dist_hyper,
    dist_manhattan,
    dist_sphere,
    manifold_defect,
    on_manifold,
    phi,
    project_conic,
    psi,
    psi_inv,
    qdot,
)
from .kgdata import (
    TripleStore,
    augment_inverse,
    krackhardt_score,
    load_triples,
    make_synthetic,
)
from .model import Model, init, load, save, score, score_candidates
from .operators import (
    RelationParams,
    as_dense,
    count_operations,
    j_orth_defect,
    lorentz_boost,
    relation_apply,
    relation_param_count,
    relation_transform,
)
from .training import TrainConfig, bce_loss, fit, gradients, sample_negatives
from .evaluation import EvalReport, aggregate_ranks, evaluate, filtered_rank

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigurationError",
    "CorruptHeaderError",
    "DegeneratePointError",
    "DigestMismatchError",
    "DimensionError",
    "DivergenceError",
    "EmptySplitError",
    "EvalReport",
    "IdLookupError",
    "Model",
    "NameLookupError",
    "NonFiniteGradientError",
    "NumericError",
    "ParseError",
    "PreconditionError",
    "RelationParams",
    "Signature",
    "SignatureMismatchError",
    "StateError",
    "TrainConfig",
    "TripleStore",
    "TruncatedPayloadError",
    "UkgeError",
    "UndefinedMetricError",
    "VersionMismatchError",
    "aggregate_ranks",
    "as_dense",
    "augment_inverse",
    "bce_loss",
    "count_operations",
    "dist_hyper",
    "dist_manhattan",
    "dist_sphere",
    "evaluate",
    "filtered_rank",
    "fit",
    "gradients",
    "init",
    "j_orth_defect",
    "krackhardt_score",
    "load",
    "load_triples",
    "lorentz_boost",
    "make_synthetic",
    "manifold_defect",
    "on_manifold",
    "phi",
    "project_conic",
    "psi",
    "psi_inv",
    "qdot",
    "relation_apply",
    "relation_param_count",
    "relation_transform",
    "sample_negatives",
    "save",
    "score",
    "score_candidates",
]
