"""Twin contrastive clustering for dense feature vectors."""

from ._core import (
    Checkpoint,
    ConfigError,
    DataError,
    Dataset,
    NumericError,
    Report,
    adjusted_rand_index,
    assign,
    boost,
    clustering_accuracy,
    evaluate,
    gen_blobs,
    load_checkpoint,
    load_vectors,
    majority_vote_accuracy,
    nmi,
    save_checkpoint,
    save_vectors,
    train,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "DataError",
    "Dataset",
    "NumericError",
    "Report",
    "adjusted_rand_index",
    "assign",
    "boost",
    "clustering_accuracy",
    "evaluate",
    "gen_blobs",
    "load_checkpoint",
    "load_vectors",
    "majority_vote_accuracy",
    "nmi",
    "save_checkpoint",
    "save_vectors",
    "train",
]

__version__ = "0.1.0"
