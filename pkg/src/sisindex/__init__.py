"""Semantic Indexing Structure for approximate nearest-neighbour retrieval.

Database items are posted into the blocks of their top-``alpha`` semantic
Big Classes; a query searches only the deduplicated union of its top-``beta``
blocks.
"""

from .errors import FormatError, MissingFeatureError, RangeError, SisError, ValidationError, VersionError
from .features import FeatureRecord, FeatureStore
from .index import Scope, SisIndex, build, build_from_matrix, expected_scope, scope_ratio, select_scope
from .kernels import BACKEND
from .retrieval import (
    DenseScorer,
    KeypointScorer,
    RankedResult,
    adjust_score,
    linear_scan,
    make_scorer,
    rank_scope,
    score_dense,
    score_keypoints,
    semantic_retrieve,
)
from .taxonomy import BigClassMap, ClassProbabilities, aggregate, load_taxonomy, top_k

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BigClassMap",
    "ClassProbabilities",
    "DenseScorer",
    "FeatureRecord",
    "FeatureStore",
    "FormatError",
    "KeypointScorer",
    "MissingFeatureError",
    "RangeError",
    "RankedResult",
    "Scope",
    "SisError",
    "SisIndex",
    "ValidationError",
    "VersionError",
    "adjust_score",
    "aggregate",
    "build",
    "build_from_matrix",
    "expected_scope",
    "linear_scan",
    "load_taxonomy",
    "make_scorer",
    "rank_scope",
    "scope_ratio",
    "score_dense",
    "score_keypoints",
    "select_scope",
    "semantic_retrieve",
    "top_k",
]
