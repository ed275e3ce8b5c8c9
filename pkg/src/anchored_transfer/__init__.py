"""Anchored transfer estimation for low-rank plus sparse matrices."""
from ._kernels import BACKEND
from .baseline import BaselineResult, altproj_lowrank_sparse, pca_truncate
from .embed import EmbedShape, embed_factor, embed_matrix
from .matcore import (
    MatrixFormatError,
    ShapeError,
    SvdConvergenceError,
    SvdTriple,
    hard_threshold_topk,
    read_matrix,
    sin_theta_distance,
    truncated_svd,
    write_matrix,
)
from .project import AnchoredBasis, AnchoredLowRank, anchored_lowrank_proj, sparse_edit_proj
from .transfer import (
    SourceEstimate,
    TransferConfig,
    TransferResult,
    coherence,
    estimate_source,
    incoherence_check,
    make_anchors,
    source_from_components,
    transfer_altproj,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BaselineResult", "altproj_lowrank_sparse", "pca_truncate",
    "EmbedShape", "embed_factor", "embed_matrix",
    "MatrixFormatError", "ShapeError", "SvdConvergenceError", "SvdTriple",
    "hard_threshold_topk", "read_matrix", "sin_theta_distance", "truncated_svd", "write_matrix",
    "AnchoredBasis", "AnchoredLowRank", "anchored_lowrank_proj", "sparse_edit_proj",
    "SourceEstimate", "TransferConfig", "TransferResult", "coherence", "estimate_source",
    "incoherence_check", "make_anchors", "source_from_components", "transfer_altproj",
]
