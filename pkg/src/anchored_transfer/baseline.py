"""Non-transfer comparators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matcore import ShapeError, as_matrix, truncated_svd
from .project import AnchoredBasis
from .transfer import TransferConfig, transfer_altproj


@dataclass(frozen=True)
class BaselineResult:
    l_hat: np.ndarray
    s_hat: np.ndarray
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    half_step_trace: list = field(default_factory=list)


def altproj_lowrank_sparse(y, rank: int, sparsity: int, tolerance: float = 1e-8,
                           max_iterations: int = 100) -> BaselineResult:
    """Low-rank plus sparse alternating projection without any transferred structure.

    This is the transfer loop run with empty anchors, ``rank`` innovation
    directions and a zero sparse anchor, so comparisons against the transfer
    estimator differ only in the anchoring.
    """
    y = as_matrix(y)
    p, q = y.shape
    if rank < 0 or rank > min(p, q):
        raise ShapeError(f"rank {rank} outside [0, {min(p, q)}]")
    cfg = TransferConfig(rank_increment=rank, edit_budget=sparsity,
                         tolerance=tolerance, max_iterations=max_iterations)
    res = transfer_altproj(y, AnchoredBasis.empty(p, q, rank), np.zeros_like(y), cfg)
    return BaselineResult(res.l_hat2.value, res.s_hat2, res.iterations, res.converged,
                          res.objective_trace, res.half_step_trace)


def pca_truncate(y, rank: int) -> np.ndarray:
    return truncated_svd(y, rank).reconstruct()
