"""Zero-padding embedding of source-dimension objects into the target space.

The source block always sits in the top-left corner.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matcore import ShapeError, as_matrix


@dataclass(frozen=True)
class EmbedShape:
    target_rows: int
    target_cols: int
    block_row_offset: int = 0
    block_col_offset: int = 0

    def __post_init__(self):
        if self.target_rows < 1 or self.target_cols < 1:
            raise ShapeError("target dimensions must be positive")
        if self.block_row_offset != 0 or self.block_col_offset != 0:
            raise ShapeError("only the top-left block placement is supported")


def embed_matrix(a, shape: EmbedShape) -> np.ndarray:
    a = as_matrix(a)
    p, q = a.shape
    if p > shape.target_rows or q > shape.target_cols:
        raise ShapeError(f"cannot embed {p}x{q} into {shape.target_rows}x{shape.target_cols}")
    out = np.zeros((shape.target_rows, shape.target_cols))
    out[:p, :q] = a
    return out


def embed_factor(u, target_rows: int) -> np.ndarray:
    """Append zero rows to an orthonormal factor."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ShapeError("factor must be 2-D")
    if u.shape[0] > target_rows:
        raise ShapeError(f"cannot embed {u.shape[0]} rows into {target_rows}")
    out = np.zeros((target_rows, u.shape[1]))
    out[: u.shape[0]] = u
    return out
