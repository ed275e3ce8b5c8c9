"""Anchored low-rank projection and sparse-edit projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matcore import RANK_TOL, ShapeError, as_matrix, hard_threshold_topk, is_orthonormal, truncated_svd


@dataclass(frozen=True)
class AnchoredBasis:
    """Embedded source subspaces plus the number of innovation directions."""

    u_anchor: np.ndarray
    v_anchor: np.ndarray
    rank_increment: int

    def __post_init__(self):
        u, v = self.u_anchor, self.v_anchor
        if u.ndim != 2 or v.ndim != 2 or u.shape[1] != v.shape[1]:
            raise ShapeError("anchors must be 2-D with equal column counts")
        if self.rank_increment < 0:
            raise ValueError("rank_increment must be non-negative")
        if u.shape[1] + self.rank_increment > min(u.shape[0], v.shape[0]):
            raise ShapeError("anchor rank plus increment exceeds the ambient dimension")
        if not (is_orthonormal(u) and is_orthonormal(v)):
            raise ValueError("anchors must have orthonormal columns")

    @classmethod
    def empty(cls, p: int, q: int, rank_increment: int) -> "AnchoredBasis":
        return cls(np.zeros((p, 0)), np.zeros((q, 0)), rank_increment)

    @property
    def anchor_rank(self) -> int:
        return self.u_anchor.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.u_anchor.shape[0], self.v_anchor.shape[0]


@dataclass(frozen=True)
class AnchoredLowRank:
    u_full: np.ndarray
    v_full: np.ndarray
    coeff: np.ndarray
    value: np.ndarray


def _strip_anchors(m: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # (I - UU^T) m (I - VV^T) without forming the p x p projectors
    if u.shape[1] == 0:
        return m.copy()
    utm = u.T @ m
    mv = m @ v
    return m - u @ utm - mv @ v.T + u @ (utm @ v) @ v.T


def anchored_lowrank_proj(m, basis: AnchoredBasis, refine: bool = True) -> AnchoredLowRank:
    """Keep the anchored subspaces and add the leading innovation directions.

    The innovation directions start as the top ``rank_increment`` singular
    vectors of ``m`` with both anchor spans removed, and the coefficient block
    is ``u_full.T @ m @ v_full``.

    Those directions ignore the cross blocks between the anchors and the
    innovation, so they need not give the best fit within the anchored set.
    With ``refine`` they are improved by alternating exact maximization of
    ``||u_full.T @ m @ v_full||_F`` over one side at a time, from three
    deterministic starts; the best result is kept. ``refine=False`` returns
    the unrefined directions.
    """
    m = as_matrix(m)
    if m.shape != basis.shape:
        raise ShapeError(f"matrix {m.shape} does not match basis {basis.shape}")
    u0, v0 = basis.u_anchor, basis.v_anchor
    resid = _strip_anchors(m, u0, v0)
    innov = truncated_svd(resid, basis.rank_increment, against_u=u0, against_v=v0)
    u_d, v_d = innov.u, innov.v
    if refine and basis.anchor_rank and basis.rank_increment:
        u_d, v_d = _refine_innovation(m, u0, v0, u_d, v_d)
    u_full = np.hstack([u0, u_d])
    v_full = np.hstack([v0, v_d])
    coeff = u_full.T @ m @ v_full
    value = u_full @ coeff @ v_full.T
    return AnchoredLowRank(u_full, v_full, coeff, value)


REFINE_TOL = 1e-13
REFINE_MAX_SWEEPS = 500


def _captured(m, u0, v0, u_d, v_d) -> float:
    c = np.hstack([u0, u_d]).T @ m @ np.hstack([v0, v_d])
    return float(np.sum(c * c))


def _best_left(m, u0, v_full, k):
    # maximizer of ||[u0 U]^T m v_full||_F over orthonormal U orthogonal to u0
    return _top_left(m if v_full is None else m @ v_full, u0, k)


def _top_left(a, u0, k):
    a = a - u0 @ (u0.T @ a)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s[0] > 0 and s[k - 1] > RANK_TOL * s[0]:
        return u[:, :k]
    return truncated_svd(a, k, against_u=u0).u


def _ascend(m, u0, v0, u_d, v_d):
    k = u_d.shape[1]
    g = _captured(m, u0, v0, u_d, v_d)
    for _ in range(REFINE_MAX_SWEEPS):
        u_d = _best_left(m, u0, np.hstack([v0, v_d]), k)
        v_d = _best_left(m.T, v0, np.hstack([u0, u_d]), k)
        g_new = _captured(m, u0, v0, u_d, v_d)
        done = g_new - g <= REFINE_TOL * max(g_new, 1e-300)
        g = g_new
        if done:
            break
    return g, u_d, v_d


def _refine_innovation(m, u0, v0, u_d, v_d):
    k = u_d.shape[1]
    col_u = _best_left(m, u0, None, k)
    row_v = _best_left(m.T, v0, None, k)
    starts = [
        (u_d, v_d),
        (col_u, _best_left(m.T, v0, np.hstack([u0, col_u]), k)),
        (_best_left(m, u0, np.hstack([v0, row_v]), k), row_v),
    ]
    best = None
    for start in starts:
        out = _ascend(m, u0, v0, *start)
        if best is None or out[0] > best[0]:
            best = out
    return best[1], best[2]


def refit_on_factors(m, u_full: np.ndarray, v_full: np.ndarray) -> AnchoredLowRank:
    """Best fit of ``m`` with column space in ``u_full`` and row space in ``v_full``."""
    m = as_matrix(m)
    coeff = u_full.T @ m @ v_full
    return AnchoredLowRank(u_full, v_full, coeff, u_full @ coeff @ v_full.T)


def sparse_edit_proj(m, anchor_s0, edit_budget: int) -> np.ndarray:
    """``anchor_s0`` plus the ``edit_budget`` largest entries of ``m - anchor_s0``."""
    m = as_matrix(m)
    s0 = as_matrix(anchor_s0)
    if m.shape != s0.shape:
        raise ShapeError(f"shape mismatch: {m.shape} vs {s0.shape}")
    return s0 + hard_threshold_topk(m - s0, edit_budget)
