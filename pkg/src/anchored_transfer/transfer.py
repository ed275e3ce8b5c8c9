"""Transfer alternating projections, source estimation, and incoherence diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embed import EmbedShape, embed_factor, embed_matrix
from .matcore import (
    RANK_TOL,
    ShapeError,
    SvdTriple,
    as_matrix,
    full_svd,
    truncated_svd,
)
from .project import (
    AnchoredBasis,
    AnchoredLowRank,
    anchored_lowrank_proj,
    refit_on_factors,
    sparse_edit_proj,
)

DENOM_FLOOR = 1e-12


@dataclass(frozen=True)
class SourceEstimate:
    l_hat: np.ndarray
    s_hat: np.ndarray
    svd: SvdTriple
    rank: int
    sparsity: int


@dataclass(frozen=True)
class TransferConfig:
    rank_increment: int
    edit_budget: int
    tolerance: float = 1e-8
    max_iterations: int = 100
    incoherence_mu: float | None = None
    monotone: bool = True
    # refine the innovation directions inside the loop (exact constrained fit)
    refine_projection: bool = False

    def __post_init__(self):
        if self.rank_increment < 0 or self.edit_budget < 0:
            raise ValueError("rank_increment and edit_budget must be non-negative")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.incoherence_mu is not None and not self.incoherence_mu > 0:
            raise ValueError("incoherence_mu must be positive")


@dataclass(frozen=True)
class TransferResult:
    l_hat2: AnchoredLowRank
    s_hat2: np.ndarray
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    # objective after each sparse half-step, paired with objective_trace
    half_step_trace: list = field(default_factory=list)
    # iterations where the descent safeguard replaced the fresh low-rank candidate
    safeguard_steps: int = 0

    @property
    def estimate(self) -> np.ndarray:
        return self.l_hat2.value + self.s_hat2


def _fro(m: np.ndarray) -> float:
    return float(np.linalg.norm(m))


def _objective(y, l, s) -> float:
    r = y - l - s
    return 0.5 * float(np.sum(r * r))


def transfer_altproj(y2, basis: AnchoredBasis, s0, cfg: TransferConfig) -> TransferResult:
    """Alternate sparse-edit and anchored low-rank projections from ``L = 0``.

    Stops when the summed relative Frobenius changes of ``L`` and ``S``
    (denominators floored at 1e-12) fall to ``cfg.tolerance`` or below, or
    after ``cfg.max_iterations`` passes.

    Each low-rank step keeps the anchors and takes the leading innovation
    directions of the anchor-stripped residual; ``cfg.refine_projection``
    switches to the refined exact-fit projection. The unrefined step is not
    an exact minimizer over its constraint set. With ``cfg.monotone`` (the
    default) a fresh low-rank candidate that fits worse than a refit on the
    previous factors, or than the previous iterate itself, is replaced by
    the better of those, so the objective never increases.
    """
    y = as_matrix(y2)
    s_anchor = as_matrix(s0)
    if y.shape != basis.shape or s_anchor.shape != y.shape:
        raise ShapeError(f"inconsistent shapes: y {y.shape}, basis {basis.shape}, s0 {s_anchor.shape}")

    l_t = np.zeros_like(y)
    s_t = s_anchor
    low_t = None
    trace: list[float] = []
    half: list[float] = []
    converged = False
    guarded = 0
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        s_next = sparse_edit_proj(y - l_t, s_anchor, cfg.edit_budget)
        obj_half = _objective(y, l_t, s_next)
        half.append(obj_half)
        m = y - s_next
        low = anchored_lowrank_proj(m, basis, refine=cfg.refine_projection)
        obj = _objective(y, low.value, s_next)
        if cfg.monotone and low_t is not None and obj > obj_half:
            guarded += 1
            refit = refit_on_factors(m, low_t.u_full, low_t.v_full)
            obj_refit = _objective(y, refit.value, s_next)
            low, obj = (refit, obj_refit) if obj_refit <= obj_half else (low_t, obj_half)
        l_next = low.value
        trace.append(obj)
        change = (_fro(l_next - l_t) / max(_fro(l_t), DENOM_FLOOR)
                  + _fro(s_next - s_t) / max(_fro(s_t), DENOM_FLOOR))
        l_t, s_t, low_t = l_next, s_next, low
        if change <= cfg.tolerance:
            converged = True
            break
    return TransferResult(low_t, s_t, it, converged, trace, half, guarded)


def estimate_source(y1, rank: int, sparsity: int, tolerance: float = 1e-8,
                    max_iterations: int = 100) -> SourceEstimate:
    """Source low-rank plus sparse estimate.

    With ``sparsity == 0`` this is the rank-``rank`` truncated SVD; otherwise
    the baseline alternating projection is run and its low-rank part factored.
    """
    y = as_matrix(y1)
    if rank < 0 or rank > min(y.shape):
        raise ShapeError(f"rank {rank} outside [0, {min(y.shape)}]")
    if sparsity < 0 or sparsity > y.size:
        raise ValueError(f"sparsity {sparsity} outside [0, {y.size}]")
    if sparsity == 0:
        svd = truncated_svd(y, rank)
        return SourceEstimate(svd.reconstruct(), np.zeros_like(y), svd, rank, 0)
    from .baseline import altproj_lowrank_sparse

    base = altproj_lowrank_sparse(y, rank, sparsity, tolerance, max_iterations)
    svd = truncated_svd(base.l_hat, rank)
    return SourceEstimate(base.l_hat, base.s_hat, svd, rank, sparsity)


def source_from_components(l1, s1, rank: int | None = None) -> SourceEstimate:
    """Wrap known source components; ``rank`` defaults to the numerical rank of ``l1``."""
    l1 = as_matrix(l1)
    s1 = as_matrix(s1)
    if rank is None:
        s = full_svd(l1).s
        rank = 0 if s.size == 0 or s[0] == 0 else int(np.count_nonzero(s > RANK_TOL * s[0]))
    svd = truncated_svd(l1, rank)
    return SourceEstimate(l1, s1, svd, rank, int(np.count_nonzero(s1)))


def make_anchors(src: SourceEstimate, p2: int, q2: int, delta_r: int):
    """Embedded anchor subspaces and the embedded sparse anchor ``S0``."""
    p1, q1 = src.l_hat.shape
    if p2 < p1 or q2 < q1:
        raise ShapeError(f"target {p2}x{q2} smaller than source {p1}x{q1}")
    u = embed_factor(src.svd.u, p2)
    v = embed_factor(src.svd.v, q2)
    s0 = embed_matrix(src.s_hat, EmbedShape(p2, q2))
    return AnchoredBasis(u, v, delta_r), s0


def coherence(m, rank: int | None = None) -> float:
    """Largest scaled row norm of the singular factors of ``m``.

    Rows of the left factor are scaled by ``sqrt(p / r)`` and rows of the
    right factor by ``sqrt(q / r)``. ``r`` defaults to the numerical rank;
    the zero matrix has coherence 0.
    """
    a = as_matrix(m)
    p, q = a.shape
    svd = full_svd(a)
    if rank is None:
        s = svd.s
        rank = 0 if s.size == 0 or s[0] == 0 else int(np.count_nonzero(s > RANK_TOL * s[0]))
    if rank == 0:
        return 0.0
    u = svd.u[:, :rank]
    v = svd.v[:, :rank]
    mu_u = math.sqrt(p / rank) * float(np.max(np.linalg.norm(u, axis=1)))
    mu_v = math.sqrt(q / rank) * float(np.max(np.linalg.norm(v, axis=1)))
    return max(mu_u, mu_v)


def incoherence_check(l: AnchoredLowRank, mu: float) -> tuple[bool, float]:
    """Diagnostic only: does ``l.value`` satisfy mu-incoherence?"""
    measured = coherence(l.value)
    return measured <= mu, measured


SPARSE_CHANGE_C = 0.1


def sparse_change_check(delta_s: int, p2: int, q2: int, mu: float, r2: int,
                        c: float = SPARSE_CHANGE_C) -> tuple[bool, float]:
    """Diagnostic: is ``delta_s <= c * max(p2, q2) / (mu * r2**3)``? Returns the bound too."""
    if r2 < 1 or not mu > 0:
        return True, math.inf
    bound = c * max(p2, q2) / (mu * r2 ** 3)
    return delta_s <= bound, bound
