"""Markov transition estimation through transfer denoising of frequency matrices.

The frequency matrix of a chain is ``F = Diag(pi) P``: the stationary joint
law of two consecutive states. A single trajectory gives the empirical
version ``F_hat``, which is denoised with the transfer estimator and turned
back into a transition matrix by a row-wise plug-in.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import count_transitions, simulate_chain
from .matcore import ShapeError, as_matrix, frob_norm, numerical_rank, truncated_svd
from .seeding import make_rng
from .transfer import (
    SourceEstimate,
    TransferConfig,
    TransferResult,
    coherence,
    make_anchors,
    sparse_change_check,
    transfer_altproj,
)

log = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-10
MAX_POWER_ITERATIONS = 100_000
CONSTRUCTION_ATTEMPTS = 20


class NonErgodicError(RuntimeError):
    """Power iteration did not settle on a unique stationary distribution."""


class ConstructionError(RuntimeError):
    """No valid structured chain pair could be built."""


@dataclass(frozen=True)
class MarkovChain:
    transition: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        p = self.transition
        if p.ndim != 2 or p.shape[0] != p.shape[1] or self.stationary.shape != (p.shape[0],):
            raise ShapeError("transition must be square and match the stationary vector")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise ValueError("transition matrix is not row-stochastic")
        pi = self.stationary
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-10:
            raise ValueError("stationary vector is not a probability vector")
        if np.max(np.abs(pi @ p - pi)) > 1e-8:
            raise ValueError("stationary vector is not invariant under the transition matrix")

    @property
    def size(self) -> int:
        return self.transition.shape[0]

    @property
    def frequency(self) -> np.ndarray:
        return self.stationary[:, None] * self.transition


@dataclass(frozen=True)
class MarkovPairSpec:
    p1: int
    p2: int
    rank: int
    rank_increment: int
    sparse_edits: int
    n1: int
    n2: int
    seed: int

    def __post_init__(self):
        if self.p1 < 1 or self.p2 < self.p1:
            raise ValueError("need 1 <= p1 <= p2")
        if self.rank < 1 or self.rank + self.rank_increment > self.p1:
            raise ValueError("need 1 <= rank and rank + rank_increment <= p1")
        if self.rank_increment < 0 or self.sparse_edits < 0:
            raise ValueError("increments must be non-negative")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("trajectory lengths must be positive")


@dataclass(frozen=True)
class MarkovPair:
    source: MarkovChain
    target: MarkovChain
    f1: np.ndarray
    f2: np.ndarray
    l2: np.ndarray
    s2: np.ndarray
    u1: np.ndarray
    v1: np.ndarray
    u2: np.ndarray
    structure_violation: float
    attempt: int
    coherence: float = 0.0
    # sparse-change condition with the default constant; reported, never enforced
    sparse_change_ok: bool = True


def _cdf_rows(p: np.ndarray) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    c = np.cumsum(p, axis=1)
    c /= c[:, -1:]
    # everything from the last positive-probability state on is pinned to 1
    last = p.shape[1] - 1 - np.argmax(p[:, ::-1] > 0, axis=1)
    c[np.arange(p.shape[1])[None, :] >= last[:, None]] = 1.0
    return np.ascontiguousarray(c)


def simulate_trajectory(chain: MarkovChain, length: int, seed: int,
                        start: int | None = None) -> np.ndarray:
    """Trajectory of ``length`` states drawn by inverse-CDF sampling.

    The first state is drawn from the stationary law unless ``start`` is
    given; the first uniform is consumed either way, so later draws agree.
    """
    if length < 1:
        raise ValueError("length must be positive")
    u = make_rng(seed).random(length)
    if start is None:
        x0 = int(simulate_chain(_cdf_rows(chain.stationary), u[:1], 0)[1])
    elif 0 <= start < chain.size:
        x0 = int(start)
    else:
        raise ValueError(f"start state {start} outside [0, {chain.size})")
    return simulate_chain(_cdf_rows(chain.transition), np.ascontiguousarray(u[1:]), x0)


def transition_counts(trajectory, p: int) -> np.ndarray:
    traj = np.ascontiguousarray(trajectory, dtype=np.int64)
    if traj.ndim != 1 or traj.size < 2:
        raise ValueError("trajectory must be 1-D with at least two states")
    if traj.min() < 0 or traj.max() >= p:
        bad = int(np.flatnonzero((traj < 0) | (traj >= p))[0])
        raise ValueError(f"state {int(traj[bad])} at position {bad} outside [0, {p})")
    return count_transitions(traj, p)


def empirical_frequency(trajectory, p: int) -> np.ndarray:
    """Counts of consecutive pairs divided by the number of transitions."""
    counts = transition_counts(trajectory, p)
    return counts / (len(trajectory) - 1)


def stationary_distribution(p_matrix) -> np.ndarray:
    """Left fixed point of ``P`` by power iteration from the uniform vector.

    The iteration runs on the lazy chain ``(I + P) / 2``, which has the same
    fixed points but no periodicity. A second run from a perturbed start must reach the same point; otherwise
    the chain is reported as non-ergodic.
    """
    p = as_matrix(p_matrix)
    k = p.shape[0]
    if p.shape != (k, k):
        raise ShapeError("transition matrix must be square")

    def power(x):
        for _ in range(MAX_POWER_ITERATIONS):
            nxt = 0.5 * (x + x @ p)
            nxt /= nxt.sum()
            if np.sum(np.abs(nxt - x)) <= 1e-12:
                return nxt
            x = nxt
        raise NonErgodicError("power iteration did not converge; chain is likely not ergodic")

    uniform = np.full(k, 1.0 / k)
    pi = power(uniform)
    if k > 1:
        start = 0.5 * uniform
        start[0] += 0.5
        other = power(start)
        if np.sum(np.abs(other - pi)) > 1e-8:
            raise NonErgodicError("stationary distribution is not unique; chain is not irreducible")
    return pi


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    return simplex_project_rows(np.atleast_2d(np.asarray(v, dtype=np.float64)))[0]


def simplex_project_rows(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[1]
    srt = -np.sort(-m, axis=1)
    css = np.cumsum(srt, axis=1) - 1.0
    ks = np.arange(1, n + 1)
    cond = srt - css / ks > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(m.shape[0]), rho] / (rho + 1)
    return np.maximum(m - theta[:, None], 0.0)


def plugin_transition(f_hat) -> np.ndarray:
    """Row-normalize a (denoised) frequency matrix and project rows onto the simplex.

    Rows whose estimated stationary mass is not positive become uniform.
    """
    f = as_matrix(f_hat)
    pi_hat = f.sum(axis=1)
    out = np.full_like(f, 1.0 / f.shape[1])
    live = pi_hat > 0
    if np.any(live):
        out[live] = simplex_project_rows(f[live] / pi_hat[live, None])
    return out


def _mixture_chain(rng, states: int, rank: int) -> tuple[np.ndarray, np.ndarray]:
    # P = A B with row-stochastic A (states x rank) and B (rank x states)
    a = rng.dirichlet(np.ones(rank), size=states)
    b = rng.dirichlet(np.ones(states), size=rank)
    p = a @ b
    p /= p.sum(axis=1, keepdims=True)
    pi = stationary_distribution(p)
    return p, pi[:, None] * p


def _build_once(spec: MarkovPairSpec, attempt: int) -> MarkovPair:
    rng = make_rng(spec.seed, attempt)
    p1, p2 = spec.p1, spec.p2
    new = p2 - p1
    p_src, f1 = _mixture_chain(rng, p1, spec.rank)
    pi1 = f1.sum(axis=1)
    source = MarkovChain(p_src, pi1)
    u1, v1 = _factors(f1, spec.rank)

    if new == 0 and spec.rank_increment == 0 and spec.sparse_edits == 0:
        return MarkovPair(source, source, f1, f1.copy(), f1.copy(), np.zeros_like(f1),
                          u1, v1, u1.copy(), 0.0, attempt)
    if new == 0:
        raise ConstructionError("growth without new states is not supported; need p2 > p1")
    if not 1 <= spec.rank_increment <= new:
        raise ConstructionError(f"rank_increment must lie in [1, {new}] when p2 > p1")
    if spec.sparse_edits < 2:
        raise ConstructionError("at least two sparse edits are needed to connect the new states")

    _, f_new = _mixture_chain(rng, new, spec.rank_increment)
    low = np.zeros((p2, p2))
    low[:p1, :p1] = (p1 / p2) * f1
    low[p1:, p1:] = (new / p2) * f_new
    edit = 2.0 * float(low.max())
    sparse = np.zeros((p2, p2))
    # symmetric old<->new pairs keep row sums equal to column sums;
    # an odd leftover goes on the diagonal of a new state
    pairs = spec.sparse_edits // 2
    if pairs > p1 * new:
        raise ConstructionError("more edit pairs than old/new cross positions")
    for c in rng.permutation(p1 * new)[:pairs]:
        a, b = divmod(int(c), new)
        sparse[a, p1 + b] = edit
        sparse[p1 + b, a] = edit
    if spec.sparse_edits % 2:
        b = p1 + int(rng.integers(new))
        sparse[b, b] = edit
    total = low.sum() + sparse.sum()
    low /= total
    sparse /= total
    f2 = low + sparse
    pi2 = f2.sum(axis=1)
    if np.max(np.abs(pi2 - f2.sum(axis=0))) > 1e-10:
        raise ConstructionError("marginals are inconsistent after renormalization")
    p_tgt = f2 / pi2[:, None]
    pi_check = stationary_distribution(p_tgt)
    if np.max(np.abs(pi_check - pi2)) > 1e-8:
        raise ConstructionError("target chain is not ergodic")
    target = MarkovChain(p_tgt, pi2)
    r2 = spec.rank + spec.rank_increment
    u2, _ = _factors(low, r2)
    resid = low - truncated_svd(low, r2).reconstruct()
    violation = frob_norm(resid) / frob_norm(f2)
    mu = coherence(low, r2)
    ok, _ = sparse_change_check(spec.sparse_edits, p2, p2, mu, r2)
    return MarkovPair(source, target, f1, f2, low, sparse, u1, v1, u2, violation, attempt, mu, ok)


def _factors(f: np.ndarray, rank: int):
    svd = truncated_svd(f, rank)
    return svd.u, svd.v


def build_structured_pair(spec: MarkovPairSpec) -> MarkovPair:
    """Source chain with a rank-``rank`` frequency matrix and a target chain that extends it.

    The target frequency matrix is the scaled embedded source block, plus a
    rank-``rank_increment`` block on the new states (orthogonal to the
    embedded source factors by support), plus ``sparse_edits`` nonnegative
    entries linking old and new states, renormalized to total mass one.
    """
    errors = []
    for attempt in range(CONSTRUCTION_ATTEMPTS):
        try:
            pair = _build_once(spec, attempt)
        except (NonErgodicError, ValueError) as exc:
            errors.append(f"attempt {attempt}: {exc}")
            log.debug("structured pair attempt %d failed: %s", attempt, exc)
            continue
        if numerical_rank(pair.f1) > spec.rank:
            errors.append(f"attempt {attempt}: source rank too high")
            continue
        return pair
    raise ConstructionError("could not build a structured pair:\n" + "\n".join(errors))


def _denoise(f_hat2, src: SourceEstimate, cfg: TransferConfig) -> TransferResult:
    f = as_matrix(f_hat2)
    basis, s0 = make_anchors(src, f.shape[0], f.shape[1], cfg.rank_increment)
    return transfer_altproj(f, basis, s0, cfg)


def transfer_markov_estimate(f_hat2, src: SourceEstimate, cfg: TransferConfig):
    """Denoised frequency matrix and plug-in transition matrix for the target chain."""
    res = _denoise(f_hat2, src, cfg)
    f_tran = res.estimate
    return f_tran, plugin_transition(f_tran)


def write_trajectory(path, trajectory, p: int, seed: int) -> None:
    traj = np.asarray(trajectory, dtype=np.int64)
    body = "\n".join(str(int(x)) for x in traj)
    Path(path).write_text(f"{p} {traj.size} {seed}\n{body}\n")


def read_trajectory(path):
    """Returns ``(trajectory, p, seed)``."""
    lines = Path(path).read_text().split("\n")
    try:
        p, length, seed = (int(x) for x in lines[0].split())
    except ValueError:
        raise ValueError(f"{path}:1: header must be 'p length seed'") from None
    states = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            x = int(line)
        except ValueError:
            raise ValueError(f"{path}:{i}: expected an integer state") from None
        if not 0 <= x < p:
            raise ValueError(f"{path}:{i}: state {x} outside [0, {p})")
        states.append(x)
    if len(states) != length:
        raise ValueError(f"{path}: header says {length} states, found {len(states)}")
    return np.asarray(states, dtype=np.int64), p, seed


__all__ = [
    "ConstructionError", "MarkovChain", "MarkovPair", "MarkovPairSpec", "NonErgodicError",
    "build_structured_pair", "empirical_frequency",
    "plugin_transition", "read_trajectory", "simplex_project", "simplex_project_rows",
    "simulate_trajectory", "stationary_distribution", "transfer_markov_estimate",
    "transition_counts", "write_trajectory",
]
