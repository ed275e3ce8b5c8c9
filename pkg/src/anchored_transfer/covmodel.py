"""Synthetic two-task covariance model with an enlarged target dimension.

Each task's covariance is a low-rank spiked part plus sparse diagonal noise.
The target low-rank part embeds the source one and adds innovation spikes
orthogonal to it; the target noise keeps the source diagonal and edits a few
new coordinates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .embed import EmbedShape, embed_factor, embed_matrix
from .metrics import MethodEstimate, MetricsRecord, score
from .seeding import make_rng
from .transfer import coherence, sparse_change_check

log = logging.getLogger(__name__)

DEFAULT_N2_GRID = (30, 50, 80, 100, 120, 150, 200, 250, 300)
MAX_COHERENCE = 3.0
MAX_ATTEMPTS = 200


@dataclass(frozen=True)
class CovSpec:
    p1: int = 10
    r1: int = 3
    n1: int = 500
    p2: int = 50
    delta_r: int = 1
    n2_grid: tuple = DEFAULT_N2_GRID
    trials: int = 50
    master_seed: int = 0
    spike_scale: float = 10.0
    noise_scale: float = 1.0
    delta_s: int = 5
    s1: int | None = None

    def __post_init__(self):
        if self.p2 < self.p1:
            raise ValueError("p2 must be at least p1")
        if self.r1 < 1 or self.r1 + self.delta_r > self.p1:
            raise ValueError("need r1 >= 1 and r1 + delta_r <= p1")
        if self.delta_r < 0 or self.delta_s < 0:
            raise ValueError("increments must be non-negative")
        if self.delta_s > self.p2 - self.p1:
            raise ValueError("delta_s diagonal edits need that many new coordinates")
        grid = tuple(int(n) for n in self.n2_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError("n2_grid must be a strictly increasing list of positive integers")
        object.__setattr__(self, "n2_grid", grid)
        if self.s1 is None:
            object.__setattr__(self, "s1", self.p1)
        if not 0 <= self.s1 <= self.p1:
            raise ValueError("s1 must lie in [0, p1]")
        if self.trials < 1 or self.n1 < 1:
            raise ValueError("trials and n1 must be positive")
        if not (self.spike_scale > 0 and self.noise_scale > 0):
            raise ValueError("scales must be positive")

    @property
    def r2(self) -> int:
        return self.r1 + self.delta_r

    @property
    def s2(self) -> int:
        return self.s1 + self.delta_s


@dataclass(frozen=True)
class CovInstance:
    sigma1: np.ndarray
    sigma2: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    u1: np.ndarray
    u2_true: np.ndarray
    coherence: float
    attempts: int = 1
    meta: dict = field(default_factory=dict)


def random_orthonormal(rng: np.random.Generator, rows: int, cols: int,
                       against: np.ndarray | None = None) -> np.ndarray:
    """QR of a Gaussian matrix, optionally orthogonal to ``against``; signs normalized."""
    g = rng.standard_normal((rows, cols))
    if against is not None and against.shape[1]:
        g -= against @ (against.T @ g)
        g -= against @ (against.T @ g)
    q, _ = np.linalg.qr(g)
    idx = np.argmax(np.abs(q), axis=0)
    q *= np.sign(q[idx, np.arange(cols)])
    return q


def _spikes(scale: float, k: int) -> np.ndarray:
    return scale * np.linspace(1.0, 0.4, k) if k > 1 else np.full(k, scale)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _draw(spec: CovSpec, trial: int, attempt: int) -> CovInstance:
    rng = make_rng(spec.master_seed, 1, trial, attempt)
    p1, p2 = spec.p1, spec.p2
    u1 = random_orthonormal(rng, p1, spec.r1)
    l1 = _sym((u1 * _spikes(spec.spike_scale, spec.r1)) @ u1.T)
    s1 = np.zeros((p1, p1))
    pos = np.sort(rng.choice(p1, size=spec.s1, replace=False))
    s1[pos, pos] = rng.uniform(0.5, 1.5, size=spec.s1) * spec.noise_scale

    shape = EmbedShape(p2, p2)
    u1_emb = embed_factor(u1, p2)
    u_new = random_orthonormal(rng, p2, spec.delta_r, against=u1_emb)
    d_new = _spikes(0.5 * spec.spike_scale, spec.delta_r)
    l2 = _sym(embed_matrix(l1, shape) + (u_new * d_new) @ u_new.T)
    s2 = embed_matrix(s1, shape)
    edits = p1 + np.sort(rng.choice(p2 - p1, size=spec.delta_s, replace=False))
    s2[edits, edits] = rng.uniform(0.5, 1.5, size=spec.delta_s) * spec.noise_scale
    u2 = np.hstack([u1_emb, u_new])
    mu = coherence(l2, spec.r2)
    ok, bound = sparse_change_check(spec.delta_s, p2, p2, mu, spec.r2)
    meta = {"sparse_change_ok": ok, "sparse_change_bound": bound}
    return CovInstance(l1 + s1, l2 + s2, l1, l2, s1, s2, u1, u2, mu, attempt + 1, meta)


def generate_instance(spec: CovSpec, trial: int) -> CovInstance:
    """Draw the ground-truth covariance pair for ``trial``.

    Draws whose target low-rank part has coherence above 3 are redrawn.
    """
    for attempt in range(MAX_ATTEMPTS):
        inst = _draw(spec, trial, attempt)
        if inst.coherence <= MAX_COHERENCE:
            if attempt:
                log.debug("trial %d: accepted draw %d (coherence %.3f)", trial, attempt, inst.coherence)
            return inst
        log.debug("trial %d: draw %d rejected, coherence %.3f", trial, attempt, inst.coherence)
    raise RuntimeError(f"trial {trial}: no draw with coherence <= {MAX_COHERENCE}")


def sample_covariance(sigma, n: int, seed: int) -> np.ndarray:
    """``(1/n) sum x x^T`` over ``n`` Gaussian draws with covariance ``sigma``.

    Only the upper triangle is computed; the lower one is its mirror.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if n < 1:
        raise ValueError("n must be positive")
    w, v = np.linalg.eigh(_sym(sigma))
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    x = make_rng(seed).standard_normal((n, sigma.shape[0])) @ root
    c = (x.T @ x) / n
    upper = np.triu(c)
    return upper + np.triu(c, 1).T


def evaluate_trial(instance: CovInstance, estimates: dict, n: int, trial: int,
                   experiment: str = "covariance") -> list[MetricsRecord]:
    """Score each method's estimate against the target truth."""
    out = []
    for method, est in estimates.items():
        if not isinstance(est, MethodEstimate):
            est = MethodEstimate(*est)
        out.append(score(experiment, method, n, trial, est, instance.l2, instance.s2,
                         instance.u2_true))
    return out
