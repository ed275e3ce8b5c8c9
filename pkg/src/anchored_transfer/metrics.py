"""Per-trial metric records and the results-file schema."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matcore import frob_norm, sin_theta_distance, truncated_svd

METHODS = ("transfer", "nontransfer", "pca")

RESULTS_HEADER = ("experiment", "method", "n", "trial", "err_L_fro", "err_S_fro",
                  "err_Theta_fro", "sin_theta", "iters", "converged", "wall_ms")
AGGREGATE_HEADER = ("method", "n", "mean_err_L", "stderr_err_L", "mean_sin_theta",
                    "stderr_sin_theta", "trials")


@dataclass(frozen=True)
class MethodEstimate:
    l_hat: np.ndarray
    s_hat: np.ndarray
    iterations: int = 0
    converged: bool = True
    wall_ms: float = 0.0
    objective_trace: tuple = ()
    half_step_trace: tuple = ()


@dataclass(frozen=True)
class MetricsRecord:
    experiment: str
    method: str
    n: int
    trial: int
    err_L_fro: float
    err_S_fro: float
    err_Theta_fro: float
    sin_theta: float
    iters: int
    converged: bool
    wall_ms: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        errs = (self.err_L_fro, self.err_S_fro, self.err_Theta_fro, self.sin_theta)
        if any(not e >= 0 for e in errs):
            raise ValueError("error fields must be non-negative")

    def sort_key(self):
        return (self.n, self.trial, METHODS.index(self.method))

    def as_row(self) -> list[str]:
        return [self.experiment, self.method, str(self.n), str(self.trial),
                _fmt(self.err_L_fro), _fmt(self.err_S_fro), _fmt(self.err_Theta_fro),
                _fmt(self.sin_theta), str(self.iters), "true" if self.converged else "false",
                _fmt(self.wall_ms)]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def score(experiment: str, method: str, n: int, trial: int, est: MethodEstimate,
          l_true: np.ndarray, s_true: np.ndarray, u_true: np.ndarray) -> MetricsRecord:
    r = u_true.shape[1]
    u_est = truncated_svd(est.l_hat, r).u
    return MetricsRecord(
        experiment=experiment,
        method=method,
        n=n,
        trial=trial,
        err_L_fro=frob_norm(est.l_hat - l_true),
        err_S_fro=frob_norm(est.s_hat - s_true),
        err_Theta_fro=frob_norm((est.l_hat - l_true) + (est.s_hat - s_true)),
        sin_theta=sin_theta_distance(u_true, u_est),
        iters=est.iterations,
        converged=est.converged,
        wall_ms=est.wall_ms,
    )
