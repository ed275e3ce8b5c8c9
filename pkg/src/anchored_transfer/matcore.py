"""Dense matrix helpers: norms, deterministic SVD, top-k selection, subspace metrics.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Orthonormal
factors are 2-D arrays whose columns are orthonormal; an empty factor has
shape ``(rows, 0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import topk_flat_indices

RANK_TOL = 1e-12
ORTHO_TOL = 1e-10


class ShapeError(ValueError):
    """Raised when matrix dimensions are incompatible."""


class SvdConvergenceError(ArithmeticError):
    """Raised when the dense SVD fails to converge."""


class MatrixFormatError(ValueError):
    """Malformed matrix text file. ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path


@dataclass(frozen=True)
class SvdTriple:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.s.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` to a finite 2-D float64 array."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf entries")
    return a


def is_orthonormal(q: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    q = np.asarray(q)
    if q.ndim != 2 or q.shape[1] > q.shape[0]:
        return False
    if q.shape[1] == 0:
        return True
    gram = q.T @ q
    return float(np.max(np.abs(gram - np.eye(q.shape[1])))) <= tol


def frob_norm(m) -> float:
    # correctly rounded sum of squares, scaled against under/overflow;
    # independent of layout and zero padding
    a = as_matrix(m)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    return scale * math.sqrt(math.fsum(np.square(a / scale).ravel().tolist()))


def op_norm(m) -> float:
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    return float(full_svd(a).s[0])


def max_norm(m) -> float:
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a)))


def nnz(m, tol: float = 0.0) -> int:
    if tol < 0:
        raise ValueError("tol must be non-negative")
    return int(np.count_nonzero(np.abs(as_matrix(m)) > tol))


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    # Largest-magnitude entry of each left vector made positive, in place.
    if u.shape[1] == 0:
        return
    idx = np.argmax(np.abs(u), axis=0)
    flip = u[idx, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    v[:, flip] *= -1.0


def full_svd(m) -> SvdTriple:
    """Thin SVD ``m = u @ diag(s) @ v.T`` with ``k = min(rows, cols)`` triplets.

    Backed by LAPACK's divide-and-conquer driver, which is deterministic for a
    fixed input. Each left singular vector is flipped so that its
    largest-magnitude entry is positive; the right vector follows.
    """
    a = as_matrix(m)
    p, q = a.shape
    if min(p, q) == 0:
        return SvdTriple(np.zeros((p, 0)), np.zeros(0), np.zeros((q, 0)))
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(str(exc)) from exc
    u = np.ascontiguousarray(u)
    v = np.ascontiguousarray(vt.T)
    _fix_signs(u, v)
    return SvdTriple(u, s, v)


def _complete(columns: np.ndarray, against: np.ndarray | None, n: int) -> np.ndarray:
    """Next unit vector orthogonal to ``columns`` and ``against``.

    Candidates are standard basis vectors in index order, orthogonalized by
    two passes of Gram-Schmidt.
    """
    basis = columns if against is None else np.hstack([against, columns])
    for i in range(n):
        x = np.zeros(n)
        x[i] = 1.0
        for _ in range(2):
            if basis.shape[1]:
                x -= basis @ (basis.T @ x)
        nrm = np.linalg.norm(x)
        if nrm > 1e-6:
            return x / nrm
    raise ShapeError("no orthonormal completion available; budget exceeds dimension")


def truncated_svd(m, k: int, against_u: np.ndarray | None = None,
                  against_v: np.ndarray | None = None) -> SvdTriple:
    """Top-``k`` singular triplets of ``m``.

    Singular values below ``RANK_TOL * s_max`` are treated as zero. Their
    vectors are replaced by deterministic Gram-Schmidt completions built from
    standard basis vectors, orthogonal to the preceding columns and, if
    given, to ``against_u`` / ``against_v``.
    """
    a = as_matrix(m)
    p, q = a.shape
    if k < 0 or k > min(p, q):
        raise ShapeError(f"k={k} outside [0, {min(p, q)}]")
    if k == 0:
        return SvdTriple(np.zeros((p, 0)), np.zeros(0), np.zeros((q, 0)))
    full = full_svd(a)
    u = full.u[:, :k].copy()
    v = full.v[:, :k].copy()
    s = full.s[:k].copy()
    smax = full.s[0]
    keep = int(np.count_nonzero(s > RANK_TOL * smax)) if smax > 0 else 0
    s[keep:] = 0.0
    for j in range(keep, k):
        u[:, j] = _complete(u[:, :j], against_u, p)
        v[:, j] = _complete(v[:, :j], against_v, q)
    return SvdTriple(u, s, v)


def hard_threshold_topk(m, k: int) -> np.ndarray:
    """Keep the ``k`` largest-magnitude entries of ``m``, zero the rest.

    Equal magnitudes are ranked by row-major position, lower index first.
    """
    a = as_matrix(m)
    if k < 0 or k > a.size:
        raise ValueError(f"k={k} outside [0, {a.size}]")
    out = np.zeros_like(a)
    if k == 0:
        return out
    flat = np.ascontiguousarray(a).ravel()
    idx = topk_flat_indices(np.abs(flat), k)
    out.ravel()[idx] = flat[idx]
    return out


def sin_theta_distance(u_true, u_est) -> float:
    """``||U U^T - V V^T||_F / sqrt(2)`` for orthonormal ``U``, ``V``."""
    a = np.asarray(u_true, dtype=np.float64)
    b = np.asarray(u_est, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"factor shapes differ: {a.shape} vs {b.shape}")
    diff = a @ a.T - b @ b.T
    return float(np.sqrt(np.sum(np.square(diff)) / 2.0))


def left_factor(m, r: int) -> np.ndarray:
    """Top-``r`` left singular vectors of ``m``."""
    return truncated_svd(m, r).u


def numerical_rank(m, tol: float = RANK_TOL) -> int:
    s = full_svd(m).s
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def format_matrix(m) -> str:
    a = as_matrix(m)
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines.extend(" ".join(format(float(x), ".17g") for x in row) for row in a)
    return "\n".join(lines) + "\n"


def write_matrix(path, m) -> None:
    Path(path).write_text(format_matrix(m))


def parse_matrix(text: str, path: str | None = None) -> np.ndarray:
    lines = text.splitlines()
    if not lines:
        raise MatrixFormatError("empty file, expected 'rows cols' header", 1, path)
    head = lines[0].split()
    if len(head) != 2:
        raise MatrixFormatError("header must be 'rows cols'", 1, path)
    try:
        rows, cols = int(head[0]), int(head[1])
    except ValueError:
        raise MatrixFormatError("header must hold two integers", 1, path) from None
    if rows < 1 or cols < 1:
        raise MatrixFormatError("rows and cols must be positive", 1, path)
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != rows:
        raise MatrixFormatError(f"expected {rows} data rows, found {len(body)}",
                                len(body) + 2 if len(body) < rows else rows + 2, path)
    out = np.empty((rows, cols))
    for i, line in enumerate(body):
        fields = line.split()
        if len(fields) != cols:
            raise MatrixFormatError(f"expected {cols} values, found {len(fields)}", i + 2, path)
        try:
            out[i] = [float(x) for x in fields]
        except ValueError as exc:
            raise MatrixFormatError(str(exc), i + 2, path) from None
        if not np.all(np.isfinite(out[i])):
            raise MatrixFormatError("non-finite value", i + 2, path)
    return out


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text(), str(path))
