"""Pure-Python implementations of the hot kernels.

Used when the compiled extension is unavailable or when
``ANCHORED_TRANSFER_PURE_PYTHON`` is set. Results match the compiled
versions exactly.
"""
from bisect import bisect_right

import numpy as np


def simulate_chain(cdf, uniforms, x0):
    """Inverse-CDF walk: state ``t+1`` is the first ``j`` with ``u_t < cdf[x_t, j]``."""
    rows = [list(r) for r in np.asarray(cdf, dtype=np.float64)]
    last = len(rows[0]) - 1
    out = np.empty(len(uniforms) + 1, dtype=np.int64)
    state = int(x0)
    out[0] = state
    for t, u in enumerate(np.asarray(uniforms, dtype=np.float64).tolist()):
        state = min(bisect_right(rows[state], u), last)
        out[t + 1] = state
    return out


def count_transitions(traj, p):
    traj = np.asarray(traj, dtype=np.int64)
    pairs = traj[:-1] * p + traj[1:]
    return np.bincount(pairs, minlength=p * p).reshape(p, p).astype(np.int64)


def topk_flat_indices(mags, k):
    """Indices of the ``k`` largest values; ties go to the lower index."""
    order = np.argsort(-np.asarray(mags, dtype=np.float64), kind="stable")
    return np.sort(order[:k])
