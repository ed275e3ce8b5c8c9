# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics mirror ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def simulate_chain(const double[:, ::1] cdf, const double[::1] uniforms, Py_ssize_t x0):
    cdef Py_ssize_t n = uniforms.shape[0]
    cdef Py_ssize_t p = cdf.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_arr = np.empty(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t t, lo, hi, mid, state = x0
    cdef double u
    out[0] = state
    with nogil:
        for t in range(n):
            u = uniforms[t]
            # first j with u < cdf[state, j]; clamps to p - 1
            lo = 0
            hi = p - 1
            while lo < hi:
                mid = (lo + hi) >> 1
                if u < cdf[state, mid]:
                    hi = mid
                else:
                    lo = mid + 1
            state = lo
            out[t + 1] = state
    return out_arr


def count_transitions(const cnp.int64_t[::1] traj, Py_ssize_t p):
    cdef cnp.ndarray[cnp.int64_t, ndim=2] counts_arr = np.zeros((p, p), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] counts = counts_arr
    cdef Py_ssize_t t
    with nogil:
        for t in range(traj.shape[0] - 1):
            counts[traj[t], traj[t + 1]] += 1
    return counts_arr


cdef inline bint _worse(double a, Py_ssize_t ia, double b, Py_ssize_t ib) nogil:
    # a ranks below b: smaller magnitude, or equal magnitude and later position
    return a < b or (a == b and ia > ib)


cdef void _sift_down(double* val, Py_ssize_t* idx, Py_ssize_t k, Py_ssize_t pos) nogil:
    cdef Py_ssize_t child, best
    cdef double tv
    cdef Py_ssize_t ti
    while True:
        child = 2 * pos + 1
        if child >= k:
            return
        best = child
        if child + 1 < k and _worse(val[child + 1], idx[child + 1], val[child], idx[child]):
            best = child + 1
        if _worse(val[best], idx[best], val[pos], idx[pos]):
            tv = val[pos]; val[pos] = val[best]; val[best] = tv
            ti = idx[pos]; idx[pos] = idx[best]; idx[best] = ti
            pos = best
        else:
            return


def topk_flat_indices(const double[::1] mags, Py_ssize_t k):
    """Bounded min-heap selection, O(n log k). Returns sorted indices."""
    cdef Py_ssize_t n = mags.shape[0]
    cdef cnp.ndarray[double, ndim=1] val_arr = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] idx_arr = np.empty(k, dtype=np.intp)
    cdef double* val = <double*> val_arr.data
    cdef Py_ssize_t* idx = <Py_ssize_t*> idx_arr.data
    cdef Py_ssize_t i, j
    if k <= 0:
        return np.empty(0, dtype=np.intp)
    with nogil:
        for i in range(k):
            val[i] = mags[i]
            idx[i] = i
        j = k // 2
        while j > 0:
            j -= 1
            _sift_down(val, idx, k, j)
        for i in range(k, n):
            if _worse(val[0], idx[0], mags[i], i):
                val[0] = mags[i]
                idx[0] = i
                _sift_down(val, idx, k, 0)
    idx_arr.sort()
    return idx_arr
