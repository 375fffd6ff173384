# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tanh recursion for batches of hidden-state trajectories.

Each step is one BLAS ``dgemm`` over the whole batch, written straight into
the output array (its batch rows are strided by ``L * n``), followed by
numpy's vectorized ``tanh`` in place. No per-step temporaries are allocated.
"""

import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def recur_batch(weff, drive, h0):
    """Run ``h_l = tanh(weff @ h_{l-1} + drive[b, l])`` for every batch row.

    Returns an array of shape ``(B, L, n)`` holding every visited state.
    """
    cdef double[:, ::1] w = np.ascontiguousarray(weff, dtype=np.float64).copy()
    cdef const double[:, :, ::1] d = np.ascontiguousarray(drive, dtype=np.float64)
    cdef double[:, ::1] h = np.ascontiguousarray(h0, dtype=np.float64).copy()
    cdef int B = d.shape[0]
    cdef int L = d.shape[1]
    cdef int n = d.shape[2]
    if w.shape[0] != n or w.shape[1] != n:
        raise ValueError("weff must be n x n with n matching drive")
    if h.shape[0] != B or h.shape[1] != n:
        raise ValueError("h0 must have shape (B, n)")

    out_arr = np.empty((B, L, n), dtype=np.float64)
    if B == 0 or L == 0 or n == 0:
        return out_arr
    cdef double[:, :, ::1] out = out_arr
    cdef char ta = b'T'
    cdef char tb = b'N'
    cdef double one = 1.0
    cdef int ld_out = L * n
    cdef int ld_prev
    cdef double* prev
    cdef double* cur
    cdef Py_ssize_t b, l

    for l in range(L):
        with nogil:
            for b in range(B):
                memcpy(&out[b, l, 0], &d[b, l, 0], n * sizeof(double))
            if l == 0:
                prev = &h[0, 0]
                ld_prev = n
            else:
                prev = &out[0, l - 1, 0]
                ld_prev = ld_out
            cur = &out[0, l, 0]
            # column-major view: cur^T (n x B) += W (n x n) @ prev^T (n x B)
            dgemm(&ta, &tb, &n, &B, &n, &one, &w[0, 0], &n, prev, &ld_prev,
                  &one, cur, &ld_out)
        step = out_arr[:, l, :]
        np.tanh(step, out=step)
    return out_arr
