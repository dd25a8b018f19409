# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lower convex hull sweep (hot kernel of the relaxation engine)."""

import numpy as np

cimport numpy as cnp


def lower_hull_sweep(double[::1] x, double[::1] w):
    """Indices of the lower convex hull supports of samples (x[i], w[i]).

    Same contract as the pure-Python fallback: x strictly increasing,
    collinear points removed, stack floor of one retained point.
    """
    cdef Py_ssize_t L = x.shape[0]
    if L < 2:
        raise ValueError("need at least two samples")
    out = np.empty(L, dtype=np.intp)
    cdef Py_ssize_t[::1] stack = out
    cdef Py_ssize_t n = 2, i, j, k
    stack[0] = 0
    stack[1] = 1
    for i in range(2, L):
        while n >= 2:
            j = stack[n - 1]
            k = stack[n - 2]
            if (w[j] - w[k]) * (x[i] - x[j]) >= (w[i] - w[j]) * (x[j] - x[k]):
                n -= 1
            else:
                break
        stack[n] = i
        n += 1
    return out[:n].copy()
