# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-chain kernel for tridiagonal step operators.

Marches u_k = T^{-1} (B u_{k-1} + f_k) over a whole chain of time steps in
one call, with T prefactored by the Thomas algorithm.  T must be strictly
diagonally dominant (true for every implicit-side operator built from the
discrete Laplacian), so no pivoting is needed.
"""

import numpy as np

cimport numpy as cnp


def factor_tridiag(cnp.float64_t[::1] lower,
                   cnp.float64_t[::1] diag,
                   cnp.float64_t[::1] upper):
    """Thomas factorization of tridiag(lower, diag, upper).

    Returns (mult, pivot) where mult[i] is the row-i elimination multiplier
    and pivot[i] the eliminated diagonal.  ``upper`` is reused unchanged at
    solve time.
    """
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mult = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pivot = np.empty(n)
    cdef cnp.float64_t[::1] mv = mult
    cdef cnp.float64_t[::1] pv = pivot
    cdef Py_ssize_t i
    pv[0] = diag[0]
    for i in range(1, n):
        mv[i] = lower[i] / pv[i - 1]
        pv[i] = diag[i] - mv[i] * upper[i - 1]
    return mult, pivot


def march_chain(cnp.float64_t[::1] mult,
                cnp.float64_t[::1] pivot,
                cnp.float64_t[::1] upper,
                cnp.float64_t[::1] b_lower,
                cnp.float64_t[::1] b_diag,
                cnp.float64_t[::1] b_upper,
                cnp.float64_t[::1] u0,
                object forcing,
                Py_ssize_t n_steps):
    """Run the whole chain; returns an (n_steps + 1, n) trajectory.

    forcing may be None (homogeneous) or an (n_steps, n) array added to the
    right-hand side of step k.
    """
    cdef Py_ssize_t n = pivot.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_steps + 1, n))
    cdef cnp.float64_t[:, ::1] ov = out
    cdef cnp.float64_t[:, ::1] fv
    cdef bint has_f = forcing is not None
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work = np.empty(n)
    cdef cnp.float64_t[::1] w = work
    cdef Py_ssize_t k, i
    cdef cnp.float64_t acc

    if has_f:
        fv = forcing
    ov[0, :] = u0
    for k in range(n_steps):
        # w = B u_{k-1} (+ f_k)
        for i in range(n):
            acc = b_diag[i] * ov[k, i]
            if i > 0:
                acc += b_lower[i] * ov[k, i - 1]
            if i < n - 1:
                acc += b_upper[i] * ov[k, i + 1]
            if has_f:
                acc += fv[k, i]
            w[i] = acc
        # forward sweep of T w = rhs
        for i in range(1, n):
            w[i] -= mult[i] * w[i - 1]
        # back substitution
        ov[k + 1, n - 1] = w[n - 1] / pivot[n - 1]
        for i in range(n - 2, -1, -1):
            ov[k + 1, i] = (w[i] - upper[i] * ov[k + 1, i + 1]) / pivot[i]
    return out
