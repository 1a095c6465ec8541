# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tethered sweeps; see tetherbm.kernels.tmc_sweeps for the contract."""
from cython.parallel cimport parallel, prange
from libc.math cimport exp
from libc.stdlib cimport free, malloc

import numpy as np


cdef inline double _sigmoid(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


def tmc_sweeps(double[:, ::1] V, double[:, ::1] H, double[:, ::1] PH, double[:, ::1] S,
               const double[:, ::1] targets, const double[:, ::1] W, const double[::1] b,
               const double[::1] c, const double[:, ::1] A, const double[::1] offset,
               double alpha, const double[:, :, ::1] U, double[:, :, ::1] trace,
               sum_v=None, sum_ph=None, sum_vph=None, int n_threads=1):
    cdef Py_ssize_t nc = V.shape[0], nv = V.shape[1], nh = H.shape[1]
    cdef Py_ssize_t k = A.shape[0], n_sweeps = U.shape[1]
    cdef bint accumulate = sum_v is not None
    cdef double[:, ::1] acc_v
    cdef double[:, ::1] acc_ph
    cdef double[:, :, ::1] acc_vph
    if accumulate:
        acc_v = sum_v
        acc_ph = sum_ph
        acc_vph = sum_vph
    else:
        acc_v = np.zeros((1, 1))
        acc_ph = np.zeros((1, 1))
        acc_vph = np.zeros((1, 1, 1))
    cdef double half_alpha = 0.5 * alpha
    cdef Py_ssize_t j, t, i, a, l
    cdef double *F
    cdef double *s
    cdef double *s0
    cdef double x, d0, d1, dpen, vi, new, acc
    if n_threads < 1:
        n_threads = 1
    with nogil, parallel(num_threads=n_threads):
        F = <double *> malloc(nv * sizeof(double))
        s = <double *> malloc(k * sizeof(double))
        s0 = <double *> malloc(k * sizeof(double))
        for j in prange(nc, schedule="static"):
            for t in range(n_sweeps):
                for a in range(nh):
                    H[j, a] = 1.0 if U[j, t, a] < PH[j, a] else 0.0
                for i in range(nv):
                    acc = 0.0
                    for a in range(nh):
                        acc = acc + W[i, a] * H[j, a]
                    F[i] = b[i] + acc
                for l in range(k):
                    s[l] = S[j, l]
                for i in range(nv):
                    vi = V[j, i]
                    dpen = 0.0
                    for l in range(k):
                        s0[l] = s[l] - vi * A[l, i]
                        d0 = targets[j, l] - (s0[l] - offset[l])
                        d1 = d0 - A[l, i]
                        dpen = dpen + (d1 * d1 - d0 * d0)
                    x = F[i] - half_alpha * dpen
                    new = 1.0 if U[j, t, nh + i] < _sigmoid(x) else 0.0
                    V[j, i] = new
                    for l in range(k):
                        s[l] = s0[l] + new * A[l, i]
                for l in range(k):
                    acc = 0.0
                    for i in range(nv):
                        acc = acc + A[l, i] * V[j, i]
                    S[j, l] = acc
                    trace[j, t, l] = acc - offset[l]
                for a in range(nh):
                    acc = c[a]
                    for i in range(nv):
                        acc = acc + V[j, i] * W[i, a]
                    PH[j, a] = _sigmoid(acc)
                if accumulate:
                    for i in range(nv):
                        acc_v[j, i] += V[j, i]
                    for a in range(nh):
                        acc_ph[j, a] += PH[j, a]
                    for i in range(nv):
                        if V[j, i] != 0.0:
                            for a in range(nh):
                                acc_vph[j, i, a] += PH[j, a]
        free(F)
        free(s)
        free(s0)
