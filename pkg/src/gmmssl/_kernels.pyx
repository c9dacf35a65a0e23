# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-row kernels: Gaussian log densities, log posteriors, entropy.

Same contracts as ``gmmssl._kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, INFINITY

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


def component_log_densities(const double[:, ::1] y, const double[:, ::1] mu,
                            const double[:, :, ::1] chol):
    cdef Py_ssize_t n = y.shape[0], p = y.shape[1], g = mu.shape[0]
    cdef bint shared = chol.shape[0] == 1
    cdef Py_ssize_t i, j, a, b, c
    cdef double half_logdet, acc, quad
    out_arr = np.empty((n, g), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] z = np.empty(p, dtype=np.float64)
    with nogil:
        for i in range(g):
            c = 0 if shared else i
            half_logdet = 0.0
            for a in range(p):
                half_logdet += log(chol[c, a, a])
            for j in range(n):
                quad = 0.0
                for a in range(p):
                    acc = y[j, a] - mu[i, a]
                    for b in range(a):
                        acc -= chol[c, a, b] * z[b]
                    z[a] = acc / chol[c, a, a]
                    quad += z[a] * z[a]
                out[j, i] = -0.5 * p * LOG_2PI - half_logdet - 0.5 * quad
    return out_arr


def log_posterior_entropy(const double[:, ::1] scores):
    cdef Py_ssize_t n = scores.shape[0], g = scores.shape[1]
    cdef Py_ssize_t i, j, top
    cdef double mx, rest, lnorm, lt, t, ent
    log_tau_arr = np.empty((n, g), dtype=np.float64)
    log_norm_arr = np.empty(n, dtype=np.float64)
    ent_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] log_tau = log_tau_arr
    cdef double[::1] log_norm = log_norm_arr
    cdef double[::1] ents = ent_arr
    with nogil:
        for j in range(n):
            top = 0
            mx = scores[j, 0]
            for i in range(1, g):
                if scores[j, i] > mx:
                    mx = scores[j, i]
                    top = i
            rest = 0.0
            for i in range(g):
                t = exp(scores[j, i] - mx) if i != top else 1.0
                log_tau[j, i] = t
                if i != top:
                    rest += t
            lnorm = log1p(rest)
            log_norm[j] = mx + lnorm
            ent = 0.0
            for i in range(g):
                t = log_tau[j, i] / (1.0 + rest)
                # shift by mx first: exact log posterior for the top class
                lt = (scores[j, i] - mx) - lnorm
                log_tau[j, i] = lt
                if t > 0.0:
                    ent -= t * lt
            ents[j] = ent if ent > 0.0 else 0.0
    return log_tau_arr, log_norm_arr, ent_arr


def entropy_score_weights(const double[:, ::1] log_tau, const double[::1] ent,
                          const double[::1] factor):
    cdef Py_ssize_t n = log_tau.shape[0], g = log_tau.shape[1]
    cdef Py_ssize_t i, j
    cdef double t
    out_arr = np.empty((n, g), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for j in range(n):
            for i in range(g):
                t = exp(log_tau[j, i])
                if t > 0.0:
                    out[j, i] = -factor[j] * t * (log_tau[j, i] + ent[j])
                else:
                    out[j, i] = 0.0
    return out_arr
