# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused per-row accumulation kernels (compiled twin of _kernels_py)."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp

BACKEND = "cython"


cdef inline double _expit(double eta) nogil:
    cdef double e
    if eta >= 0.0:
        return 1.0 / (1.0 + exp(-eta))
    e = exp(eta)
    return e / (1.0 + e)


def expit_vec(eta):
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    cdef double[::1] v = eta.ravel()
    out = np.empty(v.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(v.shape[0]):
            o[i] = _expit(v[i])
    return out.reshape(np.shape(eta))


def score_info(double[:, ::1] x, double[::1] y, double[::1] w, double[::1] eta):
    cdef Py_ssize_t n = x.shape[0], p = x.shape[1]
    score_arr = np.zeros(p, dtype=np.float64)
    info_arr = np.zeros((p, p), dtype=np.float64)
    cdef double[::1] score = score_arr
    cdef double[:, ::1] info = info_arr
    cdef Py_ssize_t i, j, k
    cdef double mu, rw, hw, xj
    with nogil:
        for i in range(n):
            mu = _expit(eta[i])
            rw = w[i] * (y[i] - mu)
            hw = w[i] * mu * (1.0 - mu)
            for j in range(p):
                xj = x[i, j]
                score[j] += rw * xj
                for k in range(j, p):
                    info[j, k] += hw * xj * x[i, k]
    for j in range(p):
        for k in range(j + 1, p):
            info_arr[k, j] = info_arr[j, k]
    return score_arr, info_arr


def moment_pieces(double[:, ::1] xsel, double[:, ::1] zsel, double[::1] ysel,
                  double[::1] pisel, double[::1] offsel,
                  double[::1] beta, double[::1] theta,
                  double n_phase1, double n_phase2):
    cdef Py_ssize_t n = xsel.shape[0], q2 = xsel.shape[1], q1 = zsel.shape[1]
    u1_arr = np.zeros(q1, dtype=np.float64)
    u2_arr = np.zeros(q2, dtype=np.float64)
    gt_arr = np.zeros((q1, q2), dtype=np.float64)
    gb_arr = np.zeros((q2, q2), dtype=np.float64)
    v1_arr = np.zeros((q1, q1), dtype=np.float64)
    cdef double[::1] u1 = u1_arr, u2 = u2_arr
    cdef double[:, ::1] gt = gt_arr, gb = gb_arr, v1 = v1_arr
    cdef Py_ssize_t i, j, k
    cdef double eta_x, px, poff, pz, ipi, f, sc, hx, hoff, hz, zj, xj
    with nogil:
        for i in range(n):
            eta_x = 0.0
            for j in range(q2):
                eta_x += xsel[i, j] * beta[j]
            pz = 0.0
            for j in range(q1):
                pz += zsel[i, j] * theta[j]
            px = _expit(eta_x)
            poff = _expit(eta_x + offsel[i])
            pz = _expit(pz)
            ipi = 1.0 / pisel[i]
            f = (px - pz) * ipi
            sc = ysel[i] - poff
            hx = px * (1.0 - px) * ipi
            hoff = poff * (1.0 - poff)
            hz = pz * (1.0 - pz) * ipi
            for j in range(q1):
                zj = zsel[i, j]
                u1[j] += f * zj
                for k in range(q2):
                    gt[j, k] += hx * zj * xsel[i, k]
                for k in range(j, q1):
                    v1[j, k] -= hz * zj * zsel[i, k]
            for j in range(q2):
                xj = xsel[i, j]
                u2[j] += sc * xj
                for k in range(j, q2):
                    gb[j, k] -= hoff * xj * xsel[i, k]
    for j in range(q1):
        for k in range(j + 1, q1):
            v1_arr[k, j] = v1_arr[j, k]
    for j in range(q2):
        for k in range(j + 1, q2):
            gb_arr[k, j] = gb_arr[j, k]
    u1_arr /= n_phase1
    gt_arr /= n_phase1
    v1_arr /= n_phase1
    u2_arr /= n_phase2
    gb_arr /= n_phase2
    return u1_arr, u2_arr, gt_arr, gb_arr, v1_arr
