# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: LSTM forward/BPTT and the CUSUM scan.

Mirrors the signatures in pykernels; selected at import by the package
__init__ when available.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline double _sigmoid(double z) nogil:
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    cdef double ez = exp(z)
    return ez / (1.0 + ez)


def lstm_forward(
    cnp.ndarray[cnp.float64_t, ndim=2] x,
    cnp.ndarray[cnp.float64_t, ndim=1] h0,
    cnp.ndarray[cnp.float64_t, ndim=1] c0,
    cnp.ndarray[cnp.float64_t, ndim=2] wx,
    cnp.ndarray[cnp.float64_t, ndim=2] wh,
    cnp.ndarray[cnp.float64_t, ndim=1] b,
):
    cdef Py_ssize_t t_len = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t d = h0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gates = np.empty((t_len, 4 * d))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c_seq = np.empty((t_len, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h_seq = np.empty((t_len, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z = np.empty(4 * d)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h = h0.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = c0.copy()
    cdef Py_ssize_t t, j, k
    cdef double acc, iv, fv, gv, ov

    for t in range(t_len):
        for j in range(4 * d):
            acc = b[j]
            for k in range(n):
                acc += x[t, k] * wx[k, j]
            for k in range(d):
                acc += h[k] * wh[k, j]
            z[j] = acc
        for j in range(d):
            iv = _sigmoid(z[j])
            fv = _sigmoid(z[d + j])
            gv = tanh(z[2 * d + j])
            ov = _sigmoid(z[3 * d + j])
            c[j] = fv * c[j] + iv * gv
            h[j] = ov * tanh(c[j])
            gates[t, j] = iv
            gates[t, d + j] = fv
            gates[t, 2 * d + j] = gv
            gates[t, 3 * d + j] = ov
            c_seq[t, j] = c[j]
            h_seq[t, j] = h[j]
    return h.copy(), c.copy(), (gates, c_seq, h_seq)


def lstm_backward(
    cnp.ndarray[cnp.float64_t, ndim=2] x,
    cnp.ndarray[cnp.float64_t, ndim=1] h0,
    cnp.ndarray[cnp.float64_t, ndim=1] c0,
    cnp.ndarray[cnp.float64_t, ndim=2] wx,
    cnp.ndarray[cnp.float64_t, ndim=2] wh,
    cnp.ndarray[cnp.float64_t, ndim=1] b,
    tuple cache,
    cnp.ndarray[cnp.float64_t, ndim=1] dh_last,
    cnp.ndarray[cnp.float64_t, ndim=1] dc_last,
):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gates = cache[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c_seq = cache[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h_seq = cache[2]
    cdef Py_ssize_t t_len = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t d = h0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dx = np.zeros((t_len, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dwx = np.zeros_like(wx)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dwh = np.zeros_like(wh)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] db = np.zeros_like(b)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dh = dh_last.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dc = dc_last.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dz = np.empty(4 * d)
    cdef Py_ssize_t t, j, k
    cdef double iv, fv, gv, ov, tc, do, dct, c_prev, h_prev, acc

    for t in range(t_len - 1, -1, -1):
        for j in range(d):
            iv = gates[t, j]
            fv = gates[t, d + j]
            gv = gates[t, 2 * d + j]
            ov = gates[t, 3 * d + j]
            c_prev = c_seq[t - 1, j] if t > 0 else c0[j]
            tc = tanh(c_seq[t, j])
            do = dh[j] * tc
            dct = dh[j] * ov * (1.0 - tc * tc) + dc[j]
            dz[j] = dct * gv * iv * (1.0 - iv)
            dz[d + j] = dct * c_prev * fv * (1.0 - fv)
            dz[2 * d + j] = dct * iv * (1.0 - gv * gv)
            dz[3 * d + j] = do * ov * (1.0 - ov)
            dc[j] = dct * fv
        for j in range(4 * d):
            db[j] += dz[j]
            for k in range(n):
                dwx[k, j] += x[t, k] * dz[j]
            for k in range(d):
                h_prev = h_seq[t - 1, k] if t > 0 else h0[k]
                dwh[k, j] += h_prev * dz[j]
        for k in range(n):
            acc = 0.0
            for j in range(4 * d):
                acc += wx[k, j] * dz[j]
            dx[t, k] = acc
        for k in range(d):
            acc = 0.0
            for j in range(4 * d):
                acc += wh[k, j] * dz[j]
            dh[k] = acc
    return dx, dh, dc, dwx, dwh, db


def cusum_scan(
    cnp.ndarray[cnp.float64_t, ndim=1] scores, double y0, double threshold
):
    cdef Py_ssize_t t_len = scores.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.empty(t_len)
    cdef double acc = y0
    cdef Py_ssize_t first = -1
    cdef Py_ssize_t t
    for t in range(t_len):
        acc = acc + scores[t]
        if acc < 0.0:
            acc = 0.0
        y[t] = acc
        if first < 0 and acc > threshold:
            first = t
    return y, int(first)
