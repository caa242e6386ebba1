# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gaussian kernel contractions.

Same contract as ``witsda._pykernels``; only the window around each center is
touched, so the cost is O(P * M * N * window) instead of O(P * M * N * n).
"""
import numpy as np

from libc.math cimport ceil, exp, floor


cdef inline Py_ssize_t _window(double c, double start, double step, Py_ssize_t n,
                               double reach, Py_ssize_t* hi) noexcept nogil:
    cdef double stop = start + step * (n - 1)
    cdef double cc = c
    if cc < start:
        cc = start
    if cc > stop:
        cc = stop
    cdef double lo_f = ceil((cc - reach - start) / step)
    cdef double hi_f = floor((cc + reach - start) / step)
    cdef double k = floor((cc - start) / step + 0.5)
    if lo_f < 0:
        lo_f = 0
    if hi_f > n - 1:
        hi_f = n - 1
    if lo_f > k:
        lo_f = k
    if hi_f < k:
        hi_f = k
    hi[0] = <Py_ssize_t> hi_f
    return <Py_ssize_t> lo_f


cdef inline void _fill(double c, double start, double step, double sigma,
                       Py_ssize_t lo, Py_ssize_t hi, double* w) noexcept nogil:
    cdef Py_ssize_t j
    cdef double d, top = -1e308, s = 0.0
    for j in range(lo, hi + 1):
        d = (start + j * step - c) / sigma
        w[j - lo] = -0.5 * d * d
        if w[j - lo] > top:
            top = w[j - lo]
    for j in range(hi - lo + 1):
        w[j] = exp(w[j] - top)
        s += w[j]
    for j in range(hi - lo + 1):
        w[j] /= s


def gauss_mix(const double[:, :] centers, const double[:, :, :] coefs, double start, double step,
              Py_ssize_t n, double sigma, double radius):
    cdef Py_ssize_t M = centers.shape[0], N = centers.shape[1], P = coefs.shape[0]
    out_arr = np.zeros((P, N, n))
    buf_arr = np.empty(n)
    cdef double[:, :, ::1] out = out_arr
    cdef double[::1] buf = buf_arr
    cdef double* w = &buf[0]
    cdef double reach = radius * sigma, cf
    cdef Py_ssize_t x, m, p, j, lo, hi
    with nogil:
        for x in range(N):
            for m in range(M):
                lo = _window(centers[m, x], start, step, n, reach, &hi)
                _fill(centers[m, x], start, step, sigma, lo, hi, w)
                for p in range(P):
                    cf = coefs[p, m, x]
                    if cf == 0.0:
                        continue
                    for j in range(lo, hi + 1):
                        out[p, x, j] += cf * w[j - lo]
    return out_arr


def gauss_expect(const double[:, :] centers, const double[:, :, :] tables, double start, double step,
                 Py_ssize_t n, double sigma, double radius, bint moment=False):
    cdef Py_ssize_t M = centers.shape[0], N = centers.shape[1], P = tables.shape[0]
    e0_arr = np.empty((P, M, N))
    e1_arr = np.empty((P, M, N)) if moment else np.empty((1, 1, 1))
    buf_arr = np.empty(n)
    cdef double[:, :, ::1] e0 = e0_arr
    cdef double[:, :, ::1] e1 = e1_arr
    cdef double[::1] buf = buf_arr
    cdef double* w = &buf[0]
    cdef double reach = radius * sigma, c, s0, s1, t
    cdef Py_ssize_t x, m, p, j, lo, hi
    with nogil:
        for m in range(M):
            for x in range(N):
                c = centers[m, x]
                lo = _window(c, start, step, n, reach, &hi)
                _fill(c, start, step, sigma, lo, hi, w)
                for p in range(P):
                    s0 = 0.0
                    s1 = 0.0
                    if moment:
                        for j in range(lo, hi + 1):
                            t = w[j - lo] * tables[p, x, j]
                            s0 += t
                            s1 += t * (start + j * step - c)
                        e1[p, m, x] = s1
                    else:
                        for j in range(lo, hi + 1):
                            s0 += w[j - lo] * tables[p, x, j]
                    e0[p, m, x] = s0
    return e0_arr, (e1_arr if moment else None)
