# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled valid-convolution kernels on pre-padded NHWC float64 arrays.

Direct loops over the receptive field; the innermost loop runs along the
contiguous channel axis. Single-threaded and bit-deterministic.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv_forward(double[:, :, :, ::1] xp, double[:, :, :, ::1] k, int sh, int sw):
    cdef Py_ssize_t n = xp.shape[0], hp = xp.shape[1], wp = xp.shape[2], ci = xp.shape[3]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1], co = k.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // sh + 1
    cdef Py_ssize_t wo = (wp - kw) // sw + 1
    out_arr = np.zeros((n, ho, wo, co), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, oh, ow, i, j, c, d
    cdef double xv
    for b in range(n):
        for oh in range(ho):
            for ow in range(wo):
                for i in range(kh):
                    for j in range(kw):
                        for c in range(ci):
                            xv = xp[b, oh * sh + i, ow * sw + j, c]
                            if xv == 0.0:
                                continue
                            for d in range(co):
                                out[b, oh, ow, d] += xv * k[i, j, c, d]
    return out_arr


def conv_backward_input(double[:, :, :, ::1] g, double[:, :, :, ::1] k,
                        int sh, int sw, Py_ssize_t hp, Py_ssize_t wp):
    cdef Py_ssize_t n = g.shape[0], ho = g.shape[1], wo = g.shape[2], co = g.shape[3]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1], ci = k.shape[2]
    gx_arr = np.zeros((n, hp, wp, ci), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, oh, ow, i, j, c, d
    cdef double acc
    for b in range(n):
        for oh in range(ho):
            for ow in range(wo):
                for i in range(kh):
                    for j in range(kw):
                        for c in range(ci):
                            acc = 0.0
                            for d in range(co):
                                acc += g[b, oh, ow, d] * k[i, j, c, d]
                            gx[b, oh * sh + i, ow * sw + j, c] += acc
    return gx_arr


def conv_backward_kernel(double[:, :, :, ::1] xp, double[:, :, :, ::1] g,
                         int sh, int sw, Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = xp.shape[0], ci = xp.shape[3]
    cdef Py_ssize_t ho = g.shape[1], wo = g.shape[2], co = g.shape[3]
    gk_arr = np.zeros((kh, kw, ci, co), dtype=np.float64)
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef Py_ssize_t b, oh, ow, i, j, c, d
    cdef double xv
    for b in range(n):
        for oh in range(ho):
            for ow in range(wo):
                for i in range(kh):
                    for j in range(kw):
                        for c in range(ci):
                            xv = xp[b, oh * sh + i, ow * sw + j, c]
                            if xv == 0.0:
                                continue
                            for d in range(co):
                                gk[i, j, c, d] += xv * g[b, oh, ow, d]
    return gk_arr
