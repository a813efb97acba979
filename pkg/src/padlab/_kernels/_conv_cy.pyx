# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col / col2im kernels (hot path of conv2d).

Same column layout as the numpy fallback in _conv_np.py.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] xp,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
           Py_ssize_t h_out, Py_ssize_t w_out):
    cdef Py_ssize_t n = xp.shape[0]
    cdef Py_ssize_t c = xp.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] cols = np.empty(
        (n, c * kh * kw, h_out * w_out))
    cdef Py_ssize_t b, ch, u, v, i, j, row
    for b in range(n):
        for ch in range(c):
            for u in range(kh):
                for v in range(kw):
                    row = (ch * kh + u) * kw + v
                    for i in range(h_out):
                        for j in range(w_out):
                            cols[b, row, i * w_out + j] = xp[
                                b, ch, i * stride + u, j * stride + v]
    return cols


def col2im(cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] cols,
           Py_ssize_t n, Py_ssize_t c, Py_ssize_t hp, Py_ssize_t wp,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
           Py_ssize_t h_out, Py_ssize_t w_out):
    cdef cnp.ndarray[cnp.float64_t, ndim=4, mode="c"] xp = np.zeros((n, c, hp, wp))
    cdef Py_ssize_t b, ch, u, v, i, j, row
    for b in range(n):
        for ch in range(c):
            for u in range(kh):
                for v in range(kw):
                    row = (ch * kh + u) * kw + v
                    for i in range(h_out):
                        for j in range(w_out):
                            xp[b, ch, i * stride + u, j * stride + v] += cols[
                                b, row, i * w_out + j]
    return xp
