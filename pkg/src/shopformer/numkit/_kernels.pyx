# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled gather/scatter kernels for the temporal convolution."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col_time(const double[:, :, :, ::1] xp, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t t_out):
    cdef Py_ssize_t B = xp.shape[0], C = xp.shape[1], V = xp.shape[3]
    cdef Py_ssize_t b, c, j, t, v, src
    out = np.empty((B, C, k, t_out, V), dtype=np.float64)
    cdef double[:, :, :, :, ::1] cols = out
    with nogil:
        for b in range(B):
            for c in range(C):
                for j in range(k):
                    for t in range(t_out):
                        src = t * stride + j
                        for v in range(V):
                            cols[b, c, j, t, v] = xp[b, c, src, v]
    return out


def col2im_time(const double[:, :, :, :, ::1] cols, Py_ssize_t t_padded, Py_ssize_t stride):
    cdef Py_ssize_t B = cols.shape[0], C = cols.shape[1], k = cols.shape[2]
    cdef Py_ssize_t t_out = cols.shape[3], V = cols.shape[4]
    cdef Py_ssize_t b, c, j, t, v, dst
    out = np.zeros((B, C, t_padded, V), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = out
    with nogil:
        for b in range(B):
            for c in range(C):
                for j in range(k):
                    for t in range(t_out):
                        dst = t * stride + j
                        for v in range(V):
                            gx[b, c, dst, v] += cols[b, c, j, t, v]
    return out
