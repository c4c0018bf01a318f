"""Pure numpy twins of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def im2col_time(xp, k, stride, t_out):
    B, C, _, V = xp.shape
    cols = np.empty((B, C, k, t_out, V), dtype=np.float64)
    span = stride * (t_out - 1) + 1
    for j in range(k):
        cols[:, :, j] = xp[:, :, j:j + span:stride, :]
    return cols


def col2im_time(cols, t_padded, stride):
    B, C, k, t_out, V = cols.shape
    gx = np.zeros((B, C, t_padded, V), dtype=np.float64)
    span = stride * (t_out - 1) + 1
    for j in range(k):
        gx[:, :, j:j + span:stride, :] += cols[:, :, j]
    return gx
