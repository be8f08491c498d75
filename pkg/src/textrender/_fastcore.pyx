# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the low-level kernels.

Mirrors ``textrender._slowcore`` exactly; see that module for semantics.
"""

import numpy as np

cimport numpy as cnp

ctypedef fused real_t:
    float
    double


def im2col(real_t[:, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
           Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t c = xp.shape[2]
    out = np.empty((out_h * out_w, kh * kw * c), dtype=np.asarray(xp).dtype)
    cdef real_t[:, ::1] cols = out
    cdef Py_ssize_t oy, ox, ky, kx, ch, row, col, iy
    with nogil:
        for oy in range(out_h):
            for ox in range(out_w):
                row = oy * out_w + ox
                col = 0
                for ky in range(kh):
                    iy = oy * stride + ky
                    for kx in range(kw):
                        for ch in range(c):
                            cols[row, col] = xp[iy, ox * stride + kx, ch]
                            col += 1
    return out


def col2im_add(real_t[:, ::1] cols, Py_ssize_t h, Py_ssize_t w, Py_ssize_t c,
               Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
               Py_ssize_t out_h, Py_ssize_t out_w):
    out = np.zeros((h, w, c), dtype=np.asarray(cols).dtype)
    cdef real_t[:, :, ::1] grad = out
    cdef Py_ssize_t oy, ox, ky, kx, ch, row, col, iy
    with nogil:
        for ky in range(kh):
            for kx in range(kw):
                for oy in range(out_h):
                    iy = oy * stride + ky
                    for ox in range(out_w):
                        row = oy * out_w + ox
                        col = (ky * kw + kx) * c
                        for ch in range(c):
                            grad[iy, ox * stride + kx, ch] += cols[row, col + ch]
    return out


def scatter_add_pixels(real_t[:, :, ::1] acc, Py_ssize_t[::1] iy, Py_ssize_t[::1] ix,
                       real_t[:, ::1] vals):
    cdef Py_ssize_t n = iy.shape[0]
    cdef Py_ssize_t c = acc.shape[2]
    cdef Py_ssize_t k, ch
    with nogil:
        for k in range(n):
            for ch in range(c):
                acc[iy[k], ix[k], ch] += vals[k, ch]


def thin_subiter(cnp.uint8_t[:, ::1] mask, int phase):
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    pad_arr = np.zeros((h + 2, w + 2), dtype=np.uint8)
    pad_arr[1:-1, 1:-1] = np.asarray(mask)
    cdef cnp.uint8_t[:, ::1] p = pad_arr
    flag_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] flags = flag_arr
    cdef Py_ssize_t i, j, k, count = 0
    cdef int b, a
    cdef int ring[8]
    with nogil:
        for i in range(h):
            for j in range(w):
                if p[i + 1, j + 1] == 0:
                    continue
                ring[0] = p[i, j + 1]      # N
                ring[1] = p[i, j + 2]      # NE
                ring[2] = p[i + 1, j + 2]  # E
                ring[3] = p[i + 2, j + 2]  # SE
                ring[4] = p[i + 2, j + 1]  # S
                ring[5] = p[i + 2, j]      # SW
                ring[6] = p[i + 1, j]      # W
                ring[7] = p[i, j]          # NW
                b = 0
                a = 0
                for k in range(8):
                    b += ring[k]
                    if ring[k] == 0 and ring[(k + 1) % 8] == 1:
                        a += 1
                if b < 2 or b > 6 or a != 1:
                    continue
                if phase == 0:
                    if ring[0] * ring[2] * ring[4] != 0:
                        continue
                    if ring[2] * ring[4] * ring[6] != 0:
                        continue
                else:
                    if ring[0] * ring[2] * ring[6] != 0:
                        continue
                    if ring[0] * ring[4] * ring[6] != 0:
                        continue
                flags[i, j] = 1
                count += 1
        if count > 0:
            for i in range(h):
                for j in range(w):
                    if flags[i, j]:
                        mask[i, j] = 0
    return count
