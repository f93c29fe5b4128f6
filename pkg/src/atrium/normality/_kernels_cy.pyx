# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of `_kernels_py`; same contracts, same evaluation order."""

import numpy as np

from libc.math cimport ceil, exp, floor, sqrt

BACKEND = "cython"


def splat(double[:, :, :, ::1] values, double[::1] center, double[::1] sigma,
          double amplitude, double radius):
    cdef Py_ssize_t lo[4]
    cdef Py_ssize_t hi[4]
    cdef Py_ssize_t d, i, j, k, l, n
    cdef double diff, w0, w01, w012, w, added = 0.0
    cdef double[::1] wx, wy, wvx, wvy

    if amplitude == 0.0:
        return 0.0
    for d in range(4):
        lo[d] = <Py_ssize_t> ceil(center[d] - radius)
        if lo[d] < 0:
            lo[d] = 0
        hi[d] = <Py_ssize_t> floor(center[d] + radius)
        if hi[d] > values.shape[d] - 1:
            hi[d] = values.shape[d] - 1
        if lo[d] > hi[d]:
            return 0.0

    buffers = []
    for d in range(4):
        n = hi[d] - lo[d] + 1
        buf = np.empty(n, dtype=np.float64)
        for i in range(n):
            diff = (lo[d] + i - center[d]) / sigma[d]
            buf[i] = exp(-(diff * diff))
        buffers.append(buf)
    wx, wy, wvx, wvy = buffers[0], buffers[1], buffers[2], buffers[3]

    for i in range(hi[0] - lo[0] + 1):
        w0 = wx[i]
        for j in range(hi[1] - lo[1] + 1):
            w01 = w0 * wy[j]
            for k in range(hi[2] - lo[2] + 1):
                w012 = w01 * wvx[k]
                for l in range(hi[3] - lo[3] + 1):
                    w = w012 * wvy[l]
                    values[lo[0] + i, lo[1] + j, lo[2] + k, lo[3] + l] += amplitude * w
                    added += w
    return amplitude * added


def score_step(double[:, :, :, ::1] values, double[::1] point):
    cdef Py_ssize_t base[4]
    cdef Py_ssize_t p[4]
    cdef Py_ssize_t d, m
    cdef int count = 0
    cdef bint outside
    cdef double total = 0.0, dist, diff

    for d in range(4):
        base[d] = <Py_ssize_t> floor(point[d])
    for m in range(16):
        outside = False
        for d in range(4):
            p[d] = base[d] + ((m >> d) & 1)
            if p[d] < 0 or p[d] >= values.shape[d]:
                outside = True
                break
        if outside:
            continue
        dist = 0.0
        for d in range(4):
            diff = point[d] - p[d]
            dist += diff * diff
        dist = sqrt(dist)
        if dist < 1e-6:
            dist = 1e-6
        total += values[p[0], p[1], p[2], p[3]] / dist
        count += 1
    return total / count if count else 0.0
