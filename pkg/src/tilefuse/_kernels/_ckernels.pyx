# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Same contracts and summation order as _pykernels."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def ola_accumulate(double[:, :, ::1] num, double[:, ::1] den,
                   double[:, :, ::1] lo, double[:, :, ::1] hi,
                   const double[:, :, :, ::1] feats, const cnp.int64_t[:, ::1] starts,
                   const double[:, ::1] weights):
    cdef Py_ssize_t n_win = feats.shape[0]
    cdef Py_ssize_t t = feats.shape[1]
    cdef Py_ssize_t d = feats.shape[3]
    cdef Py_ssize_t k, a, b, c, r0, c0
    cdef double w, h
    for k in range(n_win):
        r0 = starts[k, 0]
        c0 = starts[k, 1]
        for a in range(t):
            for b in range(t):
                w = weights[a, b]
                den[r0 + a, c0 + b] += w
                for c in range(d):
                    h = feats[k, a, b, c]
                    num[r0 + a, c0 + b, c] += w * h
                    if h < lo[r0 + a, c0 + b, c]:
                        lo[r0 + a, c0 + b, c] = h
                    if h > hi[r0 + a, c0 + b, c]:
                        hi[r0 + a, c0 + b, c] = h


cdef void _coords(Py_ssize_t n_in, Py_ssize_t n_out, cnp.int64_t[::1] i0,
                  cnp.int64_t[::1] i1, double[::1] frac):
    cdef Py_ssize_t k
    cdef double scale = <double>n_in / <double>n_out
    cdef double src
    for k in range(n_out):
        src = (k + 0.5) * scale - 0.5
        if src < 0.0:
            src = 0.0
        if src > n_in - 1:
            src = n_in - 1
        i0[k] = <cnp.int64_t>floor(src)
        i1[k] = i0[k] + 1 if i0[k] + 1 < n_in else n_in - 1
        frac[k] = src - i0[k]


def bilinear_resize(const double[:, :, ::1] img, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], C = img.shape[2]
    cdef cnp.int64_t[::1] y0 = np.empty(out_h, dtype=np.int64)
    cdef cnp.int64_t[::1] y1 = np.empty(out_h, dtype=np.int64)
    cdef double[::1] wy = np.empty(out_h)
    cdef cnp.int64_t[::1] x0 = np.empty(out_w, dtype=np.int64)
    cdef cnp.int64_t[::1] x1 = np.empty(out_w, dtype=np.int64)
    cdef double[::1] wx = np.empty(out_w)
    _coords(H, out_h, y0, y1, wy)
    _coords(W, out_w, x0, x1, wx)
    out_arr = np.empty((out_h, out_w, C))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, c
    cdef double a, b, top, bot
    for i in range(out_h):
        for j in range(out_w):
            for c in range(C):
                a = img[y0[i], x0[j], c]
                b = img[y0[i], x1[j], c]
                top = a + wx[j] * (b - a)
                a = img[y1[i], x0[j], c]
                b = img[y1[i], x1[j], c]
                bot = a + wx[j] * (b - a)
                out[i, j, c] = top + wy[i] * (bot - top)
    return out_arr
