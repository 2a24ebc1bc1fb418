# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled grouped convolution kernels (the preferred backend).

Direct convolution with a stride-1 fast path on the innermost loop; the
accumulation order per output element is fixed, so results are bitwise
reproducible run to run.  Bias is handled by the caller.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"

ctypedef fused real:
    float
    double


def conv2d_forward(const real[:, :, :, ::1] x, const real[:, :, :, ::1] w,
                   int sh, int sw, int ph, int pw, int groups):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Cout = w.shape[0], CinG = w.shape[1], Kh = w.shape[2], Kw = w.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * ph - Kh) // sh + 1
    cdef Py_ssize_t Wo = (W + 2 * pw - Kw) // sw + 1
    cdef Py_ssize_t CoutG = Cout // groups

    if real is float:
        out_np = np.zeros((B, Cout, Ho, Wo), dtype=np.float32)
    else:
        out_np = np.zeros((B, Cout, Ho, Wo), dtype=np.float64)
    cdef real[:, :, :, ::1] out = out_np

    cdef Py_ssize_t b, g, cog, co, cig, ci, kh, kw, oh, ow, ih, iw, lo, hi, num
    cdef real wv

    for b in range(B):
        for g in range(groups):
            for cog in range(CoutG):
                co = g * CoutG + cog
                for cig in range(CinG):
                    ci = g * CinG + cig
                    for kh in range(Kh):
                        for kw in range(Kw):
                            wv = w[co, cig, kh, kw]
                            if wv == 0:
                                continue
                            # valid output column range for this kernel offset
                            num = W - 1 + pw - kw
                            if num < 0:
                                continue
                            lo = 0
                            if kw < pw:
                                lo = (pw - kw + sw - 1) // sw
                            hi = num // sw
                            if hi > Wo - 1:
                                hi = Wo - 1
                            for oh in range(Ho):
                                ih = oh * sh - ph + kh
                                if ih < 0 or ih >= H:
                                    continue
                                if sw == 1:
                                    for ow in range(lo, hi + 1):
                                        out[b, co, oh, ow] += wv * x[b, ci, ih, ow - pw + kw]
                                else:
                                    for ow in range(lo, hi + 1):
                                        out[b, co, oh, ow] += wv * x[b, ci, ih, ow * sw - pw + kw]
    return out_np


def conv2d_grad_input(const real[:, :, :, ::1] cot, const real[:, :, :, ::1] w,
                      tuple x_shape, int sh, int sw, int ph, int pw, int groups):
    cdef Py_ssize_t B = cot.shape[0], Cout = cot.shape[1]
    cdef Py_ssize_t Ho = cot.shape[2], Wo = cot.shape[3]
    cdef Py_ssize_t H = x_shape[2], W = x_shape[3]
    cdef Py_ssize_t CinG = w.shape[1], Kh = w.shape[2], Kw = w.shape[3]
    cdef Py_ssize_t CoutG = Cout // groups

    if real is float:
        dx_np = np.zeros(x_shape, dtype=np.float32)
    else:
        dx_np = np.zeros(x_shape, dtype=np.float64)
    cdef real[:, :, :, ::1] dx = dx_np

    cdef Py_ssize_t b, g, cog, co, cig, ci, kh, kw, oh, ow, ih, lo, hi, num
    cdef real wv

    for b in range(B):
        for g in range(groups):
            for cog in range(CoutG):
                co = g * CoutG + cog
                for cig in range(CinG):
                    ci = g * CinG + cig
                    for kh in range(Kh):
                        for kw in range(Kw):
                            wv = w[co, cig, kh, kw]
                            if wv == 0:
                                continue
                            num = W - 1 + pw - kw
                            if num < 0:
                                continue
                            lo = 0
                            if kw < pw:
                                lo = (pw - kw + sw - 1) // sw
                            hi = num // sw
                            if hi > Wo - 1:
                                hi = Wo - 1
                            for oh in range(Ho):
                                ih = oh * sh - ph + kh
                                if ih < 0 or ih >= H:
                                    continue
                                for ow in range(lo, hi + 1):
                                    dx[b, ci, ih, ow * sw - pw + kw] += wv * cot[b, co, oh, ow]
    return dx_np


def conv2d_grad_weight(const real[:, :, :, ::1] cot, const real[:, :, :, ::1] x,
                       tuple w_shape, int sh, int sw, int ph, int pw, int groups):
    cdef Py_ssize_t B = cot.shape[0], Cout = cot.shape[1]
    cdef Py_ssize_t Ho = cot.shape[2], Wo = cot.shape[3]
    cdef Py_ssize_t H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t CinG = w_shape[1], Kh = w_shape[2], Kw = w_shape[3]
    cdef Py_ssize_t CoutG = Cout // groups

    if real is float:
        dw_np = np.zeros(w_shape, dtype=np.float32)
    else:
        dw_np = np.zeros(w_shape, dtype=np.float64)
    cdef real[:, :, :, ::1] dw = dw_np

    cdef Py_ssize_t b, g, cog, co, cig, ci, kh, kw, oh, ow, ih, lo, hi, num
    cdef double acc

    for g in range(groups):
        for cog in range(CoutG):
            co = g * CoutG + cog
            for cig in range(CinG):
                ci = g * CinG + cig
                for kh in range(Kh):
                    for kw in range(Kw):
                        num = W - 1 + pw - kw
                        if num < 0:
                            continue
                        lo = 0
                        if kw < pw:
                            lo = (pw - kw + sw - 1) // sw
                        hi = num // sw
                        if hi > Wo - 1:
                            hi = Wo - 1
                        acc = 0.0
                        for b in range(B):
                            for oh in range(Ho):
                                ih = oh * sh - ph + kh
                                if ih < 0 or ih >= H:
                                    continue
                                for ow in range(lo, hi + 1):
                                    acc += cot[b, co, oh, ow] * x[b, ci, ih, ow * sw - pw + kw]
                        dw[co, cig, kh, kw] = <real> acc
    return dw_np
