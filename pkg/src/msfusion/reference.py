"""Ground-truth convolution oracle: direct nested loops, nothing clever.

This is the reference every optimized backend is differentially tested
against, so it deliberately shares no code with them: explicit seven-deep
loops, bounds checks instead of a padded buffer, scalar accumulation.
Slow by design; keep the shapes you feed it small.
"""

from __future__ import annotations

import numpy as np

from .tensor import ConvSpec, Tensor


def conv2d_naive(x: Tensor, spec: ConvSpec) -> Tensor:
    """Same contract as ``ops.conv2d``; forward only."""
    b_n, c_out, h_out, w_out = spec.output_shape(x.shape)
    _, c_in, h, w = x.shape
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.padding
    c_in_g = c_in // spec.groups
    c_out_g = c_out // spec.groups

    xd = x.data
    wd = spec.weight.data
    bd = spec.bias.data if spec.bias is not None else None
    out = np.zeros((b_n, c_out, h_out, w_out), dtype=x.dtype)

    for b in range(b_n):
        for co in range(c_out):
            g = co // c_out_g
            for oh in range(h_out):
                for ow in range(w_out):
                    acc = 0.0 if bd is None else float(bd[co])
                    for cig in range(c_in_g):
                        ci = g * c_in_g + cig
                        for i in range(kh):
                            ih = oh * sh - ph + i
                            if ih < 0 or ih >= h:
                                continue
                            for j in range(kw):
                                iw = ow * sw - pw + j
                                if iw < 0 or iw >= w:
                                    continue
                                acc += float(xd[b, ci, ih, iw]) * float(wd[co, cig, i, j])
                    out[b, co, oh, ow] = acc
    return Tensor(out)
