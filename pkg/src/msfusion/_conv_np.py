"""Pure-numpy grouped convolution kernels (import-time fallback backend).

Same contracts as the compiled extension: forward cross-correlation with
zero padding plus the two backward passes (cotangent -> input gradient,
cotangent -> weight gradient).  Bias is handled by the caller.
"""

from __future__ import annotations

import numpy as np

NAME = "fallback"


def _windows(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, h_out: int, w_out: int):
    """View of all kernel-sized windows, shape (B, C, H_out, W_out, K_h, K_w)."""
    b, c = xp.shape[:2]
    sb, sc, srow, scol = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, h_out, w_out, kh, kw),
        strides=(sb, sc, srow * sh, scol * sw, srow, scol),
        writeable=False,
    )


def conv2d_forward(
    x: np.ndarray,
    w: np.ndarray,
    sh: int,
    sw: int,
    ph: int,
    pw: int,
    groups: int,
) -> np.ndarray:
    b, c_in, h, wd = x.shape
    c_out, c_in_g, kh, kw = w.shape
    h_out = (h + 2 * ph - kh) // sh + 1
    w_out = (wd + 2 * pw - kw) // sw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _windows(xp, kh, kw, sh, sw, h_out, w_out)
    win = win.reshape(b, groups, c_in_g, h_out, w_out, kh, kw)
    wg = w.reshape(groups, c_out // groups, c_in_g, kh, kw)
    out = np.einsum("bgihwkl,goikl->bgohw", win, wg, optimize=True)
    return np.ascontiguousarray(out.reshape(b, c_out, h_out, w_out))


def conv2d_grad_input(
    cot: np.ndarray,
    w: np.ndarray,
    x_shape: tuple,
    sh: int,
    sw: int,
    ph: int,
    pw: int,
    groups: int,
) -> np.ndarray:
    b, c_in, h, wd = x_shape
    c_out, c_in_g, kh, kw = w.shape
    h_out, w_out = cot.shape[2], cot.shape[3]
    cotg = cot.reshape(b, groups, c_out // groups, h_out, w_out)
    wg = w.reshape(groups, c_out // groups, c_in_g, kh, kw)
    # contribution per kernel offset, scattered back onto the padded input
    t = np.einsum("bgohw,goikl->bgiklhw", cotg, wg, optimize=True)
    dxp = np.zeros((b, groups, c_in_g, h + 2 * ph, wd + 2 * pw), dtype=cot.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, :, i : i + sh * h_out : sh, j : j + sw * w_out : sw] += t[:, :, :, i, j]
    dx = dxp.reshape(b, c_in, h + 2 * ph, wd + 2 * pw)[:, :, ph : ph + h, pw : pw + wd]
    return np.ascontiguousarray(dx)


def conv2d_grad_weight(
    cot: np.ndarray,
    x: np.ndarray,
    w_shape: tuple,
    sh: int,
    sw: int,
    ph: int,
    pw: int,
    groups: int,
) -> np.ndarray:
    b, c_in, _h, _w = x.shape
    c_out, c_in_g, kh, kw = w_shape
    h_out, w_out = cot.shape[2], cot.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _windows(xp, kh, kw, sh, sw, h_out, w_out)
    win = win.reshape(b, groups, c_in_g, h_out, w_out, kh, kw)
    cotg = cot.reshape(b, groups, c_out // groups, h_out, w_out)
    dw = np.einsum("bgihwkl,bgohw->goikl", win, cotg, optimize=True)
    return np.ascontiguousarray(dw.reshape(c_out, c_in_g, kh, kw))
