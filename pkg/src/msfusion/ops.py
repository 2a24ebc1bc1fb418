"""Primitive tensor operations, each usable plain or under a tape.

Every operation accepts either Tensors (returning a Tensor, no recording)
or tape Vars (returning a Var recorded together with its vector-Jacobian
product).  Mixing is allowed: plain tensors fed into a taped call are
lifted as constants.  The primitive set is: reshape, permute,
concat_channels (with split as its backward), conv2d, batch_norm, sigmoid,
elementwise add/mul, scale, repeat_channels, and zpool; silu is composed
from mul and sigmoid.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .autodiff import Tape, Var
from .tensor import BatchNormSpec, ConvSpec, Tensor

__all__ = [
    "reshape",
    "permute",
    "concat_channels",
    "conv2d",
    "batch_norm",
    "sigmoid",
    "silu",
    "elementwise_add",
    "elementwise_mul",
    "scale",
    "repeat_channels",
    "zpool",
]

TensorLike = Union[Tensor, Var]


def _value(x: TensorLike) -> Tensor:
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Optional[Tape]:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _lift(tape: Tape, x: TensorLike) -> Var:
    return x if isinstance(x, Var) else tape.constant(x)


def _require_same_dtype(*ts: Tensor) -> None:
    dtypes = {t.dtype for t in ts}
    if len(dtypes) != 1:
        raise ValueError(f"mixed dtypes are not supported: {sorted(d.name for d in dtypes)}")


def _require_4d(t: Tensor, what: str) -> None:
    if t.ndim != 4:
        raise ValueError(f"{what} expects a 4-d tensor, got shape {t.shape}")


# ---------------------------------------------------------------------------
# shape ops

def _resolve_shape(new_shape: Sequence[int], size: int) -> tuple:
    dims = [int(d) for d in new_shape]
    inferred = [i for i, d in enumerate(dims) if d == -1]
    if len(inferred) > 1:
        raise ValueError(f"at most one extent may be -1, got {tuple(new_shape)}")
    if any(d < 1 and d != -1 for d in dims):
        raise ValueError(f"extents must be >= 1 (or one -1), got {tuple(new_shape)}")
    if inferred:
        known = 1
        for d in dims:
            if d != -1:
                known *= d
        if known == 0 or size % known != 0:
            raise ValueError(f"cannot infer extent: {size} elements do not fit {tuple(new_shape)}")
        dims[inferred[0]] = size // known
    total = 1
    for d in dims:
        total *= d
    if total != size:
        raise ValueError(
            f"element count mismatch: shape {tuple(new_shape)} holds {total} elements, tensor has {size}"
        )
    return tuple(dims)


def reshape(t: TensorLike, new_shape: Sequence[int]) -> TensorLike:
    """Row-major reinterpretation; one extent may be -1 (inferred)."""
    v = _value(t)
    shape = _resolve_shape(new_shape, v.size)
    if isinstance(t, Var):
        old_shape = v.shape
        out = Tensor(v.data.reshape(shape))
        return t.tape.record(
            "reshape",
            (t,),
            out,
            vjp=lambda cot: (cot.reshape(old_shape),),
            recompute=lambda vals: vals[0].reshape(shape),
        )
    return Tensor(v.data.reshape(shape))


def permute(t: TensorLike, axes: Sequence[int]) -> TensorLike:
    """Axis reordering, materialized contiguously; works for any rank."""
    v = _value(t)
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(v.ndim)):
        raise ValueError(f"axes {axes} are not a permutation of 0..{v.ndim - 1}")
    if isinstance(t, Var):
        inverse = tuple(int(i) for i in np.argsort(axes))
        out = Tensor(np.ascontiguousarray(v.data.transpose(axes)))
        return t.tape.record(
            "permute",
            (t,),
            out,
            vjp=lambda cot: (np.ascontiguousarray(cot.transpose(inverse)),),
            recompute=lambda vals: np.ascontiguousarray(vals[0].transpose(axes)),
        )
    return Tensor(np.ascontiguousarray(v.data.transpose(axes)))


def concat_channels(*ts: TensorLike) -> TensorLike:
    """Concatenate 4-d tensors along the channel axis, argument order kept."""
    if not ts:
        raise ValueError("concat_channels needs at least one input")
    vals = [_value(t) for t in ts]
    for v in vals:
        _require_4d(v, "concat_channels")
    _require_same_dtype(*vals)
    ref = vals[0].shape
    for v in vals[1:]:
        if (v.shape[0], v.shape[2], v.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ValueError(
                f"mismatched batch/height/width: {ref} vs {v.shape}"
            )
    tape = _tape_of(*ts)
    if tape is None:
        return Tensor(np.concatenate([v.data for v in vals], axis=1))
    channels = [v.shape[1] for v in vals]
    offsets = np.cumsum([0] + channels)

    def vjp(cot):
        return tuple(
            np.ascontiguousarray(cot[:, offsets[i] : offsets[i + 1]]) for i in range(len(vals))
        )

    lifted = tuple(_lift(tape, t) for t in ts)
    out = Tensor(np.concatenate([v.data for v in vals], axis=1))
    return tape.record(
        "concat_channels",
        lifted,
        out,
        vjp=vjp,
        recompute=lambda inputs: np.concatenate(list(inputs), axis=1),
    )


def repeat_channels(t: TensorLike, count: int) -> TensorLike:
    """Tile a single-channel map to ``count`` channels (gate broadcasting)."""
    v = _value(t)
    _require_4d(v, "repeat_channels")
    if v.shape[1] != 1:
        raise ValueError(f"repeat_channels expects one channel, got {v.shape[1]}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if isinstance(t, Var):
        out = Tensor(np.ascontiguousarray(np.repeat(v.data, count, axis=1)))
        return t.tape.record(
            "repeat_channels",
            (t,),
            out,
            vjp=lambda cot: (cot.sum(axis=1, keepdims=True),),
            recompute=lambda vals: np.ascontiguousarray(np.repeat(vals[0], count, axis=1)),
        )
    return Tensor(np.ascontiguousarray(np.repeat(v.data, count, axis=1)))


# ---------------------------------------------------------------------------
# elementwise ops

def elementwise_add(a: TensorLike, b: TensorLike) -> TensorLike:
    va, vb = _value(a), _value(b)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch: {va.shape} vs {vb.shape}")
    _require_same_dtype(va, vb)
    tape = _tape_of(a, b)
    if tape is None:
        return Tensor(va.data + vb.data)
    av, bv = _lift(tape, a), _lift(tape, b)
    return tape.record(
        "add",
        (av, bv),
        Tensor(va.data + vb.data),
        vjp=lambda cot: (cot, cot),
        recompute=lambda vals: vals[0] + vals[1],
    )


def elementwise_mul(a: TensorLike, b: TensorLike) -> TensorLike:
    va, vb = _value(a), _value(b)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch: {va.shape} vs {vb.shape}")
    _require_same_dtype(va, vb)
    tape = _tape_of(a, b)
    if tape is None:
        return Tensor(va.data * vb.data)
    av, bv = _lift(tape, a), _lift(tape, b)
    ad, bd = va.data, vb.data
    return tape.record(
        "mul",
        (av, bv),
        Tensor(ad * bd),
        vjp=lambda cot: (cot * bd, cot * ad),
        recompute=lambda vals: vals[0] * vals[1],
    )


def scale(t: TensorLike, factor: float) -> TensorLike:
    """Multiply by a compile-time scalar (used for fixed branch averaging)."""
    v = _value(t)
    c = v.dtype.type(factor)
    if isinstance(t, Var):
        return t.tape.record(
            "scale",
            (t,),
            Tensor(v.data * c),
            vjp=lambda cot: (cot * c,),
            recompute=lambda vals: vals[0] * c,
        )
    return Tensor(v.data * c)


def _sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[neg])
    out[neg] = e / (1.0 + e)
    # keep the open interval even for saturating inputs
    info = np.finfo(x.dtype)
    np.clip(out, info.tiny, np.nextafter(x.dtype.type(1), x.dtype.type(0)), out=out)
    return out


def sigmoid(t: TensorLike) -> TensorLike:
    """Elementwise logistic; output clamped to the open interval (0, 1)."""
    v = _value(t)
    s = _sigmoid_array(v.data)
    if isinstance(t, Var):
        return t.tape.record(
            "sigmoid",
            (t,),
            Tensor(s),
            vjp=lambda cot: (cot * (s * (1.0 - s)),),
            recompute=lambda vals: _sigmoid_array(vals[0]),
        )
    return Tensor(s)


def silu(t: TensorLike) -> TensorLike:
    """x * sigmoid(x), composed from the mul and sigmoid primitives."""
    return elementwise_mul(t, sigmoid(t))


# ---------------------------------------------------------------------------
# convolution / normalization / pooling

def conv2d(x: TensorLike, spec: ConvSpec) -> TensorLike:
    """Grouped 2-d cross-correlation with zero padding, plus optional bias."""
    xv = _value(x)
    wv = _value(spec.weight)
    bv = _value(spec.bias) if spec.bias is not None else None
    _require_4d(xv, "conv2d")
    _require_same_dtype(*([xv, wv] + ([bv] if bv is not None else [])))
    spec.output_shape(xv.shape)  # validates channels and output extents
    stride, padding, groups = spec.stride, spec.padding, spec.groups
    w_shape = wv.shape
    x_shape = xv.shape

    tape = _tape_of(x, spec.weight, spec.bias)
    if tape is None:
        out = kernels.conv2d_raw(xv.data, wv.data, stride, padding, groups)
        if bv is not None:
            out += bv.data[None, :, None, None]
        return Tensor(out)

    inputs = [_lift(tape, x), _lift(tape, spec.weight)]
    if spec.bias is not None:
        inputs.append(_lift(tape, spec.bias))
    out = kernels.conv2d_raw(xv.data, wv.data, stride, padding, groups)
    if bv is not None:
        out += bv.data[None, :, None, None]
    xd, wd = xv.data, wv.data
    has_bias = bv is not None

    def vjp(cot):
        dx = kernels.conv2d_grad_input_raw(cot, wd, x_shape, stride, padding, groups)
        dw = kernels.conv2d_grad_weight_raw(cot, xd, w_shape, stride, padding, groups)
        if has_bias:
            return (dx, dw, cot.sum(axis=(0, 2, 3)))
        return (dx, dw)

    def recompute(vals):
        y = kernels.conv2d_raw(vals[0], vals[1], stride, padding, groups)
        if has_bias:
            y += vals[2][None, :, None, None]
        return y

    return tape.record("conv2d", tuple(inputs), Tensor(out), vjp=vjp, recompute=recompute)


def batch_norm(t: TensorLike, spec: BatchNormSpec) -> TensorLike:
    """Inference-style normalization with the spec's running statistics."""
    v = _value(t)
    gv = _value(spec.gamma)
    bv = _value(spec.beta)
    _require_4d(v, "batch_norm")
    _require_same_dtype(v, gv, bv, spec.mean, spec.var)
    if v.shape[1] != spec.channels:
        raise ValueError(
            f"channel mismatch: tensor has {v.shape[1]} channels, spec normalizes {spec.channels}"
        )
    mean = spec.mean.data[None, :, None, None]
    inv_std = 1.0 / np.sqrt(spec.var.data + v.dtype.type(spec.epsilon))
    inv_std = inv_std.astype(v.dtype)[None, :, None, None]

    def forward(xd, gd, bd):
        xhat = (xd - mean) * inv_std
        return xhat, gd[None, :, None, None] * xhat + bd[None, :, None, None]

    tape = _tape_of(t, spec.gamma, spec.beta)
    if tape is None:
        _, out = forward(v.data, gv.data, bv.data)
        return Tensor(out)

    xvar = _lift(tape, t)
    gvar = _lift(tape, spec.gamma)
    bvar = _lift(tape, spec.beta)
    xhat, out = forward(v.data, gv.data, bv.data)
    gd = gv.data

    def vjp(cot):
        dx = cot * (gd[None, :, None, None] * inv_std)
        dgamma = (cot * xhat).sum(axis=(0, 2, 3))
        dbeta = cot.sum(axis=(0, 2, 3))
        return (dx, dgamma, dbeta)

    return tape.record(
        "batch_norm",
        (xvar, gvar, bvar),
        Tensor(out),
        vjp=vjp,
        recompute=lambda vals: forward(vals[0], vals[1], vals[2])[1],
    )


def zpool(t: TensorLike) -> TensorLike:
    """(B, C, H, W) -> (B, 2, H, W): per-position channel max then mean.

    The mean accumulates in fixed channel order so results are bitwise
    stable; the max routes its gradient to the first maximal channel.
    """
    v = _value(t)
    _require_4d(v, "zpool")

    def forward(xd):
        mx = xd[:, 0].copy()
        acc = xd[:, 0].astype(xd.dtype, copy=True)
        for c in range(1, xd.shape[1]):
            np.maximum(mx, xd[:, c], out=mx)
            acc += xd[:, c]
        acc /= xd.dtype.type(xd.shape[1])
        return np.ascontiguousarray(np.stack([mx, acc], axis=1))

    if not isinstance(t, Var):
        return Tensor(forward(v.data))

    xd = v.data
    n_channels = v.shape[1]
    argmax = np.argmax(xd, axis=1)  # first maximal channel wins

    def vjp(cot):
        dx = np.zeros_like(xd)
        np.put_along_axis(dx, argmax[:, None], cot[:, 0:1], axis=1)
        dx += cot[:, 1:2] / xd.dtype.type(n_channels)
        return (dx,)

    return t.tape.record(
        "zpool",
        (t,),
        Tensor(forward(xd)),
        vjp=vjp,
        recompute=lambda vals: forward(vals[0]),
    )
