"""Dense NCHW tensors, convolution/normalization specs, and FLOP accounting.

Feature maps are 4-d arrays in (batch, channels, height, width) order.
Higher-rank shapes appear transiently inside block partitioning, so Tensor
accepts any rank >= 1; operations that only make sense on feature maps
validate 4-d-ness themselves.  All data is 32- or 64-bit floating point,
C-contiguous, and read-only once wrapped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ConvSpec",
    "BatchNormSpec",
    "make_rng",
    "make_conv_spec",
    "flop_count",
]

_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def make_rng(seed: int) -> np.random.Generator:
    """The single PRNG every random draw flows through (64-bit PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))


class Tensor:
    """Immutable dense array of float32 or float64 scalars.

    The constructor takes ownership of the given ndarray (it is made
    contiguous if needed and locked read-only in place).  Use
    :meth:`from_array` to copy from data you intend to keep mutating.
    """

    __slots__ = ("_data",)

    def __init__(self, data: np.ndarray):
        if not isinstance(data, np.ndarray):
            raise TypeError("Tensor wraps an ndarray; use Tensor.from_array for other data")
        arr = np.ascontiguousarray(data)
        if arr.dtype not in _ALLOWED_DTYPES:
            raise ValueError(f"unsupported dtype {arr.dtype}; use float32 or float64")
        if arr.ndim < 1:
            raise ValueError("tensors must have rank >= 1")
        if any(extent < 1 for extent in arr.shape):
            raise ValueError(f"all extents must be >= 1, got shape {arr.shape}")
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def from_array(cls, data, dtype=None) -> "Tensor":
        """Copying constructor; casts to float64 when the source is not float."""
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in _ALLOWED_DTYPES else np.float64
        return cls(arr.astype(dtype, copy=True))

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype=np.float64) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=dtype))

    @classmethod
    def full(cls, shape: Sequence[int], value: float, dtype=np.float64) -> "Tensor":
        return cls(np.full(tuple(shape), value, dtype=dtype))

    @property
    def data(self) -> np.ndarray:
        """The underlying read-only ndarray."""
        return self._data

    @property
    def shape(self) -> tuple:
        return self._data.shape

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    def astype(self, dtype) -> "Tensor":
        return Tensor(self._data.astype(dtype, copy=True))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


def _as_pair(v) -> tuple:
    if isinstance(v, int):
        return (v, v)
    pair = tuple(int(x) for x in v)
    if len(pair) != 2:
        raise ValueError(f"expected an int or a pair, got {v!r}")
    return pair


@dataclass(frozen=True)
class ConvSpec:
    """One 2-d convolution: geometry plus its weights.

    ``weight`` has shape (C_out, C_in/groups, K_h, K_w); ``bias``, when
    present, has shape (C_out,).  Cross-correlation semantics with zero
    padding; ``groups == C_in == C_out`` gives a depthwise convolution and
    a 1x1 kernel with ``groups == 1`` a pointwise one.
    """

    kernel: tuple
    stride: tuple
    padding: tuple
    groups: int
    weight: Tensor
    bias: Optional[Tensor] = None

    def __post_init__(self):
        object.__setattr__(self, "kernel", _as_pair(self.kernel))
        object.__setattr__(self, "stride", _as_pair(self.stride))
        object.__setattr__(self, "padding", _as_pair(self.padding))
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        if kh < 1 or kw < 1:
            raise ValueError(f"kernel extents must be >= 1, got {self.kernel}")
        if sh < 1 or sw < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if ph < 0 or pw < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if self.groups < 1:
            raise ValueError(f"groups must be >= 1, got {self.groups}")
        if self.weight.ndim != 4:
            raise ValueError(f"weight must be 4-d, got shape {self.weight.shape}")
        if self.weight.shape[2:] != (kh, kw):
            raise ValueError(
                f"weight spatial shape {self.weight.shape[2:]} does not match kernel {self.kernel}"
            )
        if self.weight.shape[0] % self.groups != 0:
            raise ValueError(
                f"groups ({self.groups}) must divide out-channels ({self.weight.shape[0]})"
            )
        if self.bias is not None:
            if self.bias.shape != (self.weight.shape[0],):
                raise ValueError(
                    f"bias shape {self.bias.shape} does not match out-channels {self.weight.shape[0]}"
                )

    @property
    def in_channels(self) -> int:
        return self.groups * self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def output_shape(self, input_shape: Sequence[int]) -> tuple:
        """Output (B, C_out, H_out, W_out) for a 4-d input, with validation."""
        if len(input_shape) != 4:
            raise ValueError(f"expected a 4-d input shape, got {tuple(input_shape)}")
        b, c, h, w = input_shape
        if c != self.in_channels:
            raise ValueError(
                f"channel mismatch: spec expects {self.in_channels} input channels, got {c}"
            )
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        h_out = (h + 2 * ph - kh) // sh + 1
        w_out = (w + 2 * pw - kw) // sw + 1
        if h + 2 * ph < kh or w + 2 * pw < kw or h_out < 1 or w_out < 1:
            raise ValueError(
                f"non-positive output extent for input {tuple(input_shape)} with "
                f"kernel {self.kernel}, stride {self.stride}, padding {self.padding}"
            )
        return (b, self.out_channels, h_out, w_out)

    def named_params(self, prefix: str = "") -> Iterator[tuple]:
        yield prefix + "weight", self.weight
        if self.bias is not None:
            yield prefix + "bias", self.bias

    def map_params(self, fn: Callable, prefix: str = "") -> "ConvSpec":
        new_bias = None if self.bias is None else fn(prefix + "bias", self.bias)
        return replace(self, weight=fn(prefix + "weight", self.weight), bias=new_bias)


@dataclass(frozen=True)
class BatchNormSpec:
    """Per-channel affine normalization against supplied running statistics.

    Only gamma and beta are trainable; mean and var are fixed statistics.
    epsilon may be zero as long as every var entry stays strictly positive
    under the sum var + epsilon.
    """

    gamma: Tensor
    beta: Tensor
    mean: Tensor
    var: Tensor
    epsilon: float = 1e-5

    def __post_init__(self):
        vectors = (self.gamma, self.beta, self.mean, self.var)
        lengths = {v.shape for v in vectors}
        if any(v.ndim != 1 for v in vectors) or len(lengths) != 1:
            raise ValueError(
                "gamma/beta/mean/var must be 1-d vectors of one common length, got "
                + ", ".join(str(v.shape) for v in vectors)
            )
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if np.any(self.var.data < 0):
            raise ValueError("var entries must be >= 0")
        if np.any(self.var.data + self.epsilon <= 0):
            raise ValueError("var + epsilon must be strictly positive")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def identity(cls, channels: int, dtype=np.float64, epsilon: float = 1e-5) -> "BatchNormSpec":
        """gamma=1, beta=0, mean=0, var=1: the initialization policy."""
        return cls(
            gamma=Tensor(np.ones(channels, dtype=dtype)),
            beta=Tensor(np.zeros(channels, dtype=dtype)),
            mean=Tensor(np.zeros(channels, dtype=dtype)),
            var=Tensor(np.ones(channels, dtype=dtype)),
            epsilon=epsilon,
        )

    def named_params(self, prefix: str = "") -> Iterator[tuple]:
        yield prefix + "gamma", self.gamma
        yield prefix + "beta", self.beta

    def map_params(self, fn: Callable, prefix: str = "") -> "BatchNormSpec":
        return replace(
            self,
            gamma=fn(prefix + "gamma", self.gamma),
            beta=fn(prefix + "beta", self.beta),
        )


def make_conv_spec(
    rng: np.random.Generator,
    in_channels: int,
    out_channels: int,
    kernel,
    stride=(1, 1),
    padding=(0, 0),
    groups: int = 1,
    bias: bool = True,
    dtype=np.float64,
) -> ConvSpec:
    """Random convolution spec with uniform(-b, b) init, b = sqrt(6 / fan_in).

    fan_in = K_h * K_w * C_in / groups.  The bias, when enabled, is drawn
    from the same interval and the same generator, weight first.
    """
    kernel = _as_pair(kernel)
    if in_channels % groups != 0:
        raise ValueError(f"groups ({groups}) must divide in-channels ({in_channels})")
    in_per_group = in_channels // groups
    fan_in = kernel[0] * kernel[1] * in_per_group
    bound = math.sqrt(6.0 / fan_in)
    weight = rng.uniform(-bound, bound, size=(out_channels, in_per_group) + kernel)
    bias_t = None
    if bias:
        bias_t = Tensor(rng.uniform(-bound, bound, size=out_channels).astype(dtype))
    return ConvSpec(
        kernel=kernel,
        stride=_as_pair(stride),
        padding=_as_pair(padding),
        groups=groups,
        weight=Tensor(weight.astype(dtype)),
        bias=bias_t,
    )


def flop_count(spec: ConvSpec, input_shape: Sequence[int]) -> int:
    """FLOPs of one convolution application, multiply-add counted as two."""
    b, _c_out, h_out, w_out = spec.output_shape(input_shape)
    kh, kw = spec.kernel
    in_per_group = spec.in_channels // spec.groups
    return 2 * kh * kw * in_per_group * spec.out_channels * h_out * w_out * b
