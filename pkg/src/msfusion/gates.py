"""Gating branches: the multiplicative gated unit and triplet attention.

The gated unit scales its input by sigmoid(BN(1x1 conv)).  Triplet
attention applies the same spatial-gate recipe (z-pool, 7x7 conv, BN,
sigmoid, multiply) in three orientations of the tensor: as-is over (H, W)
and rotated so the gate sweeps the (C, W) and (C, H) planes, averaging the
three gated maps with fixed weight 1/3.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterator

import numpy as np

from . import ops
from .tensor import BatchNormSpec, ConvSpec, Tensor, make_conv_spec

__all__ = [
    "GatedUnitParams",
    "SpatialGateParams",
    "TripletAttentionParams",
    "gated_unit_forward",
    "triplet_attention_forward",
]

ATTN_KERNEL = 7


@dataclass(frozen=True)
class GatedUnitParams:
    """1x1 gate convolution plus its batch norm, both over C channels."""

    conv: ConvSpec
    bn: BatchNormSpec

    def __post_init__(self):
        c = self.conv.in_channels
        if (
            self.conv.kernel != (1, 1)
            or self.conv.stride != (1, 1)
            or self.conv.padding != (0, 0)
            or self.conv.groups != 1
            or self.conv.out_channels != c
        ):
            raise ValueError("gate conv must be a channel-preserving 1x1 convolution")
        if self.bn.channels != c:
            raise ValueError(f"gate BN normalizes {self.bn.channels} channels, conv emits {c}")

    @property
    def channels(self) -> int:
        return self.conv.in_channels

    @classmethod
    def create(cls, rng, channels: int, bias: bool = True, dtype=np.float64) -> "GatedUnitParams":
        return cls(
            conv=make_conv_spec(rng, channels, channels, 1, bias=bias, dtype=dtype),
            bn=BatchNormSpec.identity(channels, dtype=dtype),
        )

    def named_params(self, prefix: str = "") -> Iterator[tuple]:
        yield from self.conv.named_params(prefix + "conv.")
        yield from self.bn.named_params(prefix + "bn.")

    def map_params(self, fn: Callable, prefix: str = "") -> "GatedUnitParams":
        return replace(
            self,
            conv=self.conv.map_params(fn, prefix + "conv."),
            bn=self.bn.map_params(fn, prefix + "bn."),
        )


@dataclass(frozen=True)
class SpatialGateParams:
    """One attention branch: 2 -> 1 channel 7x7 conv plus batch norm."""

    conv: ConvSpec
    bn: BatchNormSpec

    def __post_init__(self):
        pad = (ATTN_KERNEL - 1) // 2
        if (
            self.conv.kernel != (ATTN_KERNEL, ATTN_KERNEL)
            or self.conv.stride != (1, 1)
            or self.conv.padding != (pad, pad)
            or self.conv.groups != 1
            or self.conv.in_channels != 2
            or self.conv.out_channels != 1
        ):
            raise ValueError(
                f"attention conv must map the 2 z-pool channels to 1 with a "
                f"same-padding {ATTN_KERNEL}x{ATTN_KERNEL} kernel"
            )
        if self.bn.channels != 1:
            raise ValueError("attention BN normalizes exactly 1 channel")

    @classmethod
    def create(cls, rng, bias: bool = True, dtype=np.float64) -> "SpatialGateParams":
        pad = (ATTN_KERNEL - 1) // 2
        return cls(
            conv=make_conv_spec(rng, 2, 1, ATTN_KERNEL, padding=pad, bias=bias, dtype=dtype),
            bn=BatchNormSpec.identity(1, dtype=dtype),
        )

    def named_params(self, prefix: str = "") -> Iterator[tuple]:
        yield from self.conv.named_params(prefix + "conv.")
        yield from self.bn.named_params(prefix + "bn.")

    def map_params(self, fn: Callable, prefix: str = "") -> "SpatialGateParams":
        return replace(
            self,
            conv=self.conv.map_params(fn, prefix + "conv."),
            bn=self.bn.map_params(fn, prefix + "bn."),
        )


@dataclass(frozen=True)
class TripletAttentionParams:
    """The three orientation branches: (H, W), (C, W), and (C, H)."""

    hw: SpatialGateParams
    cw: SpatialGateParams
    ch: SpatialGateParams

    @classmethod
    def create(cls, rng, bias: bool = True, dtype=np.float64) -> "TripletAttentionParams":
        return cls(
            hw=SpatialGateParams.create(rng, bias=bias, dtype=dtype),
            cw=SpatialGateParams.create(rng, bias=bias, dtype=dtype),
            ch=SpatialGateParams.create(rng, bias=bias, dtype=dtype),
        )

    def named_params(self, prefix: str = "") -> Iterator[tuple]:
        yield from self.hw.named_params(prefix + "hw.")
        yield from self.cw.named_params(prefix + "cw.")
        yield from self.ch.named_params(prefix + "ch.")

    def map_params(self, fn: Callable, prefix: str = "") -> "TripletAttentionParams":
        return replace(
            self,
            hw=self.hw.map_params(fn, prefix + "hw."),
            cw=self.cw.map_params(fn, prefix + "cw."),
            ch=self.ch.map_params(fn, prefix + "ch."),
        )


def gated_unit_forward(y, p: GatedUnitParams):
    """y * sigmoid(BN(conv1x1(y))); the gate stays strictly inside (0, 1)."""
    v = y.value if hasattr(y, "value") else y
    if v.ndim != 4 or v.shape[1] != p.channels:
        raise ValueError(f"expected {p.channels}-channel input, got shape {v.shape}")
    weight = ops.sigmoid(ops.batch_norm(ops.conv2d(y, p.conv), p.bn))
    return ops.elementwise_mul(y, weight)


def _spatial_gate(x, p: SpatialGateParams):
    """Gate the current layout: z-pool over axis 1, conv+BN+sigmoid, multiply."""
    v = x.value if hasattr(x, "value") else x
    gate = ops.sigmoid(ops.batch_norm(ops.conv2d(ops.zpool(x), p.conv), p.bn))
    return ops.elementwise_mul(x, ops.repeat_channels(gate, v.shape[1]))


def triplet_attention_forward(x, p: TripletAttentionParams):
    """Equal-weight average of the three rotated spatial gates."""
    v = x.value if hasattr(x, "value") else x
    if v.ndim != 4:
        raise ValueError(f"expected a 4-d input, got shape {v.shape}")
    hw = _spatial_gate(x, p.hw)
    cw = ops.permute(_spatial_gate(ops.permute(x, (0, 2, 1, 3)), p.cw), (0, 2, 1, 3))
    ch = ops.permute(_spatial_gate(ops.permute(x, (0, 3, 2, 1)), p.ch), (0, 3, 2, 1))
    return ops.scale(ops.elementwise_add(ops.elementwise_add(hw, cw), ch), 1.0 / 3.0)
