"""Fine-grained multi-scale dynamic selection pipeline.

An input map is split into its four spatial quadrants (stacked along the
batch axis), each quadrant runs through three depthwise-separable branches
of increasing kernel size whose outputs are summed, the quadrants are put
back in place, the result is concatenated channel-wise with the original
map, and a final depthwise-separable projection performs the adaptive
selection down to the configured output channels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterator, Sequence

import numpy as np

from . import ops
from .tensor import ConvSpec, Tensor, flop_count, make_conv_spec

__all__ = [
    "FmdsConfig",
    "partition_blocks",
    "reassemble_blocks",
    "multiscale_branch_sum",
    "concat_original",
    "adaptive_select",
    "fmds_forward",
    "fmds_param_count",
    "fmds_flop_stages",
    "fmds_config_from_recipe",
]

SELECT_KERNEL = 3  # depthwise stage of the selection projection


def _check_branch(i: int, dw: ConvSpec, pw: ConvSpec, channels: int) -> None:
    k = dw.kernel[0]
    if dw.kernel[0] != dw.kernel[1] or k % 2 == 0:
        raise ValueError(f"branch {i}: depthwise kernel must be odd square, got {dw.kernel}")
    if dw.in_channels != channels or dw.out_channels != channels or dw.groups != channels:
        raise ValueError(f"branch {i}: depthwise stage must map {channels} channels depthwise")
    if dw.stride != (1, 1) or dw.padding != ((k - 1) // 2, (k - 1) // 2):
        raise ValueError(f"branch {i}: depthwise stage must be stride 1 with same-padding")
    if pw.kernel != (1, 1) or pw.stride != (1, 1) or pw.padding != (0, 0) or pw.groups != 1:
        raise ValueError(f"branch {i}: pointwise stage must be a plain 1x1 convolution")
    if pw.in_channels != channels or pw.out_channels != channels:
        raise ValueError(f"branch {i}: pointwise stage must map {channels} -> {channels} channels")


@dataclass(frozen=True)
class FmdsConfig:
    """Channel counts, the branch kernel triple, and every convolution spec."""

    in_channels: int
    out_channels: int
    kernels: tuple
    branch_dw: tuple
    branch_pw: tuple
    select_dw: ConvSpec
    select_pw: ConvSpec

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        c = self.in_channels
        if c < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if len(self.kernels) != 3 or len(self.branch_dw) != 3 or len(self.branch_pw) != 3:
            raise ValueError("exactly three branches are expected")
        for i, (k, dw, pw) in enumerate(zip(self.kernels, self.branch_dw, self.branch_pw)):
            if dw.kernel != (k, k):
                raise ValueError(f"branch {i}: spec kernel {dw.kernel} != configured {k}")
            _check_branch(i, dw, pw, c)
        sd, sp = self.select_dw, self.select_pw
        if (
            sd.in_channels != 2 * c
            or sd.out_channels != 2 * c
            or sd.groups != 2 * c
            or sd.kernel != (SELECT_KERNEL, SELECT_KERNEL)
            or sd.stride != (1, 1)
            or sd.padding != (1, 1)
        ):
            raise ValueError("selection depthwise stage must be 3x3 same-padding over 2C channels")
        if (
            sp.kernel != (1, 1)
            or sp.groups != 1
            or sp.in_channels != 2 * c
            or sp.out_channels != self.out_channels
        ):
            raise ValueError("selection pointwise stage must map 2C -> out_channels")

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        in_channels: int,
        out_channels: int,
        kernels: Sequence[int] = (3, 5, 7),
        bias: bool = True,
        dtype=np.float64,
    ) -> "FmdsConfig":
        """Random init; draws branches in order, then the selection pair."""
        c = in_channels
        dws, pws = [], []
        for k in kernels:
            pad = (k - 1) // 2
            dws.append(make_conv_spec(rng, c, c, k, padding=pad, groups=c, bias=bias, dtype=dtype))
            pws.append(make_conv_spec(rng, c, c, 1, bias=bias, dtype=dtype))
        select_dw = make_conv_spec(
            rng, 2 * c, 2 * c, SELECT_KERNEL, padding=1, groups=2 * c, bias=bias, dtype=dtype
        )
        select_pw = make_conv_spec(rng, 2 * c, out_channels, 1, bias=bias, dtype=dtype)
        return cls(
            in_channels=c,
            out_channels=out_channels,
            kernels=tuple(kernels),
            branch_dw=tuple(dws),
            branch_pw=tuple(pws),
            select_dw=select_dw,
            select_pw=select_pw,
        )

    def named_params(self, prefix: str = "") -> Iterator[tuple]:
        for i, (dw, pw) in enumerate(zip(self.branch_dw, self.branch_pw)):
            yield from dw.named_params(f"{prefix}branch{i}.dw.")
            yield from pw.named_params(f"{prefix}branch{i}.pw.")
        yield from self.select_dw.named_params(prefix + "select.dw.")
        yield from self.select_pw.named_params(prefix + "select.pw.")

    def map_params(self, fn: Callable, prefix: str = "") -> "FmdsConfig":
        return replace(
            self,
            branch_dw=tuple(
                dw.map_params(fn, f"{prefix}branch{i}.dw.") for i, dw in enumerate(self.branch_dw)
            ),
            branch_pw=tuple(
                pw.map_params(fn, f"{prefix}branch{i}.pw.") for i, pw in enumerate(self.branch_pw)
            ),
            select_dw=self.select_dw.map_params(fn, prefix + "select.dw."),
            select_pw=self.select_pw.map_params(fn, prefix + "select.pw."),
        )

    def recipe(self, seed: int) -> dict:
        return {
            "module": "fmds",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernels": list(self.kernels),
            "bias": self.branch_dw[0].bias is not None,
            "dtype": "f32" if self.branch_dw[0].weight.dtype == np.float32 else "f64",
            "seed": seed,
        }


def fmds_config_from_recipe(recipe: dict) -> FmdsConfig:
    """Rebuild a config (weights included) from its serialized recipe."""
    if recipe.get("module") != "fmds":
        raise ValueError(f"recipe is not an fmds config: {recipe.get('module')!r}")
    from .tensor import make_rng

    dtype = np.float32 if recipe.get("dtype", "f64") == "f32" else np.float64
    return FmdsConfig.create(
        make_rng(int(recipe["seed"])),
        int(recipe["in_channels"]),
        int(recipe["out_channels"]),
        kernels=tuple(recipe.get("kernels", (3, 5, 7))),
        bias=bool(recipe.get("bias", True)),
        dtype=dtype,
    )


def _require_even_spatial(shape: tuple) -> None:
    _b, _c, h, w = shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial extents must be even to partition into quadrants, got {h}x{w}")


def partition_blocks(x):
    """(B, C, H, W) -> (4B, C, H/2, W/2) spatial quadrants.

    Image b's quadrants land at batch indices 4b..4b+3 in row-major block
    order: top-left, top-right, bottom-left, bottom-right.
    """
    v = x.value if hasattr(x, "value") else x
    if v.ndim != 4:
        raise ValueError(f"partition_blocks expects a 4-d tensor, got shape {v.shape}")
    _require_even_spatial(v.shape)
    b, c, h, w = v.shape
    t = ops.reshape(x, (b, c, 2, h // 2, 2, w // 2))
    t = ops.permute(t, (0, 2, 4, 1, 3, 5))
    return ops.reshape(t, (4 * b, c, h // 2, w // 2))


def reassemble_blocks(blocks, batch: int):
    """Exact inverse of :func:`partition_blocks` for the given batch count."""
    v = blocks.value if hasattr(blocks, "value") else blocks
    if v.ndim != 4:
        raise ValueError(f"reassemble_blocks expects a 4-d tensor, got shape {v.shape}")
    if batch < 1 or v.shape[0] % 4 != 0 or v.shape[0] != 4 * batch:
        raise ValueError(
            f"block batch extent {v.shape[0]} is not 4x the target batch count {batch}"
        )
    _, c, h, w = v.shape
    t = ops.reshape(blocks, (batch, 2, 2, c, h, w))
    t = ops.permute(t, (0, 3, 1, 4, 2, 5))
    return ops.reshape(t, (batch, c, 2 * h, 2 * w))


def multiscale_branch_sum(blocks, cfg: FmdsConfig):
    """Sum of the three depthwise-separable branches, fixed branch order."""
    v = blocks.value if hasattr(blocks, "value") else blocks
    if v.ndim != 4 or v.shape[1] != cfg.in_channels:
        raise ValueError(
            f"expected {cfg.in_channels}-channel blocks, got shape {v.shape}"
        )
    total = None
    for dw, pw in zip(cfg.branch_dw, cfg.branch_pw):
        branch = ops.conv2d(ops.conv2d(blocks, dw), pw)
        total = branch if total is None else ops.elementwise_add(total, branch)
    return total


def concat_original(x, x_prime):
    """Channel concat of the original map (first) with the processed one."""
    vx = x.value if hasattr(x, "value") else x
    vp = x_prime.value if hasattr(x_prime, "value") else x_prime
    if vx.shape != vp.shape:
        raise ValueError(f"shape mismatch: {vx.shape} vs {vp.shape}")
    return ops.concat_channels(x, x_prime)


def adaptive_select(x_concat, cfg: FmdsConfig):
    """Depthwise-separable projection from 2C channels to out_channels."""
    v = x_concat.value if hasattr(x_concat, "value") else x_concat
    if v.ndim != 4 or v.shape[1] != 2 * cfg.in_channels:
        raise ValueError(
            f"adaptive selection expects {2 * cfg.in_channels} channels, got shape {v.shape}"
        )
    return ops.conv2d(ops.conv2d(x_concat, cfg.select_dw), cfg.select_pw)


def fmds_forward(x, cfg: FmdsConfig):
    """Full pipeline: partition, branch sum, reassemble, concat, select."""
    v = x.value if hasattr(x, "value") else x
    if v.ndim != 4 or v.shape[1] != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels}-channel input, got shape {v.shape}")
    blocks = partition_blocks(x)
    processed = multiscale_branch_sum(blocks, cfg)
    x_prime = reassemble_blocks(processed, v.shape[0])
    return adaptive_select(concat_original(x, x_prime), cfg)


def fmds_param_count(cfg: FmdsConfig) -> int:
    """Closed-form scalar-parameter count (weights plus any biases)."""
    c = cfg.in_channels
    total = 0
    for k, dw, pw in zip(cfg.kernels, cfg.branch_dw, cfg.branch_pw):
        total += k * k * c + (c if dw.bias is not None else 0)
        total += c * c + (c if pw.bias is not None else 0)
    total += SELECT_KERNEL * SELECT_KERNEL * 2 * c
    total += 2 * c if cfg.select_dw.bias is not None else 0
    total += 2 * c * cfg.out_channels
    total += cfg.out_channels if cfg.select_pw.bias is not None else 0
    return total


def fmds_flop_stages(cfg: FmdsConfig, input_shape: Sequence[int]) -> list:
    """(stage name, FLOPs) per convolution stage; reshapes count as zero."""
    b, c, h, w = input_shape
    if c != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels} channels in input shape, got {c}")
    _require_even_spatial(tuple(input_shape))
    block_shape = (4 * b, c, h // 2, w // 2)
    stages = []
    for i, (k, dw, pw) in enumerate(zip(cfg.kernels, cfg.branch_dw, cfg.branch_pw)):
        stages.append((f"branch{i}.dw{k}x{k}", flop_count(dw, block_shape)))
        stages.append((f"branch{i}.pw1x1", flop_count(pw, block_shape)))
    concat_shape = (b, 2 * c, h, w)
    stages.append(("select.dw3x3", flop_count(cfg.select_dw, concat_shape)))
    stages.append(("select.pw1x1", flop_count(cfg.select_pw, concat_shape)))
    return stages
