"""Adaptive gated multi-branch focus fusion.

Up to three parallel branches (gated unit, the multi-scale selection
pipeline, triplet attention) process the same input; their outputs are
concatenated in that fixed order and fused by a pointwise convolution,
batch norm, and SiLU.  The "no-fmds" variant drops the middle branch,
which is the ablation the module exposes first-class.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import ops
from .fmds import FmdsConfig, fmds_flop_stages, fmds_forward, fmds_param_count
from .gates import ATTN_KERNEL, GatedUnitParams, TripletAttentionParams
from .gates import gated_unit_forward, triplet_attention_forward
from .tensor import BatchNormSpec, ConvSpec, Tensor, flop_count, make_conv_spec

__all__ = [
    "AgmfConfig",
    "agmf_forward",
    "fuse_branches",
    "agmf_param_count",
    "agmf_flop_stages",
    "agmf_config_from_recipe",
    "VARIANTS",
]

VARIANTS = ("full", "no-fmds")


@dataclass(frozen=True)
class AgmfConfig:
    """Branch enable flags, per-branch parameters, and the fusion stage."""

    channels: int
    use_gated_unit: bool
    use_fmds: bool
    use_triplet: bool
    gated_unit: Optional[GatedUnitParams]
    fmds: Optional[FmdsConfig]
    triplet: Optional[TripletAttentionParams]
    fusion_conv: ConvSpec
    fusion_bn: BatchNormSpec
    activation: bool = True

    def __post_init__(self):
        c = self.channels
        if c < 1:
            raise ValueError("channels must be >= 1")
        flags = (self.use_gated_unit, self.use_fmds, self.use_triplet)
        if not any(flags):
            raise ValueError("at least one branch must be enabled")
        if self.use_gated_unit:
            if self.gated_unit is None or self.gated_unit.channels != c:
                raise ValueError("gated-unit branch enabled but its parameters do not match")
        if self.use_fmds:
            if self.fmds is None or self.fmds.in_channels != c or self.fmds.out_channels != c:
                raise ValueError("fmds branch must map C -> C channels inside the fusion module")
        if self.use_triplet and self.triplet is None:
            raise ValueError("triplet branch enabled but its parameters are missing")
        k = self.enabled_branch_count
        if (
            self.fusion_conv.kernel != (1, 1)
            or self.fusion_conv.groups != 1
            or self.fusion_conv.in_channels != k * c
            or self.fusion_conv.out_channels != c
        ):
            raise ValueError(
                f"fusion conv must be a 1x1 mapping {k}*C={k * c} channels to {c}"
            )
        if self.fusion_bn.channels != c:
            raise ValueError("fusion BN must normalize C channels")

    @property
    def enabled_branch_count(self) -> int:
        return sum((self.use_gated_unit, self.use_fmds, self.use_triplet))

    @property
    def variant(self) -> str:
        flags = (self.use_gated_unit, self.use_fmds, self.use_triplet)
        if flags == (True, True, True):
            return "full"
        if flags == (True, False, True):
            return "no-fmds"
        return "custom"

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        channels: int,
        variant: str = "full",
        kernels: Sequence[int] = (3, 5, 7),
        bias: bool = True,
        dtype=np.float64,
        activation: bool = True,
    ) -> "AgmfConfig":
        """Random init; draws enabled branches in fixed order, fusion last."""
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        use_fmds = variant == "full"
        gated = GatedUnitParams.create(rng, channels, bias=bias, dtype=dtype)
        fmds_cfg = (
            FmdsConfig.create(rng, channels, channels, kernels=kernels, bias=bias, dtype=dtype)
            if use_fmds
            else None
        )
        triplet = TripletAttentionParams.create(rng, bias=bias, dtype=dtype)
        k = 3 if use_fmds else 2
        fusion_conv = make_conv_spec(rng, k * channels, channels, 1, bias=bias, dtype=dtype)
        return cls(
            channels=channels,
            use_gated_unit=True,
            use_fmds=use_fmds,
            use_triplet=True,
            gated_unit=gated,
            fmds=fmds_cfg,
            triplet=triplet,
            fusion_conv=fusion_conv,
            fusion_bn=BatchNormSpec.identity(channels, dtype=dtype),
            activation=activation,
        )

    def named_params(self, prefix: str = "") -> Iterator[tuple]:
        if self.use_gated_unit:
            yield from self.gated_unit.named_params(prefix + "gu.")
        if self.use_fmds:
            yield from self.fmds.named_params(prefix + "fmds.")
        if self.use_triplet:
            yield from self.triplet.named_params(prefix + "triplet.")
        yield from self.fusion_conv.named_params(prefix + "fusion.conv.")
        yield from self.fusion_bn.named_params(prefix + "fusion.bn.")

    def map_params(self, fn: Callable, prefix: str = "") -> "AgmfConfig":
        return replace(
            self,
            gated_unit=(
                self.gated_unit.map_params(fn, prefix + "gu.") if self.use_gated_unit else self.gated_unit
            ),
            fmds=self.fmds.map_params(fn, prefix + "fmds.") if self.use_fmds else self.fmds,
            triplet=(
                self.triplet.map_params(fn, prefix + "triplet.") if self.use_triplet else self.triplet
            ),
            fusion_conv=self.fusion_conv.map_params(fn, prefix + "fusion.conv."),
            fusion_bn=self.fusion_bn.map_params(fn, prefix + "fusion.bn."),
        )

    def recipe(self, seed: int) -> dict:
        return {
            "module": "agmf",
            "channels": self.channels,
            "variant": self.variant,
            "kernels": list(self.fmds.kernels) if self.use_fmds else [3, 5, 7],
            "bias": self.fusion_conv.bias is not None,
            "dtype": "f32" if self.fusion_conv.weight.dtype == np.float32 else "f64",
            "seed": seed,
        }


def agmf_config_from_recipe(recipe: dict) -> AgmfConfig:
    if recipe.get("module") != "agmf":
        raise ValueError(f"recipe is not an agmf config: {recipe.get('module')!r}")
    from .tensor import make_rng

    dtype = np.float32 if recipe.get("dtype", "f64") == "f32" else np.float64
    return AgmfConfig.create(
        make_rng(int(recipe["seed"])),
        int(recipe["channels"]),
        variant=recipe.get("variant", "full"),
        kernels=tuple(recipe.get("kernels", (3, 5, 7))),
        bias=bool(recipe.get("bias", True)),
        dtype=dtype,
    )


def branch_outputs(x, cfg: AgmfConfig) -> list:
    """Enabled branch outputs in the fixed order gated unit, fmds, triplet."""
    outs = []
    if cfg.use_gated_unit:
        outs.append(gated_unit_forward(x, cfg.gated_unit))
    if cfg.use_fmds:
        outs.append(fmds_forward(x, cfg.fmds))
    if cfg.use_triplet:
        outs.append(triplet_attention_forward(x, cfg.triplet))
    return outs


def fuse_branches(outputs: Sequence, cfg: AgmfConfig):
    """Concat in branch order, then pointwise conv + BN + SiLU."""
    if len(outputs) != cfg.enabled_branch_count:
        raise ValueError(
            f"got {len(outputs)} branch outputs, config enables {cfg.enabled_branch_count}"
        )
    shapes = {tuple((o.value if hasattr(o, "value") else o).shape) for o in outputs}
    if len(shapes) != 1:
        raise ValueError(f"branch outputs disagree on shape: {sorted(shapes)}")
    shape = next(iter(shapes))
    if len(shape) != 4 or shape[1] != cfg.channels:
        raise ValueError(f"branch outputs must be (B, {cfg.channels}, H, W), got {shape}")
    fused = ops.batch_norm(ops.conv2d(ops.concat_channels(*outputs), cfg.fusion_conv), cfg.fusion_bn)
    return ops.silu(fused) if cfg.activation else fused


def agmf_forward(x, cfg: AgmfConfig):
    """Run every enabled branch on x and fuse; output shape equals input."""
    v = x.value if hasattr(x, "value") else x
    if v.ndim != 4 or v.shape[1] != cfg.channels:
        raise ValueError(f"expected {cfg.channels}-channel input, got shape {v.shape}")
    if cfg.use_fmds and (v.shape[2] % 2 or v.shape[3] % 2):
        raise ValueError(
            f"spatial extents must be even when the fmds branch is enabled, got {v.shape[2]}x{v.shape[3]}"
        )
    return fuse_branches(branch_outputs(x, cfg), cfg)


def agmf_param_count(cfg: AgmfConfig) -> int:
    """Closed-form scalar-parameter count across enabled branches + fusion."""
    c = cfg.channels
    total = 0
    if cfg.use_gated_unit:
        total += c * c + (c if cfg.gated_unit.conv.bias is not None else 0)
        total += 2 * c  # gamma, beta
    if cfg.use_fmds:
        total += fmds_param_count(cfg.fmds)
    if cfg.use_triplet:
        for branch in (cfg.triplet.hw, cfg.triplet.cw, cfg.triplet.ch):
            total += ATTN_KERNEL * ATTN_KERNEL * 2
            total += 1 if branch.conv.bias is not None else 0
            total += 2  # gamma, beta over the single gate channel
    total += cfg.enabled_branch_count * c * c
    total += c if cfg.fusion_conv.bias is not None else 0
    total += 2 * c  # fusion gamma, beta
    return total


def agmf_flop_stages(cfg: AgmfConfig, input_shape: Sequence[int]) -> list:
    """(stage name, FLOPs) for every convolution the module runs."""
    b, c, h, w = input_shape
    if c != cfg.channels:
        raise ValueError(f"expected {cfg.channels} channels in input shape, got {c}")
    stages = []
    if cfg.use_gated_unit:
        stages.append(("gu.conv1x1", flop_count(cfg.gated_unit.conv, tuple(input_shape))))
    if cfg.use_fmds:
        stages.extend(
            (f"fmds.{name}", flops) for name, flops in fmds_flop_stages(cfg.fmds, input_shape)
        )
    if cfg.use_triplet:
        # each branch convolves the 2-channel z-pool of its own orientation
        stages.append(("triplet.hw.conv7x7", flop_count(cfg.triplet.hw.conv, (b, 2, h, w))))
        stages.append(("triplet.cw.conv7x7", flop_count(cfg.triplet.cw.conv, (b, 2, c, w))))
        stages.append(("triplet.ch.conv7x7", flop_count(cfg.triplet.ch.conv, (b, 2, h, c))))
    k = cfg.enabled_branch_count
    stages.append(("fusion.conv1x1", flop_count(cfg.fusion_conv, (b, k * c, h, w))))
    return stages
