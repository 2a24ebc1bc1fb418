"""Fusion module: forwards, ablation variant, fusion oracles, counting."""

import dataclasses

import numpy as np
import pytest

from msfusion import ops
from msfusion.agmf import (
    AgmfConfig,
    agmf_config_from_recipe,
    agmf_flop_stages,
    agmf_forward,
    agmf_param_count,
    branch_outputs,
    fuse_branches,
)
from msfusion.autodiff import grad_check
from msfusion.fmds import fmds_param_count
from msfusion.gates import (
    GatedUnitParams,
    TripletAttentionParams,
    gated_unit_forward,
    triplet_attention_forward,
)
from msfusion.gradtargets import tie_safe_uniform
from msfusion.reference import conv2d_naive
from msfusion.tensor import BatchNormSpec, ConvSpec, Tensor, flop_count, make_rng

from conftest import uniform


def zero_convs(cfg):
    return cfg.map_params(
        lambda n, t: Tensor.zeros(t.shape, dtype=t.dtype) if n.endswith(("weight", "bias")) else t
    )


def single_branch_config(channels, activation=False) -> AgmfConfig:
    gu = GatedUnitParams.create(make_rng(3), channels)
    eye = np.eye(channels).reshape(channels, channels, 1, 1)
    fusion = ConvSpec(kernel=(1, 1), stride=(1, 1), padding=(0, 0), groups=1, weight=Tensor(eye))
    return AgmfConfig(
        channels=channels,
        use_gated_unit=True, use_fmds=False, use_triplet=False,
        gated_unit=gu, fmds=None, triplet=None,
        fusion_conv=fusion,
        fusion_bn=BatchNormSpec.identity(channels, epsilon=0.0),
        activation=activation,
    )


class TestForward:
    def test_three_branch_shape(self, rng):
        cfg = AgmfConfig.create(rng, 8)
        out = agmf_forward(uniform(rng, (2, 8, 8, 8)), cfg)
        assert out.shape == (2, 8, 8, 8)

    def test_no_fmds_variant_consumes_two_slabs(self, rng):
        cfg = AgmfConfig.create(rng, 8, variant="no-fmds")
        assert cfg.fusion_conv.in_channels == 16
        out = agmf_forward(uniform(rng, (2, 8, 8, 8)), cfg)
        assert out.shape == (2, 8, 8, 8)

    def test_zero_params_give_exact_zero(self, rng):
        cfg = zero_convs(AgmfConfig.create(rng, 4))
        out = agmf_forward(uniform(rng, (1, 4, 6, 6)), cfg)
        assert np.all(out.data == 0.0)

    def test_odd_extent_needs_no_fmds(self, rng):
        full = AgmfConfig.create(make_rng(5), 3)
        lean = AgmfConfig.create(make_rng(5), 3, variant="no-fmds")
        x = uniform(rng, (1, 3, 5, 7))
        with pytest.raises(ValueError, match="even"):
            agmf_forward(x, full)
        assert agmf_forward(x, lean).shape == (1, 3, 5, 7)

    def test_channel_mismatch(self, rng):
        cfg = AgmfConfig.create(rng, 4)
        with pytest.raises(ValueError, match="channel"):
            agmf_forward(uniform(rng, (1, 3, 4, 4)), cfg)


class TestFuseBranches:
    def test_identity_fusion_returns_branch(self, rng):
        cfg = single_branch_config(4, activation=False)
        x = uniform(rng, (1, 4, 5, 5))
        branch = gated_unit_forward(x, cfg.gated_unit)
        fused = fuse_branches([branch], cfg)
        assert np.array_equal(fused.data, branch.data)

    def test_averaging_weights_recover_silu_of_branch(self, rng):
        c = 3
        gu = GatedUnitParams.create(make_rng(4), c)
        w = np.concatenate([0.5 * np.eye(c), 0.5 * np.eye(c)], axis=1).reshape(c, 2 * c, 1, 1)
        cfg = AgmfConfig(
            channels=c,
            use_gated_unit=True, use_fmds=False, use_triplet=True,
            gated_unit=gu, fmds=None,
            triplet=TripletAttentionParams.create(make_rng(5)),
            fusion_conv=ConvSpec(kernel=(1, 1), stride=(1, 1), padding=(0, 0), groups=1, weight=Tensor(w)),
            fusion_bn=BatchNormSpec.identity(c, epsilon=0.0),
        )
        branch = gated_unit_forward(uniform(rng, (1, c, 4, 4)), gu)
        fused = fuse_branches([branch, branch], cfg)
        expected = ops.silu(branch)
        assert np.array_equal(fused.data, expected.data)

    def test_staged_oracle(self, rng):
        cfg = AgmfConfig.create(make_rng(6), 4)
        x = uniform(rng, (1, 4, 4, 4))
        outs = branch_outputs(x, cfg)
        got = fuse_branches(outs, cfg).data
        cat = np.concatenate([o.data for o in outs], axis=1)
        z = cfg.fusion_bn.gamma.data[None, :, None, None] * (
            conv2d_naive(Tensor(cat), cfg.fusion_conv).data
            - cfg.fusion_bn.mean.data[None, :, None, None]
        ) / np.sqrt(cfg.fusion_bn.var.data[None, :, None, None] + cfg.fusion_bn.epsilon) + (
            cfg.fusion_bn.beta.data[None, :, None, None]
        )
        ref = z / (1.0 + np.exp(-z)) * 1.0
        assert np.max(np.abs(got - ref)) < 1e-6

    def test_wrong_output_count(self, rng):
        cfg = AgmfConfig.create(rng, 4)
        x = uniform(rng, (1, 4, 4, 4))
        with pytest.raises(ValueError, match="branch outputs"):
            fuse_branches(branch_outputs(x, cfg)[:2], cfg)


class TestConfig:
    def test_zero_branches_rejected(self):
        cfg = single_branch_config(2)
        with pytest.raises(ValueError, match="at least one branch"):
            dataclasses.replace(cfg, use_gated_unit=False)

    def test_fusion_slab_mismatch_rejected(self, rng):
        cfg = AgmfConfig.create(rng, 4)
        with pytest.raises(ValueError, match="fusion conv"):
            dataclasses.replace(cfg, use_triplet=False)

    def test_variant_names(self):
        assert AgmfConfig.create(make_rng(0), 2).variant == "full"
        assert AgmfConfig.create(make_rng(0), 2, variant="no-fmds").variant == "no-fmds"
        assert single_branch_config(2).variant == "custom"

    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="variant"):
            AgmfConfig.create(make_rng(0), 2, variant="nope")

    def test_recipe_roundtrip(self):
        cfg = AgmfConfig.create(make_rng(9), 3, variant="no-fmds")
        clone = agmf_config_from_recipe(cfg.recipe(9))
        for (na, a), (nb, b) in zip(cfg.named_params(), clone.named_params()):
            assert na == nb
            assert np.array_equal(a.data, b.data)


class TestAblation:
    def test_param_delta_is_fmds_branch_plus_fusion_slab(self):
        full = AgmfConfig.create(make_rng(7), 4)
        lean = AgmfConfig.create(make_rng(7), 4, variant="no-fmds")
        delta = agmf_param_count(full) - agmf_param_count(lean)
        assert delta == fmds_param_count(full.fmds) + 4 * 4
        enum_delta = sum(t.size for _, t in full.named_params()) - sum(
            t.size for _, t in lean.named_params()
        )
        assert enum_delta == delta

    def test_branch_independence(self, rng):
        full = AgmfConfig.create(make_rng(8), 4)
        x = uniform(rng, (1, 4, 6, 6))
        outs = branch_outputs(x, full)
        assert np.array_equal(outs[0].data, gated_unit_forward(x, full.gated_unit).data)
        assert np.array_equal(outs[2].data, triplet_attention_forward(x, full.triplet).data)

    def test_counts_match_enumeration(self):
        for seed, c, variant, bias in ((0, 1, "full", True), (1, 2, "no-fmds", False), (2, 5, "full", False)):
            cfg = AgmfConfig.create(make_rng(seed), c, variant=variant, bias=bias)
            assert agmf_param_count(cfg) == sum(t.size for _, t in cfg.named_params())


class TestFlops:
    def test_total_is_stage_sum_by_hand(self):
        cfg = AgmfConfig.create(make_rng(10), 4)
        shape = (1, 4, 8, 8)
        stages = dict(agmf_flop_stages(cfg, shape))
        by_hand = flop_count(cfg.gated_unit.conv, shape)
        block = (4, 4, 4, 4)
        for dw, pw in zip(cfg.fmds.branch_dw, cfg.fmds.branch_pw):
            by_hand += flop_count(dw, block) + flop_count(pw, block)
        by_hand += flop_count(cfg.fmds.select_dw, (1, 8, 8, 8))
        by_hand += flop_count(cfg.fmds.select_pw, (1, 8, 8, 8))
        by_hand += flop_count(cfg.triplet.hw.conv, (1, 2, 8, 8))
        by_hand += flop_count(cfg.triplet.cw.conv, (1, 2, 4, 8))
        by_hand += flop_count(cfg.triplet.ch.conv, (1, 2, 8, 4))
        by_hand += flop_count(cfg.fusion_conv, (1, 12, 8, 8))
        assert sum(stages.values()) == by_hand


def test_gradients_both_variants():
    for variant in ("full", "no-fmds"):
        cfg = AgmfConfig.create(make_rng(11), 2, variant=variant)
        rng = make_rng(12)
        x = tie_safe_uniform(rng, (1, 2, 4, 4), axes=(1, 2, 3))
        report = grad_check(
            lambda p, cfg=cfg: agmf_forward(p["x"], cfg.map_params(lambda n, _t: p[n])),
            {"x": x, **dict(cfg.named_params())},
        )
        assert report.passed, (variant, report.max_rel_err)
