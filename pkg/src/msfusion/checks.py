"""Named invariant checks behind the ``check`` CLI command.

Every entry validates one documented property of the tensor core, the
multi-scale selection pipeline, the gating branches, or the fusion module.
Oracle-style checks recompute expectations through independent routes
(loop-based convolution, per-position reductions, closed-form arithmetic)
rather than through the code under test.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from . import ops
from .agmf import AgmfConfig, agmf_forward, agmf_param_count, branch_outputs, fuse_branches
from .autodiff import grad_check
from .fmds import (
    FmdsConfig,
    adaptive_select,
    concat_original,
    fmds_forward,
    fmds_param_count,
    multiscale_branch_sum,
    partition_blocks,
    reassemble_blocks,
)
from .gates import GatedUnitParams, TripletAttentionParams
from .gates import gated_unit_forward, triplet_attention_forward
from .gradtargets import tie_safe_uniform
from .reference import conv2d_naive
from .report import CheckResult
from .tensor import BatchNormSpec, ConvSpec, Tensor, flop_count, make_conv_spec, make_rng

SIZE_GRID_B = (1, 2, 3)
SIZE_GRID_C = (1, 3, 8)
SIZE_GRID_HW = (2, 4, 6, 8, 10)
CONV_ORACLE_CASES = 220


@dataclass(frozen=True)
class CheckContext:
    seed: int = 42
    dtype: type = np.float64
    inject_fault: bool = False

    @property
    def oracle_tol(self) -> float:
        return 1e-6 if self.dtype == np.float64 else 1e-3


def _rng(ctx: CheckContext, salt: int = 0):
    return make_rng(ctx.seed + salt)


def _uniform(rng, shape, dtype):
    return Tensor(rng.uniform(-2.0, 2.0, shape).astype(dtype))


def _zero_conv_params(name: str, t: Tensor) -> Tensor:
    if name.endswith("weight") or name.endswith("bias"):
        return Tensor.zeros(t.shape, dtype=t.dtype)
    return t


# independent recomputation helpers (no shared code with ops.*)

def _sigmoid_ref(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x.astype(np.float64)))


def _bn_ref(x: np.ndarray, spec: BatchNormSpec) -> np.ndarray:
    g = spec.gamma.data[None, :, None, None].astype(np.float64)
    b = spec.beta.data[None, :, None, None].astype(np.float64)
    m = spec.mean.data[None, :, None, None].astype(np.float64)
    v = spec.var.data[None, :, None, None].astype(np.float64)
    return g * (x.astype(np.float64) - m) / np.sqrt(v + spec.epsilon) + b


def _zpool_ref(x: np.ndarray) -> np.ndarray:
    b_n, c_n, h_n, w_n = x.shape
    out = np.zeros((b_n, 2, h_n, w_n), dtype=x.dtype)
    for b in range(b_n):
        for h in range(h_n):
            for w in range(w_n):
                mx = x[b, 0, h, w]
                acc = x.dtype.type(0)
                for c in range(c_n):
                    v = x[b, c, h, w]
                    if v > mx:
                        mx = v
                    acc = x.dtype.type(acc + v)
                out[b, 0, h, w] = mx
                out[b, 1, h, w] = acc / x.dtype.type(c_n)
    return out


def _gate_branch_ref(x: np.ndarray, branch) -> np.ndarray:
    logits = conv2d_naive(Tensor(np.ascontiguousarray(_zpool_ref(x))), branch.conv).data
    gate = _sigmoid_ref(_bn_ref(logits, branch.bn))
    return x.astype(np.float64) * gate  # broadcasts over axis 1


# ---------------------------------------------------------------------------
# tensor core

def check_permute_roundtrip(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 1)
    for _ in range(30):
        ndim = int(rng.integers(2, 7))
        shape = tuple(int(rng.integers(1, 5)) for _ in range(ndim))
        t = _uniform(rng, shape, ctx.dtype)
        axes = tuple(int(a) for a in rng.permutation(ndim))
        inverse = tuple(int(i) for i in np.argsort(axes))
        back = ops.permute(ops.permute(t, axes), inverse)
        if not np.array_equal(back.data, t.data):
            return CheckResult("tensor.permute_roundtrip", False, detail=f"shape {shape} axes {axes}")
    return CheckResult("tensor.permute_roundtrip", True, error=0.0, tolerance=0.0)


def check_reshape_flat_order(ctx: CheckContext) -> CheckResult:
    t = Tensor(np.arange(16, dtype=ctx.dtype).reshape(1, 1, 4, 4))
    r = ops.reshape(t, (4, 1, 2, 2))
    ok = np.array_equal(r.data.ravel(), t.data.ravel())
    inferred = ops.reshape(_uniform(_rng(ctx, 2), (2, 3, 4, 4), ctx.dtype), (-1, 3, 4, 4))
    ok = ok and inferred.shape == (2, 3, 4, 4)
    return CheckResult("tensor.reshape_flat_order", bool(ok), error=0.0, tolerance=0.0)


def _random_conv_case(rng, dtype):
    k = int(rng.choice([1, 3, 5, 7]))
    stride = int(rng.choice([1, 2]))
    c = int(rng.choice([1, 2, 3, 4]))
    groups = 1 if rng.random() < 0.5 else c
    pad = int(rng.integers(0, k // 2 + 2))
    h = max(1, k - 2 * pad) + int(rng.integers(0, 4))
    w = max(1, k - 2 * pad) + int(rng.integers(0, 4))
    b = int(rng.integers(1, 3))
    c_out = c if groups == c else int(rng.integers(1, 5))
    x = _uniform(rng, (b, c, h, w), dtype)
    spec = make_conv_spec(
        rng, c, c_out, k, stride=stride, padding=pad, groups=groups,
        bias=bool(rng.random() < 0.5), dtype=dtype,
    )
    return x, spec


def check_conv_oracle(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 3)
    worst = 0.0
    strides = set()
    kernels = set()
    for case in range(CONV_ORACLE_CASES):
        x, spec = _random_conv_case(rng, ctx.dtype)
        strides.add(spec.stride[0])
        kernels.add(spec.kernel[0])
        used = spec
        if ctx.inject_fault and case == 0:
            bad = np.array(spec.weight.data, copy=True)
            bad.reshape(-1)[0] += 0.5
            used = dataclasses.replace(spec, weight=Tensor(bad))
        got = ops.conv2d(x, used).data
        ref = conv2d_naive(x, spec).data
        worst = max(worst, float(np.max(np.abs(got - ref))))
    detail = f"{CONV_ORACLE_CASES} cases, kernels {sorted(kernels)}, strides {sorted(strides)}"
    if ctx.inject_fault:
        detail += "; fault injected into one kernel"
    return CheckResult(
        "tensor.conv_oracle", worst < ctx.oracle_tol, error=worst, tolerance=ctx.oracle_tol,
        detail=detail,
    )


def check_conv_linearity(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 4)
    worst = 0.0
    for _ in range(10):
        x, spec = _random_conv_case(rng, np.float64)
        spec = dataclasses.replace(spec, bias=None)
        y = _uniform(rng, x.shape, np.float64)
        a, b = 0.7, -1.3
        mixed = ops.conv2d(Tensor(a * x.data + b * y.data), spec).data
        parts = a * ops.conv2d(x, spec).data + b * ops.conv2d(y, spec).data
        worst = max(worst, float(np.max(np.abs(mixed - parts))))
    return CheckResult("tensor.conv_linearity", worst < 1e-6, error=worst, tolerance=1e-6)


def check_sigmoid_bounds(ctx: CheckContext) -> CheckResult:
    values = np.array([-800.0, -30.0, -1.0, 0.0, 1e-9, 1.0, 30.0, 800.0], dtype=ctx.dtype)
    s = ops.sigmoid(Tensor(values.reshape(1, 1, 1, -1))).data.ravel()
    ok = bool(np.all(s > 0) and np.all(s < 1) and np.all(np.diff(s) >= 0))
    half = ops.sigmoid(Tensor.zeros((1, 1, 1, 1), dtype=ctx.dtype)).data.ravel()[0]
    ok = ok and half == 0.5
    return CheckResult("tensor.sigmoid_bounds", ok, detail="strictly in (0,1), monotone, s(0)=0.5")


def check_zpool_oracle(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 5)
    x = _uniform(rng, (2, 8, 5, 6), ctx.dtype)
    got = ops.zpool(x).data
    ref = _zpool_ref(x.data)
    exact = np.array_equal(got, ref)
    max_ge_mean = bool(np.all(got[:, 0] >= got[:, 1]))
    return CheckResult(
        "tensor.zpool_oracle", bool(exact and max_ge_mean),
        error=float(np.max(np.abs(got - ref))), tolerance=0.0,
        detail="loop-computed max/mean, max >= mean pointwise",
    )


def check_flop_linearity(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 6)
    spec = make_conv_spec(rng, 8, 6, 3, padding=1, bias=False)
    base = flop_count(spec, (1, 8, 10, 10))
    doubled_b = flop_count(spec, (2, 8, 10, 10))
    wide = make_conv_spec(rng, 8, 12, 3, padding=1, bias=False)
    ok = doubled_b == 2 * base and flop_count(wide, (1, 8, 10, 10)) == 2 * base
    return CheckResult("tensor.flop_linearity", bool(ok), detail="linear in B and C_out")


def check_batch_norm_examples(ctx: CheckContext) -> CheckResult:
    spec = BatchNormSpec(
        gamma=Tensor.from_array([2.0]), beta=Tensor.from_array([1.0]),
        mean=Tensor.from_array([3.0]), var=Tensor.from_array([4.0]), epsilon=0.0,
    )
    got = ops.batch_norm(Tensor.full((1, 1, 1, 1), 5.0), spec).data.ravel()[0]
    ident = BatchNormSpec.identity(3, epsilon=1e-12)
    x = _uniform(_rng(ctx, 7), (1, 3, 4, 4), np.float64)
    err = float(np.max(np.abs(ops.batch_norm(x, ident).data - x.data)))
    ok = got == 3.0 and err < 1e-6
    return CheckResult("tensor.batch_norm_examples", bool(ok), error=err, tolerance=1e-6)


# ---------------------------------------------------------------------------
# fmds

def check_fmds_roundtrip_grid(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 10)
    cases = 0
    for b in SIZE_GRID_B:
        for c in SIZE_GRID_C:
            for h in SIZE_GRID_HW:
                for w in SIZE_GRID_HW:
                    x = _uniform(rng, (b, c, h, w), ctx.dtype)
                    back = reassemble_blocks(partition_blocks(x), b)
                    cases += 1
                    if not np.array_equal(back.data, x.data):
                        return CheckResult(
                            "fmds.roundtrip_grid", False, detail=f"shape {(b, c, h, w)}"
                        )
    return CheckResult(
        "fmds.roundtrip_grid", True, error=0.0, tolerance=0.0, detail=f"{cases} cases, bitwise"
    )


def check_fmds_quadrant_layout(ctx: CheckContext) -> CheckResult:
    t = Tensor(np.arange(16, dtype=ctx.dtype).reshape(1, 1, 4, 4))
    blocks = partition_blocks(t).data.reshape(4, 2, 2)
    expected = np.array(
        [[[0, 1], [4, 5]], [[2, 3], [6, 7]], [[8, 9], [12, 13]], [[10, 11], [14, 15]]],
        dtype=ctx.dtype,
    )
    if not np.array_equal(blocks, expected):
        return CheckResult("fmds.quadrant_layout", False, detail="4x4 worked example")
    # brute-force index map on (1, 3, 6, 8)
    x = _uniform(_rng(ctx, 11), (1, 3, 6, 8), ctx.dtype)
    got = partition_blocks(x).data
    for br in range(2):
        for bc in range(2):
            for c in range(3):
                for i in range(3):
                    for j in range(4):
                        if got[2 * br + bc, c, i, j] != x.data[0, c, br * 3 + i, bc * 4 + j]:
                            return CheckResult(
                                "fmds.quadrant_layout", False, detail="index enumeration"
                            )
    return CheckResult("fmds.quadrant_layout", True, error=0.0, tolerance=0.0)


def check_fmds_shape_grid(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 12)
    for c in SIZE_GRID_C:
        cfg = FmdsConfig.create(rng, c, c, dtype=ctx.dtype)
        wide = FmdsConfig.create(rng, c, c + 2, dtype=ctx.dtype)
        for b in SIZE_GRID_B:
            for h in SIZE_GRID_HW:
                for w in SIZE_GRID_HW:
                    x = _uniform(rng, (b, c, h, w), ctx.dtype)
                    out = fmds_forward(x, cfg)
                    out2 = fmds_forward(x, wide)
                    if out.shape != (b, c, h, w) or out2.shape != (b, c + 2, h, w):
                        return CheckResult("fmds.shape_grid", False, detail=f"{(b, c, h, w)}")
                    if not (np.all(np.isfinite(out.data)) and np.all(np.isfinite(out2.data))):
                        return CheckResult("fmds.shape_grid", False, detail="non-finite output")
    try:
        fmds_forward(_uniform(rng, (1, 3, 7, 8), ctx.dtype), FmdsConfig.create(rng, 3, 3, dtype=ctx.dtype))
        return CheckResult("fmds.shape_grid", False, detail="odd height accepted")
    except ValueError:
        pass
    return CheckResult("fmds.shape_grid", True, detail="shapes preserved, odd extents rejected")


def check_fmds_zero_weights(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 13)
    cfg = FmdsConfig.create(rng, 4, 6, dtype=ctx.dtype).map_params(_zero_conv_params)
    out = fmds_forward(_uniform(rng, (2, 4, 6, 6), ctx.dtype), cfg)
    ok = bool(np.all(out.data == 0.0))
    return CheckResult("fmds.zero_weights", ok, error=float(np.max(np.abs(out.data))), tolerance=0.0)


def check_fmds_batch_equivariance(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 14)
    x = _uniform(rng, (3, 2, 4, 4), ctx.dtype)
    perm = [2, 0, 1]
    permuted = Tensor(np.ascontiguousarray(x.data[perm]))
    a = partition_blocks(x).data
    b = partition_blocks(permuted).data
    for j, src in enumerate(perm):
        for k in range(4):
            if not np.array_equal(b[4 * j + k], a[4 * src + k]):
                return CheckResult("fmds.batch_equivariance", False, detail=f"image {j} block {k}")
    return CheckResult("fmds.batch_equivariance", True, error=0.0, tolerance=0.0)


def check_fmds_branch_sum_oracle(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 15)
    cfg = FmdsConfig.create(rng, 4, 4, dtype=ctx.dtype)
    blocks = _uniform(rng, (4, 4, 4, 4), ctx.dtype)
    got = multiscale_branch_sum(blocks, cfg).data
    ref = np.zeros_like(got, dtype=np.float64)
    for dw, pw in zip(cfg.branch_dw, cfg.branch_pw):
        ref = ref + conv2d_naive(conv2d_naive(blocks, dw), pw).data
    err = float(np.max(np.abs(got - ref)))
    return CheckResult("fmds.branch_sum_oracle", err < ctx.oracle_tol, error=err, tolerance=ctx.oracle_tol)


def check_fmds_adaptive_select_oracle(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 16)
    cfg = FmdsConfig.create(rng, 4, 4, dtype=ctx.dtype)
    xc = _uniform(rng, (1, 8, 4, 4), ctx.dtype)
    got = adaptive_select(xc, cfg).data
    ref = conv2d_naive(conv2d_naive(xc, cfg.select_dw), cfg.select_pw).data
    err = float(np.max(np.abs(got - ref)))
    full = fmds_forward(_uniform(rng, (1, 4, 4, 4), ctx.dtype), cfg)
    ok = err < ctx.oracle_tol and full.shape == (1, 4, 4, 4)
    return CheckResult("fmds.adaptive_select_oracle", bool(ok), error=err, tolerance=ctx.oracle_tol)


def check_fmds_param_count(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 17)
    frozen = fmds_param_count(FmdsConfig.create(rng, 4, 4, bias=False)) == 484
    frozen = frozen and fmds_param_count(FmdsConfig.create(rng, 1, 1, bias=False)) == 106
    for c, out, bias in ((2, 2, True), (3, 5, False), (4, 4, True)):
        cfg = FmdsConfig.create(rng, c, out, bias=bias)
        if fmds_param_count(cfg) != sum(t.size for _, t in cfg.named_params()):
            return CheckResult("fmds.param_count", False, detail=f"C={c} out={out} bias={bias}")
    return CheckResult("fmds.param_count", bool(frozen), detail="484/106 frozen cases + enumeration")


def check_fmds_gradient(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 18)
    cfg = FmdsConfig.create(rng, 4, 4)
    x = Tensor(rng.uniform(-2.0, 2.0, (1, 4, 4, 4)))
    params = {"x": x, **dict(cfg.named_params())}
    rep = grad_check(
        lambda p: fmds_forward(p["x"], cfg.map_params(lambda n, _t: p[n])), params, seed=ctx.seed
    )
    return CheckResult(
        "fmds.gradient_check", rep.passed, error=rep.max_rel_err, tolerance=rep.tol,
        detail="float64 finite differences, eps 1e-5",
    )


# ---------------------------------------------------------------------------
# gating branches

def check_gated_unit_bounds(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 20)
    for _ in range(250):
        c = int(rng.integers(1, 6))
        p = GatedUnitParams.create(rng, c, dtype=ctx.dtype)
        y = _uniform(rng, (1, c, int(rng.integers(1, 6)), int(rng.integers(1, 6))), ctx.dtype)
        gate = ops.sigmoid(ops.batch_norm(ops.conv2d(y, p.conv), p.bn)).data
        out = gated_unit_forward(y, p).data
        if not (np.all(gate > 0) and np.all(gate < 1) and np.all(np.abs(out) <= np.abs(y.data))):
            return CheckResult("gates.gated_unit_bounds", False)
    return CheckResult("gates.gated_unit_bounds", True, detail="250 random draws")


def check_triplet_bounds(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 21)
    for _ in range(250):
        p = TripletAttentionParams.create(rng, dtype=ctx.dtype)
        shape = (1, int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        x = _uniform(rng, shape, ctx.dtype)
        out = triplet_attention_forward(x, p).data
        tol = 0.0 if ctx.dtype == np.float64 else 1e-6
        if out.shape != shape or not np.all(np.abs(out) <= np.abs(x.data) + tol):
            return CheckResult("gates.triplet_bounds", False, detail=f"shape {shape}")
    return CheckResult("gates.triplet_bounds", True, detail="250 random draws")


def check_gates_shape_preservation(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 22)
    for shape in ((2, 4, 1, 1), (1, 1, 5, 3), (2, 3, 6, 6)):
        x = _uniform(rng, shape, ctx.dtype)
        gu = GatedUnitParams.create(rng, shape[1], dtype=ctx.dtype)
        tp = TripletAttentionParams.create(rng, dtype=ctx.dtype)
        if gated_unit_forward(x, gu).shape != shape:
            return CheckResult("gates.shape_preservation", False, detail=f"gated unit {shape}")
        if triplet_attention_forward(x, tp).shape != shape:
            return CheckResult("gates.shape_preservation", False, detail=f"triplet {shape}")
    return CheckResult("gates.shape_preservation", True)


def check_gates_rotation_consistency(ctx: CheckContext) -> CheckResult:
    from .gates import _spatial_gate

    rng = _rng(ctx, 23)
    p = TripletAttentionParams.create(rng, dtype=ctx.dtype)
    x = _uniform(rng, (2, 4, 5, 6), ctx.dtype)
    rotated = ops.permute(x, (0, 2, 1, 3))
    direct = ops.permute(_spatial_gate(rotated, p.cw), (0, 2, 1, 3)).data
    recipe = ops.permute(_spatial_gate(ops.permute(x, (0, 2, 1, 3)), p.cw), (0, 2, 1, 3)).data
    ok = np.array_equal(direct, recipe)
    return CheckResult("gates.rotation_consistency", bool(ok), error=0.0, tolerance=0.0,
                       detail="shared gate path applied in rotated layout")


def check_gated_unit_oracle(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 24)
    p = GatedUnitParams.create(rng, 4, dtype=ctx.dtype)
    y = _uniform(rng, (1, 4, 5, 5), ctx.dtype)
    got = gated_unit_forward(y, p).data
    ref = y.data.astype(np.float64) * _sigmoid_ref(_bn_ref(conv2d_naive(y, p.conv).data, p.bn))
    err = float(np.max(np.abs(got - ref)))
    return CheckResult("gates.gated_unit_oracle", err < ctx.oracle_tol, error=err, tolerance=ctx.oracle_tol)


def check_triplet_oracle(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 25)
    p = TripletAttentionParams.create(rng, dtype=ctx.dtype)
    x = _uniform(rng, (1, 4, 6, 6), ctx.dtype)
    xd = x.data
    # branch HW operates on the native layout, CW and CH on rotated copies
    hw = _gate_branch_ref(xd, p.hw)
    cw = np.transpose(_gate_branch_ref(np.ascontiguousarray(np.transpose(xd, (0, 2, 1, 3))), p.cw), (0, 2, 1, 3))
    ch = np.transpose(_gate_branch_ref(np.ascontiguousarray(np.transpose(xd, (0, 3, 2, 1))), p.ch), (0, 3, 2, 1))
    ref = (hw + cw + ch) / 3.0
    got = triplet_attention_forward(x, p).data
    err = float(np.max(np.abs(got - ref)))
    return CheckResult("gates.triplet_oracle", err < ctx.oracle_tol, error=err, tolerance=ctx.oracle_tol)


def check_gates_gradients(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 26)
    gu = GatedUnitParams.create(rng, 4)
    x = Tensor(rng.uniform(-2.0, 2.0, (1, 4, 6, 6)))
    rep1 = grad_check(
        lambda p: gated_unit_forward(p["x"], gu.map_params(lambda n, _t: p[n])),
        {"x": x, **dict(gu.named_params())}, seed=ctx.seed,
    )
    trip = TripletAttentionParams.create(rng)
    xt = tie_safe_uniform(rng, (1, 4, 6, 6), axes=(1, 2, 3))
    rep2 = grad_check(
        lambda p: triplet_attention_forward(p["x"], trip.map_params(lambda n, _t: p[n])),
        {"x": xt, **dict(trip.named_params())}, seed=ctx.seed,
    )
    err = max(rep1.max_rel_err, rep2.max_rel_err)
    return CheckResult("gates.gradient_checks", rep1.passed and rep2.passed,
                       error=err, tolerance=rep1.tol, detail="gated unit + triplet attention")


# ---------------------------------------------------------------------------
# fusion module

def check_agmf_shape_grid(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 30)
    for c in SIZE_GRID_C:
        cfg = AgmfConfig.create(rng, c, dtype=ctx.dtype)
        for b in SIZE_GRID_B:
            for h in SIZE_GRID_HW:
                for w in SIZE_GRID_HW:
                    x = _uniform(rng, (b, c, h, w), ctx.dtype)
                    out = agmf_forward(x, cfg)
                    if out.shape != (b, c, h, w) or not np.all(np.isfinite(out.data)):
                        return CheckResult("agmf.shape_grid", False, detail=f"{(b, c, h, w)}")
    try:
        agmf_forward(_uniform(rng, (1, 3, 5, 6), ctx.dtype), AgmfConfig.create(rng, 3, dtype=ctx.dtype))
        return CheckResult("agmf.shape_grid", False, detail="odd extent accepted with fmds branch")
    except ValueError:
        pass
    return CheckResult("agmf.shape_grid", True, detail="shape preserved over the size grid")


def check_agmf_ablation_parity(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 31)
    full = AgmfConfig.create(make_rng(ctx.seed + 31), 4, variant="full", dtype=ctx.dtype)
    lean = AgmfConfig.create(make_rng(ctx.seed + 31), 4, variant="no-fmds", dtype=ctx.dtype)
    x = _uniform(rng, (2, 4, 8, 8), ctx.dtype)
    same_shape = agmf_forward(x, full).shape == agmf_forward(x, lean).shape == (2, 4, 8, 8)
    delta = agmf_param_count(full) - agmf_param_count(lean)
    expected = fmds_param_count(full.fmds) + full.channels * full.channels
    enum_delta = sum(t.size for _, t in full.named_params()) - sum(
        t.size for _, t in lean.named_params()
    )
    ok = same_shape and delta == expected and enum_delta == delta
    return CheckResult("agmf.ablation_parity", bool(ok),
                       detail=f"param delta {delta} = fmds branch + fusion slab")


def check_agmf_branch_independence(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 32)
    full = AgmfConfig.create(make_rng(ctx.seed + 32), 4, dtype=ctx.dtype)
    x = _uniform(rng, (1, 4, 6, 6), ctx.dtype)
    gu_alone = gated_unit_forward(x, full.gated_unit).data
    trip_alone = triplet_attention_forward(x, full.triplet).data
    outs = branch_outputs(x, full)
    ok = np.array_equal(outs[0].data, gu_alone) and np.array_equal(outs[2].data, trip_alone)
    return CheckResult("agmf.branch_independence", bool(ok), error=0.0, tolerance=0.0)


def check_agmf_zero_params(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 33)
    cfg = AgmfConfig.create(rng, 4, dtype=ctx.dtype).map_params(_zero_conv_params)
    out = agmf_forward(_uniform(rng, (1, 4, 6, 6), ctx.dtype), cfg)
    ok = bool(np.all(out.data == 0.0))
    return CheckResult("agmf.zero_params", ok, error=float(np.max(np.abs(out.data))), tolerance=0.0,
                       detail="zero conv params + identity BN -> SiLU(0) = 0")


def check_agmf_param_count(ctx: CheckContext) -> CheckResult:
    for seed_off, c, variant, bias in ((0, 1, "full", True), (1, 4, "full", True), (2, 4, "no-fmds", False), (3, 2, "no-fmds", True)):
        cfg = AgmfConfig.create(make_rng(ctx.seed + 34 + seed_off), c, variant=variant, bias=bias)
        if agmf_param_count(cfg) != sum(t.size for _, t in cfg.named_params()):
            return CheckResult("agmf.param_count", False, detail=f"C={c} {variant} bias={bias}")
    return CheckResult("agmf.param_count", True, detail="closed form equals enumeration")


def check_agmf_fuse_oracle(ctx: CheckContext) -> CheckResult:
    rng = _rng(ctx, 35)
    cfg = AgmfConfig.create(make_rng(ctx.seed + 35), 4, dtype=ctx.dtype)
    x = _uniform(rng, (1, 4, 4, 4), ctx.dtype)
    outs = branch_outputs(x, cfg)
    got = fuse_branches(outs, cfg).data
    cat = np.concatenate([o.data for o in outs], axis=1)
    z = _bn_ref(conv2d_naive(Tensor(cat), cfg.fusion_conv).data, cfg.fusion_bn)
    ref = z * _sigmoid_ref(z)
    err = float(np.max(np.abs(got - ref)))
    return CheckResult("agmf.fuse_oracle", err < ctx.oracle_tol, error=err, tolerance=ctx.oracle_tol)


def check_agmf_gradients(ctx: CheckContext) -> CheckResult:
    worst = 0.0
    for variant in ("full", "no-fmds"):
        cfg = AgmfConfig.create(make_rng(ctx.seed + 36), 4, variant=variant)
        rng = _rng(ctx, 37)
        x = tie_safe_uniform(rng, (1, 4, 8, 8), axes=(1, 2, 3))
        rep = grad_check(
            lambda p, cfg=cfg: agmf_forward(p["x"], cfg.map_params(lambda n, _t: p[n])),
            {"x": x, **dict(cfg.named_params())}, seed=ctx.seed,
        )
        worst = max(worst, rep.max_rel_err)
        if not rep.passed:
            return CheckResult("agmf.gradient_checks", False, error=rep.max_rel_err,
                               tolerance=rep.tol, detail=f"variant {variant}")
    return CheckResult("agmf.gradient_checks", True, error=worst, tolerance=1e-4,
                       detail="full and no-fmds variants")


def check_agmf_determinism(ctx: CheckContext) -> CheckResult:
    x = _uniform(_rng(ctx, 38), (1, 3, 6, 6), ctx.dtype)
    runs = []
    for _ in range(2):
        cfg = AgmfConfig.create(make_rng(ctx.seed + 38), 3, dtype=ctx.dtype)
        runs.append(agmf_forward(x, cfg).data)
    ok = np.array_equal(runs[0], runs[1])
    return CheckResult("agmf.determinism", bool(ok), error=0.0, tolerance=0.0,
                       detail="same seed twice, bitwise identical")


ALL_CHECKS: List[Tuple[str, Callable[[CheckContext], CheckResult]]] = [
    ("tensor.permute_roundtrip", check_permute_roundtrip),
    ("tensor.reshape_flat_order", check_reshape_flat_order),
    ("tensor.conv_oracle", check_conv_oracle),
    ("tensor.conv_linearity", check_conv_linearity),
    ("tensor.sigmoid_bounds", check_sigmoid_bounds),
    ("tensor.zpool_oracle", check_zpool_oracle),
    ("tensor.flop_linearity", check_flop_linearity),
    ("tensor.batch_norm_examples", check_batch_norm_examples),
    ("fmds.roundtrip_grid", check_fmds_roundtrip_grid),
    ("fmds.quadrant_layout", check_fmds_quadrant_layout),
    ("fmds.shape_grid", check_fmds_shape_grid),
    ("fmds.zero_weights", check_fmds_zero_weights),
    ("fmds.batch_equivariance", check_fmds_batch_equivariance),
    ("fmds.branch_sum_oracle", check_fmds_branch_sum_oracle),
    ("fmds.adaptive_select_oracle", check_fmds_adaptive_select_oracle),
    ("fmds.param_count", check_fmds_param_count),
    ("fmds.gradient_check", check_fmds_gradient),
    ("gates.gated_unit_bounds", check_gated_unit_bounds),
    ("gates.triplet_bounds", check_triplet_bounds),
    ("gates.shape_preservation", check_gates_shape_preservation),
    ("gates.rotation_consistency", check_gates_rotation_consistency),
    ("gates.gated_unit_oracle", check_gated_unit_oracle),
    ("gates.triplet_oracle", check_triplet_oracle),
    ("gates.gradient_checks", check_gates_gradients),
    ("agmf.shape_grid", check_agmf_shape_grid),
    ("agmf.ablation_parity", check_agmf_ablation_parity),
    ("agmf.branch_independence", check_agmf_branch_independence),
    ("agmf.zero_params", check_agmf_zero_params),
    ("agmf.param_count", check_agmf_param_count),
    ("agmf.fuse_oracle", check_agmf_fuse_oracle),
    ("agmf.gradient_checks", check_agmf_gradients),
    ("agmf.determinism", check_agmf_determinism),
]


def run_checks(ctx: CheckContext):
    """Run every registered check; returns (results, per-check timings)."""
    results: List[CheckResult] = []
    timings = {}
    for name, fn in ALL_CHECKS:
        start = time.perf_counter()
        result = fn(ctx)
        timings[name] = time.perf_counter() - start
        if result.name != name:
            raise RuntimeError(f"check {name} reported result under {result.name!r}")
        results.append(result)
    return results, timings
