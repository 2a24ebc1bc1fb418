"""Gradient-check targets: every primitive plus the composed modules.

Each target bundles a name, a forward closure usable on Tensors or tape
Vars, and the parameter dict to differentiate.  Inputs feeding a z-pool
are resampled until every per-position top-2 gap (along each axis a gate
may reduce over) exceeds the tie guard, keeping finite differences away
from the max's subgradient discontinuity.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import ops
from .agmf import AgmfConfig, agmf_forward
from .fmds import FmdsConfig, fmds_forward
from .gates import GatedUnitParams, TripletAttentionParams
from .gates import gated_unit_forward, triplet_attention_forward
from .tensor import BatchNormSpec, Tensor, make_conv_spec, make_rng

TIE_GAP = 1e-3


@dataclass(frozen=True)
class GradTarget:
    name: str
    fn: Callable
    params: Dict[str, Tensor]


def tie_safe_uniform(rng, shape, gap: float = TIE_GAP, axes=(1,)) -> Tensor:
    """Uniform(-2, 2) sample whose top-2 values along each axis stay apart."""
    while True:
        x = rng.uniform(-2.0, 2.0, shape)
        ok = True
        for ax in axes:
            if x.shape[ax] < 2:
                continue
            s = np.sort(x, axis=ax)
            if np.min(s.take(-1, axis=ax) - s.take(-2, axis=ax)) <= gap:
                ok = False
                break
        if ok:
            return Tensor(x)


def _conv_target(name, rng, groups, out_channels, stride, padding) -> GradTarget:
    x = Tensor(rng.uniform(-2.0, 2.0, (2, 3, 6, 6)))
    spec = make_conv_spec(rng, 3, out_channels, 3, stride=stride, padding=padding, groups=groups)

    def fn(p, spec=spec):
        return ops.conv2d(p["x"], dataclasses.replace(spec, weight=p["w"], bias=p["b"]))

    return GradTarget(name, fn, {"x": x, "w": spec.weight, "b": spec.bias})


def primitive_targets(seed: int) -> List[GradTarget]:
    rng = make_rng(seed)
    targets: List[GradTarget] = []

    targets.append(_conv_target("primitive.conv2d", rng, 1, 5, (1, 1), (1, 1)))
    targets.append(_conv_target("primitive.conv2d_depthwise", rng, 3, 3, (2, 2), (1, 1)))

    x = Tensor(rng.uniform(-2.0, 2.0, (2, 4, 5, 5)))
    bn = BatchNormSpec(
        gamma=Tensor(rng.uniform(0.5, 1.5, 4)),
        beta=Tensor(rng.uniform(-0.5, 0.5, 4)),
        mean=Tensor(rng.uniform(-0.5, 0.5, 4)),
        var=Tensor(rng.uniform(0.5, 1.5, 4)),
        epsilon=1e-5,
    )

    def bn_fn(p, bn=bn):
        return ops.batch_norm(p["x"], dataclasses.replace(bn, gamma=p["gamma"], beta=p["beta"]))

    targets.append(
        GradTarget("primitive.batch_norm", bn_fn, {"x": x, "gamma": bn.gamma, "beta": bn.beta})
    )

    xs = Tensor(rng.uniform(-2.0, 2.0, (1, 3, 4, 4)))
    targets.append(GradTarget("primitive.sigmoid", lambda p: ops.sigmoid(p["x"]), {"x": xs}))

    a = Tensor(rng.uniform(-2.0, 2.0, (1, 3, 4, 4)))
    b = Tensor(rng.uniform(-2.0, 2.0, (1, 3, 4, 4)))
    targets.append(
        GradTarget("primitive.mul", lambda p: ops.elementwise_mul(p["a"], p["b"]), {"a": a, "b": b})
    )
    targets.append(
        GradTarget("primitive.add", lambda p: ops.elementwise_add(p["a"], p["b"]), {"a": a, "b": b})
    )

    xr = Tensor(rng.uniform(-2.0, 2.0, (2, 3, 4, 4)))
    targets.append(
        GradTarget("primitive.reshape", lambda p: ops.reshape(p["x"], (4, 3, 2, 4)), {"x": xr})
    )
    targets.append(
        GradTarget("primitive.permute", lambda p: ops.permute(p["x"], (0, 3, 1, 2)), {"x": xr})
    )
    targets.append(
        GradTarget(
            "primitive.concat",
            lambda p: ops.concat_channels(p["a"], p["b"]),
            {"a": a, "b": b},
        )
    )

    xz = tie_safe_uniform(rng, (2, 5, 4, 4))
    targets.append(GradTarget("primitive.zpool", lambda p: ops.zpool(p["x"]), {"x": xz}))

    g = Tensor(rng.uniform(-2.0, 2.0, (2, 1, 4, 4)))
    targets.append(
        GradTarget(
            "primitive.repeat_channels",
            lambda p: ops.repeat_channels(p["x"], 5),
            {"x": g},
        )
    )
    targets.append(
        GradTarget("primitive.scale", lambda p: ops.scale(p["x"], 1.0 / 3.0), {"x": a})
    )
    return targets


def _lifted(cfg, p):
    return cfg.map_params(lambda name, _t: p[name])


def module_targets(seed: int) -> List[GradTarget]:
    rng = make_rng(seed)
    targets: List[GradTarget] = []

    fmds_cfg = FmdsConfig.create(make_rng(seed + 1), 4, 4)
    x_fmds = Tensor(rng.uniform(-2.0, 2.0, (1, 4, 4, 4)))
    targets.append(
        GradTarget(
            "module.fmds_forward",
            lambda p, cfg=fmds_cfg: fmds_forward(p["x"], _lifted(cfg, p)),
            {"x": x_fmds, **dict(fmds_cfg.named_params())},
        )
    )

    gu = GatedUnitParams.create(make_rng(seed + 2), 4)
    x_gu = Tensor(rng.uniform(-2.0, 2.0, (1, 4, 6, 6)))
    targets.append(
        GradTarget(
            "module.gated_unit",
            lambda p, cfg=gu: gated_unit_forward(p["x"], _lifted(cfg, p)),
            {"x": x_gu, **dict(gu.named_params())},
        )
    )

    trip = TripletAttentionParams.create(make_rng(seed + 3))
    x_trip = tie_safe_uniform(rng, (1, 4, 6, 6), axes=(1, 2, 3))
    targets.append(
        GradTarget(
            "module.triplet_attention",
            lambda p, cfg=trip: triplet_attention_forward(p["x"], _lifted(cfg, p)),
            {"x": x_trip, **dict(trip.named_params())},
        )
    )

    for variant in ("full", "no-fmds"):
        cfg = AgmfConfig.create(make_rng(seed + 4), 4, variant=variant)
        x_agmf = tie_safe_uniform(rng, (1, 4, 8, 8), axes=(1, 2, 3))
        targets.append(
            GradTarget(
                f"module.agmf_{variant.replace('-', '_')}",
                lambda p, cfg=cfg: agmf_forward(p["x"], _lifted(cfg, p)),
                {"x": x_agmf, **dict(cfg.named_params())},
            )
        )
    return targets


def all_targets(seed: int) -> List[GradTarget]:
    return primitive_targets(seed) + module_targets(seed)
