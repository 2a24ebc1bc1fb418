"""Micro-benchmarks: compiled vs fallback conv kernels, naive reference,
and the two fusion modules end to end.

GFLOP/s figures come from the analytic convolution FLOP count (multiply-add
counted as two); elementwise and normalization work is not counted, so
module rows understate slightly.  The first 10% of iterations are warm-up
and excluded from the timings.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import kernels
from .agmf import AgmfConfig, agmf_flop_stages, agmf_forward
from .fmds import FmdsConfig, fmds_flop_stages, fmds_forward
from .reference import conv2d_naive
from .tensor import Tensor, flop_count, make_conv_spec, make_rng


@dataclass
class BenchRow:
    name: str
    iters: int
    warmup: int
    mean_s: float
    total_s: float
    flops: Optional[int] = None

    @property
    def gflops(self) -> Optional[float]:
        if self.flops is None or self.mean_s <= 0:
            return None
        return self.flops / self.mean_s / 1e9


def _time(fn: Callable[[], object], iters: int) -> BenchRow:
    warmup = iters // 10
    times = []
    for i in range(iters):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    kept = times[warmup:]
    return BenchRow(
        name="", iters=iters, warmup=warmup,
        mean_s=sum(kept) / len(kept), total_s=sum(kept),
    )


def run_bench(
    shape: Sequence[int],
    iters: int = 10,
    seed: int = 42,
    dtype=np.float32,
    naive_iters: int = 1,
) -> List[BenchRow]:
    """Benchmark rows for one input shape; H and W must be even."""
    if iters < 1 or naive_iters < 1:
        raise ValueError("iteration counts must be >= 1")
    b, c, h, w = (int(v) for v in shape)
    if h % 2 or w % 2:
        raise ValueError(f"bench shape needs even spatial extents, got {h}x{w}")
    rng = make_rng(seed)
    x = Tensor(rng.uniform(-2.0, 2.0, (b, c, h, w)).astype(dtype))
    dw3 = make_conv_spec(rng, c, c, 3, padding=1, groups=c, bias=False, dtype=dtype)
    pw1 = make_conv_spec(rng, c, c, 1, bias=False, dtype=dtype)
    rows: List[BenchRow] = []

    for name in kernels.available_backends():
        backend = kernels.get_backend(name)
        for spec, label in ((dw3, "conv2d_dw3x3"), (pw1, "conv2d_pw1x1")):
            row = _time(
                lambda be=backend, s=spec: be.conv2d_forward(
                    x.data, s.weight.data, 1, 1, s.padding[0], s.padding[1], s.groups
                ),
                iters,
            )
            row.name = f"{label}[{name}]"
            row.flops = flop_count(spec, x.shape)
            rows.append(row)

    row = _time(lambda: conv2d_naive(x, dw3), naive_iters)
    row.name = "conv2d_dw3x3[naive]"
    row.flops = flop_count(dw3, x.shape)
    rows.append(row)

    fmds_cfg = FmdsConfig.create(rng, c, c, dtype=dtype)
    row = _time(lambda: fmds_forward(x, fmds_cfg), iters)
    row.name = "fmds_forward"
    row.flops = sum(f for _, f in fmds_flop_stages(fmds_cfg, x.shape))
    rows.append(row)

    for variant in ("full", "no-fmds"):
        cfg = AgmfConfig.create(make_rng(seed + 1), c, variant=variant, dtype=dtype)
        row = _time(lambda cfg=cfg: agmf_forward(x, cfg), iters)
        row.name = f"agmf_forward[{variant}]"
        row.flops = sum(f for _, f in agmf_flop_stages(cfg, x.shape))
        rows.append(row)
    return rows
