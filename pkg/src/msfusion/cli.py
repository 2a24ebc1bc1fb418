"""Command-line harness: invariant checks, gradient checks, benchmarks,
parameter/FLOP accounting, and feature-map heatmap dumps.

Exit status is 0 only when every executed check passed; usage and
precondition errors exit with status 2.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .agmf import AgmfConfig, agmf_config_from_recipe, agmf_flop_stages, agmf_param_count
from .agmf import agmf_forward, branch_outputs, fuse_branches
from .autodiff import grad_check
from .bench import run_bench
from .checks import CheckContext, run_checks
from .fmds import FmdsConfig, fmds_config_from_recipe, fmds_flop_stages, fmds_forward
from .fmds import fmds_param_count
from .gradtargets import all_targets
from .heatmap import make_heatmap, pgm_bytes
from .ntsr import load_tensor
from .report import CheckResult, RunReport, config_digest
from .tensor import make_rng

_DTYPES = {"f32": np.float32, "f64": np.float64}


def _add_common(parser: argparse.ArgumentParser, default_dtype: str = "f64") -> None:
    parser.add_argument("--seed", type=int, default=42, help="PRNG seed (default 42)")
    parser.add_argument("--dtype", choices=("f32", "f64"), default=default_dtype)
    parser.add_argument("--report", type=Path, default=None, help="write a JSON report here")
    parser.add_argument(
        "--redact-timings", action="store_true",
        help="replace wall-clock timings in the report (for byte-identical comparisons)",
    )


def _parse_shape(text: str) -> tuple:
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != 4 or any(p < 1 for p in parts):
        raise argparse.ArgumentTypeError(f"shape must be B,C,H,W with positive extents: {text!r}")
    return parts


def _emit(report: RunReport, args) -> int:
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        extra = ""
        if check.error is not None and check.tolerance is not None:
            extra = f" (err={check.error:.3e}, tol={check.tolerance:.0e})"
        detail = f" -- {check.detail}" if check.detail else ""
        print(f"{status} {check.name}{extra}{detail}")
    overall = "pass" if report.passed else "FAIL"
    print(f"[{report.command}] {len(report.checks)} checks, overall {overall}")
    if args.report is not None:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(report.to_json(redact_timings=args.redact_timings))
    return 0 if report.passed else 1


def _cmd_check(args) -> int:
    ctx = CheckContext(seed=args.seed, dtype=_DTYPES[args.dtype], inject_fault=args.inject_fault)
    results, timings = run_checks(ctx)
    digest = config_digest(
        {"command": "check", "seed": args.seed, "dtype": args.dtype, "inject_fault": args.inject_fault}
    )
    report = RunReport("check", args.seed, digest, checks=results, timings=timings)
    return _emit(report, args)


def _cmd_gradcheck(args) -> int:
    if args.dtype == "f32":
        print(
            "gradcheck refuses 32-bit mode: finite differences at eps ~1e-5 need float64 "
            "to stay above rounding noise; rerun with --dtype f64",
            file=sys.stderr,
        )
        return 2
    if args.eps <= 0 or args.tol <= 0:
        print("eps and tol must be positive", file=sys.stderr)
        return 2
    digest = config_digest(
        {"command": "gradcheck", "seed": args.seed, "eps": args.eps, "tol": args.tol}
    )
    report = RunReport("gradcheck", args.seed, digest)
    import time

    for target in all_targets(args.seed):
        start = time.perf_counter()
        try:
            grad_report = grad_check(target.fn, target.params, eps=args.eps, tol=args.tol, seed=args.seed)
            result = CheckResult(
                target.name, grad_report.passed,
                error=grad_report.max_rel_err, tolerance=args.tol,
                detail=f"{sum(t.size for t in target.params.values())} scalars",
            )
        except ValueError as exc:
            result = CheckResult(target.name, False, detail=f"error: {exc}")
        report.timings[target.name] = time.perf_counter() - start
        report.add(result)
    return _emit(report, args)


def _cmd_bench(args) -> int:
    rows = run_bench(
        args.shape, iters=args.iters, seed=args.seed,
        dtype=_DTYPES[args.dtype], naive_iters=args.naive_iters,
    )
    digest = config_digest(
        {
            "command": "bench", "seed": args.seed, "dtype": args.dtype,
            "shape": list(args.shape), "iters": args.iters, "naive_iters": args.naive_iters,
        }
    )
    report = RunReport("bench", args.seed, digest)
    print(f"backend: {kernels.ACTIVE_BACKEND}; shape {args.shape}, dtype {args.dtype}")
    print(f"{'row':28s} {'iters':>6s} {'mean':>12s} {'GFLOP/s':>9s}")
    for row in rows:
        gf = f"{row.gflops:9.2f}" if row.gflops is not None else "      n/a"
        print(f"{row.name:28s} {row.iters:6d} {row.mean_s * 1e3:10.3f}ms {gf}")
        report.add(
            CheckResult(
                row.name, True,
                detail=f"iters={row.iters} warmup={row.warmup} flops={row.flops}",
            )
        )
        report.timings[row.name + ".mean_s"] = row.mean_s
    return _emit(report, args)


def _load_recipe(args) -> dict:
    if args.config is not None:
        recipe = json.loads(Path(args.config).read_text())
        if recipe.get("module") != args.module:
            raise ValueError(
                f"--module {args.module} but config file describes {recipe.get('module')!r}"
            )
        return recipe
    if args.module == "fmds":
        return {
            "module": "fmds",
            "in_channels": args.channels,
            "out_channels": args.out_channels if args.out_channels else args.channels,
            "kernels": [3, 5, 7],
            "bias": args.bias,
            "dtype": args.dtype,
            "seed": args.seed,
        }
    return {
        "module": "agmf",
        "channels": args.channels,
        "variant": args.variant,
        "kernels": [3, 5, 7],
        "bias": args.bias,
        "dtype": args.dtype,
        "seed": args.seed,
    }


def _cmd_count(args) -> int:
    try:
        recipe = _load_recipe(args)
        if args.module == "fmds":
            cfg = fmds_config_from_recipe(recipe)
            params = fmds_param_count(cfg)
            channels = cfg.in_channels
            stages = None  # computed below against the input shape
        else:
            cfg = agmf_config_from_recipe(recipe)
            params = agmf_param_count(cfg)
            channels = cfg.channels
        shape = args.input_shape if args.input_shape else (1, channels, 32, 32)
        stages = fmds_flop_stages(cfg, shape) if args.module == "fmds" else agmf_flop_stages(cfg, shape)
    except ValueError as exc:
        print(f"count: {exc}", file=sys.stderr)
        return 2
    total = sum(f for _, f in stages)
    report = RunReport("count", args.seed, config_digest(recipe))
    print(f"{args.module} parameters: {params}")
    report.add(CheckResult("count.params", True, detail=str(params)))
    print(f"FLOPs for input shape {shape}:")
    for name, flops in stages:
        print(f"  {name:22s} {flops:>14d}")
        report.add(CheckResult(f"count.flops.{name}", True, detail=str(flops)))
    print(f"  {'total':22s} {total:>14d}")
    report.add(CheckResult("count.flops.total", True, detail=str(total)))
    return _emit(report, args)


def _cmd_dump(args) -> int:
    try:
        t = load_tensor(args.input)
    except (ValueError, OSError) as exc:
        print(f"dump: {exc}", file=sys.stderr)
        return 2
    _b, c, h, w = t.shape
    if h % 2 or w % 2:
        print(f"dump: input spatial extents must be even, got {h}x{w}", file=sys.stderr)
        return 2
    if t.shape[0] != 1:
        print(f"dump: expected a single-image tensor, got batch size {t.shape[0]}", file=sys.stderr)
        return 2
    dtype = t.dtype
    rng = make_rng(args.seed)
    stages = [("input", t)]
    if args.module == "fmds":
        cfg = FmdsConfig.create(rng, c, c, dtype=dtype)
        stages.append(("fmds", fmds_forward(t, cfg)))
        recipe = cfg.recipe(args.seed)
    else:
        cfg = AgmfConfig.create(rng, c, variant=args.variant, dtype=dtype)
        outs = branch_outputs(t, cfg)
        if cfg.use_fmds:
            stages.append(("fmds", outs[1]))
        stages.append(("agmf", fuse_branches(outs, cfg)))
        recipe = cfg.recipe(args.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport("dump", args.seed, config_digest(recipe))
    for i, (name, tensor) in enumerate(stages):
        dump = make_heatmap(tensor, name)
        data = pgm_bytes(dump)
        path = out_dir / f"{i:02d}_{name}.pgm"
        path.write_bytes(data)
        digest = hashlib.sha256(data).hexdigest()
        print(f"wrote {path} (range [{dump.vmin:.6g}, {dump.vmax:.6g}])")
        report.add(
            CheckResult(
                f"dump.{name}", True,
                detail=f"sha256={digest} vmin={dump.vmin!r} vmax={dump.vmax!r}",
            )
        )
    return _emit(report, args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msfusion",
        description="Verification harness for the multi-scale selection and gated fusion kernels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="run every module invariant suite")
    _add_common(p_check)
    p_check.add_argument(
        "--inject-fault", action="store_true",
        help="perturb one convolution kernel to demonstrate the oracle diff catches it",
    )
    p_check.set_defaults(fn=_cmd_check)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    _add_common(p_grad)
    p_grad.add_argument("--eps", type=float, default=1e-5, help="central-difference step")
    p_grad.add_argument("--tol", type=float, default=1e-4, help="max relative error allowed")
    p_grad.set_defaults(fn=_cmd_gradcheck)

    p_bench = sub.add_parser("bench", help="micro-benchmarks (compiled vs fallback vs naive)")
    _add_common(p_bench, default_dtype="f32")
    p_bench.add_argument("--shape", type=_parse_shape, default=(1, 32, 40, 40))
    p_bench.add_argument("--iters", type=int, default=10)
    p_bench.add_argument(
        "--naive-iters", type=int, default=1,
        help="iterations for the slow loop-oracle row (default 1)",
    )
    p_bench.set_defaults(fn=_cmd_bench)

    p_count = sub.add_parser("count", help="parameter and per-stage FLOP accounting")
    _add_common(p_count)
    p_count.add_argument("--module", choices=("fmds", "agmf"), required=True)
    p_count.add_argument("--config", type=Path, default=None, help="JSON config recipe")
    p_count.add_argument("--channels", type=int, default=4)
    p_count.add_argument("--out-channels", type=int, default=None, help="fmds only")
    p_count.add_argument("--variant", choices=("full", "no-fmds"), default="full")
    bias = p_count.add_mutually_exclusive_group()
    bias.add_argument("--bias", dest="bias", action="store_true", default=True)
    bias.add_argument("--no-bias", dest="bias", action="store_false")
    p_count.add_argument("--input-shape", type=_parse_shape, default=None)
    p_count.set_defaults(fn=_cmd_count)

    p_dump = sub.add_parser("dump", help="write channel-mean heatmaps per pipeline stage")
    _add_common(p_dump)
    p_dump.add_argument("--input", type=Path, required=True, help="NTSR1 tensor file")
    p_dump.add_argument("--module", choices=("fmds", "agmf"), required=True)
    p_dump.add_argument("--variant", choices=("full", "no-fmds"), default="full")
    p_dump.add_argument("--out", type=Path, required=True, help="output directory")
    p_dump.set_defaults(fn=_cmd_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench":
        try:
            return args.fn(args)
        except ValueError as exc:
            print(f"bench: {exc}", file=sys.stderr)
            return 2
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
