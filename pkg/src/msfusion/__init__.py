"""NCHW tensor kernels for gated multi-scale fusion modules.

A small self-contained library: dense 4-d tensors with grouped-convolution,
normalization, gating and pooling primitives (compiled kernels with a
numpy fallback), tape-based reverse-mode gradients, the fine-grained
multi-scale selection pipeline, the gated multi-branch fusion module, and
a verification CLI (``msfusion``) driving invariant suites, gradient
checks, benchmarks, accounting, and heatmap dumps.
"""

from .agmf import AgmfConfig, agmf_flop_stages, agmf_forward, agmf_param_count, fuse_branches
from .autodiff import GradReport, Tape, Var, backward, grad_check
from .fmds import (
    FmdsConfig,
    adaptive_select,
    concat_original,
    fmds_flop_stages,
    fmds_forward,
    fmds_param_count,
    multiscale_branch_sum,
    partition_blocks,
    reassemble_blocks,
)
from .gates import (
    GatedUnitParams,
    TripletAttentionParams,
    gated_unit_forward,
    triplet_attention_forward,
)
from .kernels import ACTIVE_BACKEND, available_backends
from .ntsr import load_tensor, save_tensor
from .ops import (
    batch_norm,
    concat_channels,
    conv2d,
    elementwise_add,
    elementwise_mul,
    permute,
    repeat_channels,
    reshape,
    scale,
    sigmoid,
    silu,
    zpool,
)
from .reference import conv2d_naive
from .tensor import BatchNormSpec, ConvSpec, Tensor, flop_count, make_conv_spec, make_rng

__version__ = "0.1.0"
