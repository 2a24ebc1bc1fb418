"""Convolution: worked examples, differential tests against the loop
oracle, backend cross-checks, and linearity."""

import dataclasses

import numpy as np
import pytest

from msfusion import kernels, ops
from msfusion.reference import conv2d_naive
from msfusion.tensor import ConvSpec, Tensor, make_conv_spec, make_rng

from conftest import uniform


def delta_depthwise(channels, k, dtype=np.float64) -> ConvSpec:
    """Depthwise spec whose kernel is 1 at the center: the identity filter."""
    w = np.zeros((channels, 1, k, k), dtype=dtype)
    w[:, 0, k // 2, k // 2] = 1.0
    pad = (k - 1) // 2
    return ConvSpec(kernel=(k, k), stride=(1, 1), padding=(pad, pad), groups=channels, weight=Tensor(w))


def random_case(rng, dtype):
    k = int(rng.choice([1, 3, 5, 7]))
    stride = int(rng.choice([1, 2]))
    c = int(rng.choice([1, 2, 3, 4]))
    groups = 1 if rng.random() < 0.5 else c
    pad = int(rng.integers(0, k // 2 + 2))
    h = max(1, k - 2 * pad) + int(rng.integers(0, 4))
    w = max(1, k - 2 * pad) + int(rng.integers(0, 4))
    b = int(rng.integers(1, 3))
    c_out = c if groups == c else int(rng.integers(1, 5))
    x = uniform(rng, (b, c, h, w), dtype)
    spec = make_conv_spec(
        rng, c, c_out, k, stride=stride, padding=pad, groups=groups,
        bias=bool(rng.random() < 0.5), dtype=dtype,
    )
    return x, spec


class TestConvExamples:
    def test_all_ones_depthwise_footprint(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        spec = ConvSpec(
            kernel=(3, 3), stride=(1, 1), padding=(1, 1), groups=1,
            weight=Tensor(np.ones((1, 1, 3, 3))),
        )
        out = ops.conv2d(x, spec).data[0, 0]
        expected = np.array([[4.0, 6.0, 4.0], [6.0, 9.0, 6.0], [4.0, 6.0, 4.0]])
        assert np.array_equal(out, expected)

    def test_delta_kernel_is_identity(self, rng):
        x = uniform(rng, (2, 3, 5, 5))
        out = ops.conv2d(x, delta_depthwise(3, 3))
        assert np.array_equal(out.data, x.data)

    def test_pointwise_mean_over_channels(self, rng):
        c = 6
        x = uniform(rng, (1, c, 4, 4))
        w = np.full((1, c, 1, 1), 1.0 / c)
        spec = ConvSpec(kernel=(1, 1), stride=(1, 1), padding=(0, 0), groups=1, weight=Tensor(w))
        out = ops.conv2d(x, spec).data[:, 0]
        assert np.max(np.abs(out - x.data.mean(axis=1))) < 1e-12

    def test_channel_mismatch(self, rng):
        spec = make_conv_spec(rng, 4, 4, 3)
        with pytest.raises(ValueError, match="channel mismatch"):
            ops.conv2d(uniform(rng, (1, 3, 5, 5)), spec)

    def test_non_positive_output_extent(self, rng):
        spec = make_conv_spec(rng, 1, 1, 7)
        with pytest.raises(ValueError, match="non-positive output extent"):
            ops.conv2d(uniform(rng, (1, 1, 3, 3)), spec)


class TestNaiveOracle:
    def test_zero_weights_zero_output(self, rng):
        x = uniform(rng, (1, 2, 4, 4))
        spec = ConvSpec(
            kernel=(3, 3), stride=(1, 1), padding=(1, 1), groups=1,
            weight=Tensor.zeros((3, 2, 3, 3)), bias=Tensor.zeros((3,)),
        )
        assert np.all(conv2d_naive(x, spec).data == 0.0)

    def test_identity_weight_matrix(self, rng):
        c = 4
        x = uniform(rng, (2, c, 3, 3))
        w = np.eye(c).reshape(c, c, 1, 1)
        spec = ConvSpec(kernel=(1, 1), stride=(1, 1), padding=(0, 0), groups=1, weight=Tensor(w))
        assert np.array_equal(conv2d_naive(x, spec).data, x.data)

    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-6), (np.float32, 1e-3)])
    def test_active_backend_matches_naive(self, dtype, tol):
        rng = make_rng(7)
        worst = 0.0
        for _ in range(60):
            x, spec = random_case(rng, dtype)
            got = ops.conv2d(x, spec).data
            ref = conv2d_naive(x, spec).data
            worst = max(worst, float(np.max(np.abs(got - ref))))
        assert worst < tol


@pytest.mark.parametrize("backend", kernels.available_backends())
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-6), (np.float32, 1e-3)])
def test_each_backend_matches_naive(backend, dtype, tol):
    be = kernels.get_backend(backend)
    rng = make_rng(11)
    worst = 0.0
    for _ in range(40):
        x, spec = random_case(rng, dtype)
        out = be.conv2d_forward(
            x.data, spec.weight.data, spec.stride[0], spec.stride[1],
            spec.padding[0], spec.padding[1], spec.groups,
        )
        if spec.bias is not None:
            out = out + spec.bias.data[None, :, None, None]
        worst = max(worst, float(np.max(np.abs(out - conv2d_naive(x, spec).data))))
    assert worst < tol


@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled backend not built")
def test_backends_agree_on_backward_kernels():
    rng = make_rng(13)
    compiled = kernels.get_backend("compiled")
    fallback = kernels.get_backend("fallback")
    for _ in range(20):
        x, spec = random_case(rng, np.float64)
        out_shape = spec.output_shape(x.shape)
        cot = rng.uniform(-1, 1, out_shape)
        args = (spec.stride[0], spec.stride[1], spec.padding[0], spec.padding[1], spec.groups)
        da = compiled.conv2d_grad_input(cot, spec.weight.data, x.shape, *args)
        db = fallback.conv2d_grad_input(cot, spec.weight.data, x.shape, *args)
        assert np.max(np.abs(da - db)) < 1e-12
        wa = compiled.conv2d_grad_weight(cot, x.data, spec.weight.shape, *args)
        wb = fallback.conv2d_grad_weight(cot, x.data, spec.weight.shape, *args)
        assert np.max(np.abs(wa - wb)) < 1e-12


def test_linearity(rng):
    for _ in range(5):
        x, spec = random_case(rng, np.float64)
        spec = dataclasses.replace(spec, bias=None)
        y = uniform(rng, x.shape)
        a, b = 0.7, -1.3
        mixed = ops.conv2d(Tensor(a * x.data + b * y.data), spec).data
        parts = a * ops.conv2d(x, spec).data + b * ops.conv2d(y, spec).data
        assert np.max(np.abs(mixed - parts)) < 1e-6
