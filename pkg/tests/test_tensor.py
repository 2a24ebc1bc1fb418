"""Tensor type, shape ops, elementwise ops, normalization, and FLOP math."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msfusion import ops
from msfusion.tensor import BatchNormSpec, ConvSpec, Tensor, flop_count, make_conv_spec, make_rng

from conftest import uniform


class TestTensor:
    def test_rejects_integer_dtype(self):
        with pytest.raises(ValueError, match="dtype"):
            Tensor(np.arange(4).reshape(1, 1, 2, 2))

    def test_rejects_zero_extent(self):
        with pytest.raises(ValueError, match="extents"):
            Tensor(np.zeros((1, 0, 2, 2)))

    def test_from_array_casts_to_float64(self):
        t = Tensor.from_array([[1, 2], [3, 4]])
        assert t.dtype == np.float64
        assert t.shape == (2, 2)

    def test_data_is_read_only(self):
        t = Tensor.zeros((1, 1, 2, 2))
        with pytest.raises(ValueError):
            t.data[0, 0, 0, 0] = 1.0


class TestReshape:
    def test_row_major_reinterpretation(self):
        t = Tensor(np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4))
        r = ops.reshape(t, (4, 1, 2, 2))
        assert r.shape == (4, 1, 2, 2)
        assert np.array_equal(r.data.ravel(), t.data.ravel())

    def test_infer_marker(self, rng):
        t = uniform(rng, (2, 3, 4, 4))
        assert ops.reshape(t, (-1, 3, 4, 4)).shape == (2, 3, 4, 4)

    def test_count_mismatch(self, rng):
        with pytest.raises(ValueError, match="mismatch"):
            ops.reshape(uniform(rng, (1, 2, 2, 2)), (1, 3, 2, 2))

    def test_two_infer_markers(self, rng):
        with pytest.raises(ValueError, match="-1"):
            ops.reshape(uniform(rng, (1, 2, 2, 2)), (-1, -1, 2, 2))


class TestPermute:
    def test_identity_is_bitwise_equal(self, rng):
        t = uniform(rng, (2, 3, 4, 5))
        assert np.array_equal(ops.permute(t, (0, 1, 2, 3)).data, t.data)

    def test_hw_transpose_involution(self, rng):
        t = uniform(rng, (2, 3, 4, 5))
        once = ops.permute(t, (0, 1, 3, 2))
        assert once.shape == (2, 3, 5, 4)
        assert np.array_equal(ops.permute(once, (0, 1, 3, 2)).data, t.data)

    def test_index_map_enumeration(self, rng):
        t = uniform(rng, (1, 2, 3, 1))
        out = ops.permute(t, (0, 2, 1, 3))
        assert out.shape == (1, 3, 2, 1)
        for b in range(1):
            for i in range(2):
                for j in range(3):
                    assert out.data[b, j, i, 0] == t.data[b, i, j, 0]

    def test_not_a_permutation(self, rng):
        with pytest.raises(ValueError, match="permutation"):
            ops.permute(uniform(rng, (1, 2, 3, 4)), (0, 1, 1, 3))

    @settings(max_examples=30, deadline=None)
    @given(st.data())
    def test_roundtrip_property(self, data):
        ndim = data.draw(st.integers(2, 6))
        shape = tuple(data.draw(st.integers(1, 4)) for _ in range(ndim))
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = make_rng(seed)
        t = uniform(rng, shape)
        axes = tuple(int(a) for a in rng.permutation(ndim))
        inverse = tuple(int(i) for i in np.argsort(axes))
        assert np.array_equal(ops.permute(ops.permute(t, axes), inverse).data, t.data)


class TestConcat:
    def test_doubles_channels(self, rng):
        a = uniform(rng, (1, 5, 3, 3))
        b = uniform(rng, (1, 5, 3, 3))
        assert ops.concat_channels(a, b).shape == (1, 10, 3, 3)

    def test_single_input_is_copy(self, rng):
        a = uniform(rng, (2, 3, 2, 2))
        assert np.array_equal(ops.concat_channels(a).data, a.data)

    def test_slab_lookup(self, rng):
        parts = [uniform(rng, (1, 4, 2, 2)) for _ in range(3)]
        out = ops.concat_channels(*parts)
        assert out.shape == (1, 12, 2, 2)
        for k, part in enumerate(parts):
            for c in range(4):
                assert np.array_equal(out.data[0, 4 * k + c], part.data[0, c])

    def test_mismatched_spatial(self, rng):
        with pytest.raises(ValueError, match="batch/height/width"):
            ops.concat_channels(uniform(rng, (1, 2, 3, 3)), uniform(rng, (1, 2, 3, 4)))


class TestSigmoid:
    def test_zero_gives_half(self):
        assert ops.sigmoid(Tensor.zeros((1, 1, 1, 1))).data.ravel()[0] == 0.5

    def test_saturation_stays_finite_and_bounded(self):
        lo = ops.sigmoid(Tensor.full((1, 1, 1, 1), -50.0)).data.ravel()[0]
        assert 0 < lo < 1e-6
        hi = ops.sigmoid(Tensor.full((1, 1, 1, 1), 800.0)).data.ravel()[0]
        assert hi < 1.0
        assert ops.sigmoid(Tensor.full((1, 1, 1, 1), -800.0)).data.ravel()[0] > 0.0

    def test_reference_value(self):
        got = ops.sigmoid(Tensor.full((1, 1, 1, 1), 1.0)).data.ravel()[0]
        assert abs(got - 0.7310585786) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-100, 100), st.floats(-100, 100))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        s = ops.sigmoid(Tensor.from_array([lo, hi])).data
        assert s[0] <= s[1]


class TestElementwise:
    def test_mul_by_ones_identity(self, rng):
        t = uniform(rng, (1, 3, 2, 2))
        assert np.array_equal(ops.elementwise_mul(t, Tensor.full(t.shape, 1.0)).data, t.data)

    def test_add_inverse(self, rng):
        t = uniform(rng, (1, 3, 2, 2))
        neg = Tensor(-t.data)
        assert np.all(ops.elementwise_add(t, neg).data == 0.0)

    def test_mul_arithmetic(self):
        a = Tensor.from_array([2.0, 3.0])
        b = Tensor.from_array([4.0, 5.0])
        assert np.array_equal(ops.elementwise_mul(a, b).data, [8.0, 15.0])

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="shape mismatch"):
            ops.elementwise_add(uniform(rng, (1, 2, 2, 2)), uniform(rng, (1, 2, 2, 3)))


class TestZpool:
    def test_constant_input(self):
        out = ops.zpool(Tensor.full((1, 3, 2, 2), 5.0))
        assert out.shape == (1, 2, 2, 2)
        assert np.all(out.data == 5.0)

    def test_two_channel_arithmetic(self):
        x = Tensor(np.stack([np.full((2, 2), 1.0), np.full((2, 2), 3.0)])[None])
        out = ops.zpool(x)
        assert np.all(out.data[0, 0] == 3.0)
        assert np.all(out.data[0, 1] == 2.0)

    def test_matches_loop_oracle_exactly(self, rng):
        x = uniform(rng, (2, 8, 4, 5))
        got = ops.zpool(x).data
        b_n, c_n, h_n, w_n = x.shape
        for b in range(b_n):
            for h in range(h_n):
                for w in range(w_n):
                    mx = x.data[b, 0, h, w]
                    acc = np.float64(0.0)
                    for c in range(c_n):
                        v = x.data[b, c, h, w]
                        mx = v if v > mx else mx
                        acc = np.float64(acc + v)
                    assert got[b, 0, h, w] == mx
                    assert got[b, 1, h, w] == acc / np.float64(c_n)

    def test_max_at_least_mean(self, rng):
        out = ops.zpool(uniform(rng, (3, 7, 5, 5))).data
        assert np.all(out[:, 0] >= out[:, 1])


class TestBatchNorm:
    def test_identity_parameters(self, rng):
        x = uniform(rng, (1, 3, 4, 4))
        spec = BatchNormSpec.identity(3, epsilon=1e-12)
        assert np.max(np.abs(ops.batch_norm(x, spec).data - x.data)) < 1e-6

    def test_zero_input_zero_beta(self):
        spec = BatchNormSpec.identity(2)
        out = ops.batch_norm(Tensor.zeros((1, 2, 3, 3)), spec)
        assert np.all(out.data == 0.0)

    def test_closed_form(self):
        spec = BatchNormSpec(
            gamma=Tensor.from_array([2.0]),
            beta=Tensor.from_array([1.0]),
            mean=Tensor.from_array([3.0]),
            var=Tensor.from_array([4.0]),
            epsilon=0.0,
        )
        out = ops.batch_norm(Tensor.full((1, 1, 1, 1), 5.0), spec)
        assert out.data.ravel()[0] == 3.0

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError, match="channel mismatch"):
            ops.batch_norm(uniform(rng, (1, 3, 2, 2)), BatchNormSpec.identity(4))

    def test_negative_var_rejected(self):
        with pytest.raises(ValueError, match="var"):
            BatchNormSpec(
                gamma=Tensor.from_array([1.0]),
                beta=Tensor.from_array([0.0]),
                mean=Tensor.from_array([0.0]),
                var=Tensor.from_array([-1.0]),
            )

    def test_zero_var_and_epsilon_rejected(self):
        with pytest.raises(ValueError, match="strictly positive"):
            BatchNormSpec(
                gamma=Tensor.from_array([1.0]),
                beta=Tensor.from_array([0.0]),
                mean=Tensor.from_array([0.0]),
                var=Tensor.from_array([0.0]),
                epsilon=0.0,
            )


class TestFlopCount:
    def test_pointwise_case(self, rng):
        spec = make_conv_spec(rng, 64, 32, 1, bias=False)
        assert flop_count(spec, (1, 64, 8, 8)) == 262_144

    def test_depthwise_single_output(self, rng):
        spec = make_conv_spec(rng, 1, 1, 3, groups=1, bias=False)
        assert flop_count(spec, (1, 1, 3, 3)) == 18

    def test_non_positive_extent_raises(self, rng):
        spec = make_conv_spec(rng, 1, 1, 5, bias=False)
        with pytest.raises(ValueError, match="non-positive output extent"):
            flop_count(spec, (1, 1, 3, 3))

    def test_linear_in_batch_and_out_channels(self, rng):
        spec = make_conv_spec(rng, 4, 6, 3, padding=1, bias=False)
        wide = make_conv_spec(rng, 4, 12, 3, padding=1, bias=False)
        assert flop_count(spec, (2, 4, 8, 8)) == 2 * flop_count(spec, (1, 4, 8, 8))
        assert flop_count(wide, (1, 4, 8, 8)) == 2 * flop_count(spec, (1, 4, 8, 8))


class TestConvSpecValidation:
    def test_groups_must_divide_out_channels(self, rng):
        w = Tensor(rng.uniform(-1, 1, (3, 2, 1, 1)))
        with pytest.raises(ValueError, match="groups"):
            ConvSpec(kernel=(1, 1), stride=(1, 1), padding=(0, 0), groups=2, weight=w)

    def test_bias_length(self, rng):
        w = Tensor(rng.uniform(-1, 1, (3, 2, 1, 1)))
        with pytest.raises(ValueError, match="bias"):
            ConvSpec(
                kernel=(1, 1), stride=(1, 1), padding=(0, 0), groups=1,
                weight=w, bias=Tensor(rng.uniform(-1, 1, 2)),
            )
