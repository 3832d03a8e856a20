import numpy as np
import pytest

import hazenet.tensor as T
from hazenet.errors import NumericalError, ShapeMismatch, TapeError
from hazenet.tensor import Parameter, Tensor

from oracles import (
    channel_shuffle_reference,
    conv2d_reference,
    directional_pool_reference,
    finite_difference,
    max_relative_error,
)


def t64(arr, requires_grad=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=requires_grad)


class TestTensorBasics:
    def test_data_matches_shape(self):
        x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert x.shape == (2, 3)
        assert x.size == 6

    def test_zero_extent_rejected(self):
        with pytest.raises(ShapeMismatch):
            Tensor(np.zeros((2, 0, 3)))

    def test_default_dtype_is_float32(self):
        assert Tensor([1, 2, 3]).dtype == np.float32
        assert Tensor(np.zeros(3, dtype=np.float64)).dtype == np.float64

    def test_debug_checks_flag_nan(self):
        x = Tensor(np.array([1.0, -1.0]))
        bad = Tensor(np.array([0.0, 0.0]))
        with np.errstate(divide="ignore"):
            with pytest.raises(NumericalError) as exc:
                T.div(x, bad)
        assert exc.value.op == "div"


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        w = Parameter(np.ones((1, 1, 1, 1)))
        out = T.conv2d(x, w)
        np.testing.assert_allclose(out.data, x.data)

    def test_averaging_a_constant_with_reflect_pad(self):
        x = Tensor(np.full((1, 1, 4, 5), 3.25))
        w = Parameter(np.full((1, 1, 3, 3), 1.0 / 9.0))
        out = T.conv2d(x, w, padding=1, pad_mode="reflect")
        np.testing.assert_allclose(out.data, 3.25, rtol=1e-6)

    def test_matches_bruteforce_oracle(self, rng):
        x = rng.standard_normal((2, 3, 5, 5))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out = T.conv2d(t64(x), Parameter(w), Parameter(b), stride=2, padding=1)
        ref = conv2d_reference(x, w, b, stride=2, padding=1)
        np.testing.assert_allclose(out.data, ref, rtol=1e-6)

    @pytest.mark.parametrize("stride", [1, 2])
    @pytest.mark.parametrize("padding", [0, 1])
    @pytest.mark.parametrize("grouped", [False, True])
    @pytest.mark.parametrize("case", range(5))
    def test_random_sweep_against_oracle(self, stride, padding, grouped, case):
        # >= 50 random instances with dims <= 8, exhaustive over the knob grid
        rng = np.random.default_rng(101 + case)
        cin = int(rng.integers(1, 5))
        groups = cin if grouped else 1
        cout = int(rng.integers(1, 3)) * groups
        k = int(rng.choice([1, 3]))
        h = int(rng.integers(k, 8))
        w = int(rng.integers(k, 8))
        n = int(rng.integers(1, 3))
        x = rng.standard_normal((n, cin, h, w))
        wt = rng.standard_normal((cout, cin // groups, k, k))
        b = rng.standard_normal(cout)
        out = T.conv2d(t64(x), Parameter(wt), Parameter(b), stride=stride,
                       padding=padding, groups=groups)
        ref = conv2d_reference(x, wt, b, stride=stride, padding=padding, groups=groups)
        np.testing.assert_allclose(out.data, ref, rtol=1e-6, atol=1e-9)

    def test_reflect_pad_matches_oracle(self, rng):
        x = rng.standard_normal((1, 2, 6, 4))
        w = rng.standard_normal((3, 2, 3, 3))
        out = T.conv2d(t64(x), Parameter(w), padding=1, pad_mode="reflect")
        ref = conv2d_reference(x, w, padding=1, pad_mode="reflect")
        np.testing.assert_allclose(out.data, ref, rtol=1e-6)

    def test_channel_mismatch_names_dimension(self):
        x = Tensor(np.zeros((1, 3, 4, 4)))
        w = Parameter(np.zeros((2, 4, 3, 3)))
        with pytest.raises(ShapeMismatch, match="channels"):
            T.conv2d(x, w, padding=1)

    def test_reflect_pad_too_wide(self):
        x = Tensor(np.zeros((1, 1, 2, 2)))
        w = Parameter(np.zeros((1, 1, 3, 3)))
        with pytest.raises(ShapeMismatch, match="reflect"):
            T.conv2d(x, w, padding=2, pad_mode="reflect")

    def test_kernel_larger_than_input(self):
        x = Tensor(np.zeros((1, 1, 2, 2)))
        w = Parameter(np.zeros((1, 1, 5, 5)))
        with pytest.raises(ShapeMismatch, match="kernel"):
            T.conv2d(x, w)


class TestDirectionalPool:
    def test_horizontal_avg(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        out = T.directional_pool(x, "horizontal", "avg")
        np.testing.assert_allclose(out.data, [[[1.5, 3.5]]])

    def test_vertical_max(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        out = T.directional_pool(x, "vertical", "max")
        np.testing.assert_allclose(out.data, [[[3.0, 4.0]]])

    @pytest.mark.parametrize("axis", ["horizontal", "vertical"])
    @pytest.mark.parametrize("kind", ["avg", "max"])
    def test_matches_loop_oracle(self, axis, kind, rng):
        x = rng.standard_normal((1, 8, 7, 5))
        out = T.directional_pool(t64(x), axis, kind)
        np.testing.assert_array_equal(out.data, directional_pool_reference(x, axis, kind))

    def test_avg_commutes_with_scaling(self, rng):
        x = rng.standard_normal((2, 3, 4, 5))
        alpha = 2.75
        a = T.directional_pool(t64(alpha * x), "horizontal", "avg").data
        b = alpha * T.directional_pool(t64(x), "horizontal", "avg").data
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_max_commutes_with_monotone_map(self, rng):
        x = rng.standard_normal((2, 3, 4, 5))
        f = np.tanh  # strictly increasing
        a = T.directional_pool(t64(f(x)), "vertical", "max").data
        b = f(T.directional_pool(t64(x), "vertical", "max").data)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_unknown_axis_or_kind(self):
        x = Tensor(np.zeros((1, 1, 2, 2)))
        with pytest.raises(ValueError):
            T.directional_pool(x, "diagonal", "avg")
        with pytest.raises(ValueError):
            T.directional_pool(x, "horizontal", "median")


class TestChannelShuffle:
    def test_four_channels_two_groups(self):
        x = Tensor(np.arange(4, dtype=np.float32).reshape(1, 4, 1))
        out = T.channel_shuffle(x, 2)
        np.testing.assert_array_equal(out.data[0, :, 0], [0, 2, 1, 3])

    def test_six_channels_two_groups(self):
        x = Tensor(np.arange(6, dtype=np.float32).reshape(1, 6, 1))
        out = T.channel_shuffle(x, 2)
        np.testing.assert_array_equal(out.data[0, :, 0], [0, 3, 1, 4, 2, 5])

    def test_single_group_is_identity(self, rng):
        x = rng.standard_normal((2, 6, 5))
        np.testing.assert_array_equal(T.channel_shuffle(t64(x), 1).data, x)

    @pytest.mark.parametrize("c,groups", [(4, 2), (6, 2), (6, 3), (8, 4), (12, 6), (12, 12)])
    def test_inverse_composition_is_identity(self, c, groups, rng):
        x = rng.standard_normal((1, c, 3))
        once = T.channel_shuffle(t64(x), groups)
        back = T.channel_shuffle(once, c // groups)
        np.testing.assert_array_equal(back.data, x)

    def test_matches_reference(self, rng):
        x = rng.standard_normal((2, 12, 4))
        out = T.channel_shuffle(t64(x), 3)
        np.testing.assert_array_equal(out.data, channel_shuffle_reference(x, 3))

    def test_indivisible_raises(self):
        x = Tensor(np.zeros((1, 5, 2)))
        with pytest.raises(ShapeMismatch):
            T.channel_shuffle(x, 2)


class TestActivations:
    def test_relu6(self):
        x = Tensor(np.array([-1.0, 3.0, 8.0]))
        np.testing.assert_allclose(T.apply_activation(x, "relu6").data, [0.0, 3.0, 6.0])

    def test_sigmoid_at_zero(self):
        assert T.apply_activation(Tensor(np.array([0.0])), "sigmoid").item() == 0.5

    def test_elu_limits(self):
        x = Tensor(np.array([-40.0, 0.0, 2.0], dtype=np.float64))
        out = T.apply_activation(x, "elu").data
        np.testing.assert_allclose(out, [np.exp(-40.0) - 1.0, 0.0, 2.0])
        assert abs(out[0] + 1.0) < 1e-12

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            T.apply_activation(Tensor(np.array([0.0])), "gelu")


class TestInstanceNorm:
    def test_constant_channel_maps_to_zero(self):
        x = Tensor(np.full((1, 2, 3, 3), 5.0))
        out = T.instance_norm(x, eps=1e-5)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_already_normalized_pair(self):
        x = Tensor(np.array([[[[-1.0, 1.0]]]], dtype=np.float64))
        out = T.instance_norm(x, eps=1e-12)
        np.testing.assert_allclose(out.data, [[[[-1.0, 1.0]]]], rtol=1e-5)

    def test_output_moments(self, rng):
        x = t64(rng.standard_normal((2, 3, 8, 8)))
        out = T.instance_norm(x, eps=1e-10).data
        mean = out.mean(axis=(2, 3))
        var = out.var(axis=(2, 3))
        assert np.abs(mean).max() < 1e-6
        assert np.abs(var - 1.0).max() < 1e-4

    def test_invariant_under_channel_affine(self, rng):
        x = rng.standard_normal((1, 3, 6, 6))
        scale = np.array([2.0, 0.5, 3.0]).reshape(1, 3, 1, 1)
        shift = np.array([1.0, -2.0, 0.25]).reshape(1, 3, 1, 1)
        a = T.instance_norm(t64(x), eps=1e-10).data
        b = T.instance_norm(t64(scale * x + shift), eps=1e-10).data
        assert np.abs(a - b).max() < 1e-4


class TestUpsample:
    def test_factor_two_replicates(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        out = T.upsample_nearest(x, 2)
        expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        np.testing.assert_array_equal(out.data[0, 0], expected)

    def test_factor_one_identity(self, rng):
        x = rng.standard_normal((1, 2, 3, 3))
        np.testing.assert_array_equal(T.upsample_nearest(t64(x), 1).data, x)

    def test_two_stages_reach_4x(self):
        x = Tensor(np.zeros((1, 1, 16, 16)))
        out = T.upsample_nearest(T.upsample_nearest(x, 2), 2)
        assert out.shape == (1, 1, 64, 64)


class TestBackward:
    def test_linear_loss_grad_is_input(self, rng):
        x = rng.standard_normal((3, 4))
        w = Parameter(rng.standard_normal((3, 4)))
        loss = T.mul(w, Tensor(x)).sum()
        T.backward(loss)
        np.testing.assert_allclose(w.grad, x, rtol=1e-6)

    def test_sigmoid_grad_at_zero(self):
        w = Parameter(np.zeros(5))
        loss = T.sigmoid(w).sum()
        loss.backward()
        np.testing.assert_allclose(w.grad, 0.25)

    def test_non_scalar_loss_rejected(self):
        w = Parameter(np.zeros(3))
        out = T.sigmoid(w)
        with pytest.raises(ShapeMismatch):
            T.backward(out)

    def test_backward_without_tape(self):
        with pytest.raises(TapeError):
            T.backward(Tensor(np.array([1.0])))

    def test_backward_twice_rejected(self):
        w = Parameter(np.ones(2))
        loss = T.mul(w, w).sum()
        loss.backward()
        with pytest.raises(TapeError):
            loss.backward()

    def test_grad_shape_matches_parameter(self, rng):
        w = Parameter(rng.standard_normal((2, 3, 4)))
        T.backward(T.mul(w, w).sum())
        assert w.grad.shape == w.shape

    def test_no_grad_blocks_recording(self):
        w = Parameter(np.ones(2))
        with T.no_grad():
            out = T.mul(w, w).sum()
        assert out._bwd is None and not out.requires_grad

    def test_each_parameter_gradient_applied_once(self, rng):
        # w used twice: dL/dw = 2w + 1
        w = Parameter(rng.standard_normal(4))
        loss = (T.mul(w, w) + w).sum()
        loss.backward()
        np.testing.assert_allclose(w.grad, 2 * w.data + 1, rtol=1e-6)


def _fd_check(build, arrays, max_coords=None, seed=0):
    """FD-vs-analytic agreement for scalar build(*tensors); arrays are float64."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build(*tensors)
    T.backward(loss)
    fd = finite_difference(lambda: build(*[Tensor(a) for a in arrays]).item(),
                           arrays, max_coords=max_coords, seed=seed)
    worst = 0.0
    for t, (g, mask) in zip(tensors, fd):
        worst = max(worst, max_relative_error(t.grad, g, mask))
    return worst


class TestFiniteDifferenceGradients:
    @pytest.mark.parametrize("name,build,shapes", [
        ("conv2d", lambda x, w, b: T.conv2d(x, w, b, stride=2, padding=1).sum(),
         [(1, 2, 5, 5), (3, 2, 3, 3), (3,)]),
        ("conv2d_reflect", lambda x, w: T.conv2d(x, w, padding=1, pad_mode="reflect").sum(),
         [(1, 2, 4, 4), (2, 2, 3, 3)]),
        ("conv2d_grouped", lambda x, w: T.conv2d(x, w, groups=2, padding=1).sum(),
         [(1, 4, 4, 4), (4, 2, 3, 3)]),
        ("conv1d", lambda x, w, b: T.conv1d(x, w, b, padding=1).sum(),
         [(1, 3, 6), (4, 3, 3), (4,)]),
        ("unfold", lambda x: (T.unfold(x, 3, padding=1) ** 2.0).sum(), [(1, 2, 4, 4)]),
        ("avg_pool", lambda x: (T.directional_pool(x, "horizontal", "avg") ** 2.0).sum(),
         [(1, 3, 4, 5)]),
        ("max_pool", lambda x: (T.directional_pool(x, "vertical", "max") ** 2.0).sum(),
         [(1, 3, 4, 5)]),
        ("shuffle", lambda x: (T.channel_shuffle(x, 2) ** 2.0).sum(), [(1, 4, 5)]),
        ("sigmoid", lambda x: T.sigmoid(x).sum(), [(3, 4)]),
        ("tanh", lambda x: T.tanh(x).sum(), [(3, 4)]),
        ("elu", lambda x: T.elu(x).sum(), [(3, 4)]),
        ("relu6", lambda x: T.relu6(x).sum(), [(3, 4)]),
        ("instance_norm", lambda x: (T.instance_norm(x, eps=1e-5) ** 2.0).sum(), [(2, 2, 4, 4)]),
        ("upsample", lambda x: (T.upsample_nearest(x, 2) ** 2.0).sum(), [(1, 2, 3, 3)]),
        ("softmax", lambda x: (T.softmax(x, 1) ** 2.0).sum(), [(2, 5, 3)]),
        ("concat_split", lambda a, b: (T.split(T.concat([a, b], 2), [3, 2], 2)[0] ** 2.0).sum(),
         [(1, 2, 3), (1, 2, 2)]),
        ("mean_div", lambda a, b: T.div(a, b).mean(), [(3, 4), (3, 4)]),
        ("sqrt_chain", lambda x: T.sqrt(T.mul(x, x) + 1e-3).sum(), [(4, 4)]),
    ])
    def test_op_gradients(self, name, build, shapes):
        rng = np.random.default_rng(hash(name) % 2**32)
        arrays = [rng.standard_normal(s) for s in shapes]
        if name == "relu6":
            arrays = [np.clip(a, -3, None) + np.sign(a) * 0.01 + 0.005 for a in arrays]
        if name == "mean_div":
            arrays[1] = np.abs(arrays[1]) + 0.5
        worst = _fd_check(build, arrays)
        assert worst < 1e-3, f"{name}: max relative gradient error {worst}"
