import numpy as np
import pytest

import hazenet.tensor as T
from hazenet.attention import FA, SE, SHA, SHAConfig, sha_param_count
from hazenet.errors import ShapeMismatch
from hazenet.nn import make_rng
from hazenet.tensor import Tensor


def sha_reference(x, sha):
    """Straight-line numpy reimplementation of the attention pipeline."""
    cfg = sha.cfg
    n, c, h, w = x.shape
    v_h = x.mean(axis=3)
    v_v = x.mean(axis=2)
    if cfg.enable_maxpool:
        v_h = v_h + x.max(axis=3)
        v_v = v_v + x.max(axis=2)
    joint = np.concatenate([v_h, v_v], axis=2)
    if cfg.enable_shuffle:
        g, per = cfg.shuffle_groups, c // cfg.shuffle_groups
        shuffled = np.empty_like(joint)
        for gi in range(g):
            for i in range(per):
                shuffled[:, i * g + gi] = joint[:, gi * per + i]
        joint = shuffled
    wr = sha.reduce.weight.data[:, :, 0].astype(np.float64)
    br = sha.reduce.bias.data.astype(np.float64)
    mid = np.einsum("mc,ncl->nml", wr, joint) + br[None, :, None]
    mid = np.clip(mid, 0.0, 6.0)
    z_h, z_v = mid[:, :, :h], mid[:, :, h:]

    k = cfg.restore_kernel
    p = (k - 1) // 2
    wk = sha.restore.weight.data.astype(np.float64)
    bk = sha.restore.bias.data.astype(np.float64)

    def restore(z):
        length = z.shape[2]
        zp = np.pad(z, ((0, 0), (0, 0), (p, p)), mode="reflect") if p else z
        out = np.zeros((n, c, length))
        for ni in range(n):
            for o in range(c):
                for pos in range(length):
                    acc = bk[o]
                    for m in range(wk.shape[1]):
                        for kk in range(k):
                            acc += wk[o, m, kk] * zp[ni, m, pos + kk]
                    out[ni, o, pos] = acc
        return out

    y_h, y_v = restore(z_h), restore(z_v)
    attn = 1.0 / (1.0 + np.exp(-(y_h[:, :, :, None] * y_v[:, :, None, :])))
    return attn * x, attn


class TestSHA:
    def test_zero_weights_gate_is_half(self, rng):
        sha = SHA(SHAConfig(channels=8), make_rng(1)).zero_weights()
        x = Tensor(rng.standard_normal((1, 8, 5, 6)).astype(np.float32))
        out, state = sha.attend(x)
        np.testing.assert_allclose(state.attn.data, 0.5)
        np.testing.assert_allclose(out.data, 0.5 * x.data, rtol=1e-6)

    def test_constant_input_gives_constant_attention(self, rng):
        sha = SHA(SHAConfig(channels=8), make_rng(2))
        per_channel = rng.standard_normal(8).astype(np.float32)
        x = Tensor(np.broadcast_to(per_channel.reshape(1, 8, 1, 1), (1, 8, 6, 7)).copy())
        _, state = sha.attend(x)
        a = state.attn.data
        spread = a.max(axis=(2, 3)) - a.min(axis=(2, 3))
        assert spread.max() < 1e-6

    def test_matches_straight_line_reference(self, rng):
        sha = SHA(SHAConfig(channels=8), make_rng(3))
        x = rng.standard_normal((1, 8, 6, 6))
        out, state = sha.attend(Tensor(x))
        ref_out, ref_attn = sha_reference(x, sha)
        np.testing.assert_allclose(out.data, ref_out, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(state.attn.data, ref_attn, rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("maxpool,shuffle,kernel", [
        (False, False, 3), (True, False, 3), (True, True, 3), (True, True, 1),
    ])
    def test_reference_across_configurations(self, maxpool, shuffle, kernel, rng):
        cfg = SHAConfig(channels=8, enable_maxpool=maxpool, enable_shuffle=shuffle,
                        restore_kernel=kernel)
        sha = SHA(cfg, make_rng(4))
        x = rng.standard_normal((2, 8, 5, 7))
        out, _ = sha.attend(Tensor(x))
        ref_out, _ = sha_reference(x, sha)
        np.testing.assert_allclose(out.data, ref_out, rtol=1e-6, atol=1e-9)

    def test_attention_strictly_in_unit_interval(self, rng):
        sha = SHA(SHAConfig(channels=16), make_rng(5))
        x = Tensor(rng.standard_normal((2, 16, 9, 4)).astype(np.float32))
        _, state = sha.attend(x)
        assert state.attn.data.min() > 0.0
        assert state.attn.data.max() < 1.0

    def test_output_is_gated_input(self, rng):
        sha = SHA(SHAConfig(channels=8), make_rng(6))
        x = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        out, state = sha.attend(x)
        np.testing.assert_array_equal(out.data, state.attn.data * x.data)
        assert (np.abs(out.data) <= np.abs(x.data)).all()

    def test_state_pools_sum_avg_and_max(self, rng):
        x = rng.standard_normal((1, 8, 4, 5))
        _, with_max = SHA(SHAConfig(channels=8), make_rng(7)).attend(Tensor(x))
        np.testing.assert_allclose(with_max.v_h.data, x.mean(3) + x.max(3), rtol=1e-6)
        cfg = SHAConfig(channels=8, enable_maxpool=False)
        _, avg_only = SHA(cfg, make_rng(7)).attend(Tensor(x))
        np.testing.assert_allclose(avg_only.v_h.data, x.mean(3), rtol=1e-6)

    def test_ablation_configurations_differ(self, rng):
        x = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        variants = [
            SHAConfig(channels=8, enable_maxpool=False, enable_shuffle=False),
            SHAConfig(channels=8, enable_maxpool=True, enable_shuffle=False),
            SHAConfig(channels=8, enable_maxpool=True, enable_shuffle=True),
            SHAConfig(channels=8, restore_kernel=1),
        ]
        outputs = [SHA(cfg, make_rng(8)).attend(x)[0].data for cfg in variants]
        for i in range(len(outputs)):
            for j in range(i + 1, len(outputs)):
                assert np.abs(outputs[i] - outputs[j]).max() > 1e-6

    def test_spatial_transpose_symmetry(self, rng):
        sha = SHA(SHAConfig(channels=8), make_rng(9))
        x = rng.standard_normal((1, 8, 5, 7))
        _, state = sha.attend(Tensor(x))
        _, state_t = sha.attend(Tensor(np.ascontiguousarray(x.transpose(0, 1, 3, 2))))
        np.testing.assert_allclose(state_t.attn.data,
                                   state.attn.data.transpose(0, 1, 3, 2), rtol=1e-5)

    def test_channel_mismatch_raises(self, rng):
        sha = SHA(SHAConfig(channels=8), make_rng(10))
        with pytest.raises(ShapeMismatch):
            sha.attend(Tensor(np.zeros((1, 4, 5, 5))))


class TestSHAParamCount:
    def test_reference_config(self):
        assert sha_param_count(SHAConfig(channels=64)) == 4176  # 1040 + 3136

    def test_kernel_one(self):
        assert sha_param_count(SHAConfig(channels=64, restore_kernel=1)) == 2128

    def test_degenerate_channels_equal_reduction(self):
        cfg = SHAConfig(channels=4, reduction=4)
        assert sha_param_count(cfg) == (4 * 1 + 1) + (3 * 1 * 4 + 4)

    @pytest.mark.parametrize("channels,reduction,kernel", [
        (8, 4, 3), (16, 4, 1), (64, 4, 3), (64, 16, 3), (12, 2, 5),
    ])
    def test_analytic_count_equals_allocation(self, channels, reduction, kernel):
        cfg = SHAConfig(channels=channels, reduction=reduction, restore_kernel=kernel)
        sha = SHA(cfg, make_rng(0))
        assert sha.param_count() == sha_param_count(cfg)


class TestSE:
    def test_param_count_at_64_channels(self):
        assert SE(64, make_rng(0)).param_count() == 512

    def test_constant_input_uniform_scale(self, rng):
        se = SE(32, make_rng(1))
        x = Tensor(np.broadcast_to(rng.standard_normal((1, 32, 1, 1)), (1, 32, 6, 6)).astype(np.float32).copy())
        out = se(x)
        ratio = out.data / x.data
        assert (ratio.max(axis=(2, 3)) - ratio.min(axis=(2, 3))).max() < 1e-6

    def test_zero_weights_halve_input(self, rng):
        se = SE(32, make_rng(2)).zero_weights()
        x = Tensor(rng.standard_normal((2, 32, 4, 4)).astype(np.float32))
        np.testing.assert_allclose(se(x).data, 0.5 * x.data, rtol=1e-6)


class TestFA:
    def test_zero_weights_quarter_input(self, rng):
        fa = FA(16, make_rng(3)).zero_weights()
        x = Tensor(rng.standard_normal((1, 16, 5, 5)).astype(np.float32))
        np.testing.assert_allclose(fa(x).data, 0.25 * x.data, rtol=1e-6)

    def test_shape_preserved(self, rng):
        fa = FA(16, make_rng(4))
        x = Tensor(rng.standard_normal((2, 16, 7, 3)).astype(np.float32))
        assert fa(x).shape == x.shape

    def test_matches_unfused_sequential_oracle(self, rng):
        fa = FA(16, make_rng(5))
        x = rng.standard_normal((1, 16, 6, 6))

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        s = x.mean(axis=(2, 3), keepdims=True)
        w1, b1 = fa.ca1.weight.data[:, :, 0, 0], fa.ca1.bias.data
        w2, b2 = fa.ca2.weight.data[:, :, 0, 0], fa.ca2.bias.data
        hidden = np.maximum(np.einsum("oc,nchw->nohw", w1, s) + b1.reshape(1, -1, 1, 1), 0)
        gate = sig(np.einsum("oc,nchw->nohw", w2, hidden) + b2.reshape(1, -1, 1, 1))
        y = x * gate
        w3, b3 = fa.pa1.weight.data[:, :, 0, 0], fa.pa1.bias.data
        w4, b4 = fa.pa2.weight.data[:, :, 0, 0], fa.pa2.bias.data
        hidden = np.maximum(np.einsum("oc,nchw->nohw", w3, y) + b3.reshape(1, -1, 1, 1), 0)
        gate = sig(np.einsum("oc,nchw->nohw", w4, hidden) + b4.reshape(1, -1, 1, 1))
        expected = y * gate

        np.testing.assert_allclose(fa(Tensor(x)).data, expected, rtol=1e-6, atol=1e-9)

    def test_param_count_matches_published_figure(self):
        # channel + pixel attention with reduction 8 and biases: 1.625K at C=64
        assert FA(64, make_rng(6)).param_count() == 1625
