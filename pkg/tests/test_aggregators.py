import numpy as np
import pytest

from tubekit.aggregators import (
    ASPP_WEIGHT_SHAPES,
    CHANNELS,
    Conv1dSpec,
    aspp_forward,
    conv1d,
    random_weights,
    tcn_forward,
    temporal_max_pool,
)

from oracles import composed_aspp, composed_tcn, naive_conv1d


class TestConv1d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(81)
        x = rng.standard_normal((6, 4))
        w = np.eye(4)[:, :, None]
        spec = Conv1dSpec(4, 4, 1, has_bias=False)
        assert np.allclose(conv1d(x, spec, w), x, atol=1e-12)

    def test_hand_case_ones(self):
        x = np.ones((5, 1))
        w = np.ones((1, 1, 3))
        spec = Conv1dSpec(1, 1, 3, padding=1, has_bias=False)
        assert np.allclose(conv1d(x, spec, w).ravel(), [2, 3, 3, 3, 2], atol=1e-12)

    def test_length_arithmetic(self):
        x = np.zeros((10, 2))
        for k, d, p in ((3, 2, 2), (3, 1, 1), (3, 3, 3), (3, 5, 5), (1, 1, 0)):
            spec = Conv1dSpec(2, 3, k, padding=p, dilation=d, has_bias=False)
            w = np.zeros((3, 2, k))
            out = conv1d(x, spec, w)
            assert out.shape == (10 + 2 * p - d * (k - 1), 3)

    def test_too_short_input(self):
        spec = Conv1dSpec(1, 1, 5, dilation=3, has_bias=False)
        with pytest.raises(ValueError):
            conv1d(np.zeros((2, 1)), spec, np.zeros((1, 1, 5)))

    def test_shape_mismatch(self):
        spec = Conv1dSpec(2, 3, 3)
        with pytest.raises(ValueError):
            conv1d(np.zeros((5, 2)), spec, np.zeros((3, 2, 5)), np.zeros(3))
        with pytest.raises(ValueError):
            conv1d(np.zeros((5, 4)), spec, np.zeros((3, 2, 3)), np.zeros(3))
        with pytest.raises(ValueError):
            conv1d(np.zeros((5, 2)), spec, np.zeros((3, 2, 3)))  # missing bias

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(82)
        for _ in range(100):
            cin = int(rng.integers(1, 5))
            cout = int(rng.integers(1, 5))
            k = int(rng.choice([1, 3, 5]))
            d = int(rng.choice([1, 2, 3, 5]))
            p = int(rng.integers(0, 6))
            t_min = max(1, d * (k - 1) + 1 - 2 * p)
            t = int(rng.integers(t_min, t_min + 12))
            x = rng.standard_normal((t, cin))
            w = rng.standard_normal((cout, cin, k))
            b = rng.standard_normal(cout)
            spec = Conv1dSpec(cin, cout, k, padding=p, dilation=d)
            out = conv1d(x, spec, w, b)
            ref = naive_conv1d(x, w, b, padding=p, dilation=d)
            assert np.allclose(out, ref, atol=1e-6)

    def test_linearity(self):
        rng = np.random.default_rng(83)
        spec = Conv1dSpec(3, 2, 3, padding=2, dilation=2, has_bias=False)
        x1 = rng.standard_normal((8, 3))
        x2 = rng.standard_normal((8, 3))
        w1 = rng.standard_normal((2, 3, 3))
        w2 = rng.standard_normal((2, 3, 3))
        lhs = conv1d(0.5 * x1 + 2.0 * x2, spec, w1)
        rhs = 0.5 * conv1d(x1, spec, w1) + 2.0 * conv1d(x2, spec, w1)
        assert np.allclose(lhs, rhs, atol=1e-9)
        lhs_w = conv1d(x1, spec, 0.5 * w1 + 2.0 * w2)
        rhs_w = 0.5 * conv1d(x1, spec, w1) + 2.0 * conv1d(x1, spec, w2)
        assert np.allclose(lhs_w, rhs_w, atol=1e-9)


class TestTemporalMaxPool:
    def test_constant(self):
        assert np.array_equal(temporal_max_pool(np.full((5, 3), 2.5)),
                              np.full((1, 3), 2.5))

    def test_spike(self):
        x = np.zeros((4, 2))
        x[2, 0] = 7.0
        x[0, 1] = -1.0
        x[1:, 1] = -3.0
        out = temporal_max_pool(x)
        assert out[0, 0] == 7.0
        assert out[0, 1] == -1.0

    def test_permutation_invariant(self):
        rng = np.random.default_rng(84)
        x = rng.standard_normal((7, 3))
        perm = rng.permutation(7)
        assert np.array_equal(temporal_max_pool(x), temporal_max_pool(x[perm]))

    def test_concat_property(self):
        rng = np.random.default_rng(85)
        x = rng.standard_normal((6, 4))
        extra = rng.standard_normal((1, 4))
        lhs = temporal_max_pool(np.concatenate([x, extra], axis=0))
        rhs = np.maximum(temporal_max_pool(x), extra)
        assert np.array_equal(lhs, rhs)

    def test_empty_error(self):
        with pytest.raises(ValueError):
            temporal_max_pool(np.zeros((0, 3)))


class TestTcnForward:
    def test_zero_weights_zero_output(self):
        weights = {"tcn.weight": np.zeros((CHANNELS, CHANNELS, 3), np.float32),
                   "tcn.bias": np.zeros(CHANNELS, np.float32)}
        out = tcn_forward(np.random.default_rng(86).standard_normal((1, CHANNELS)), weights)
        assert out.shape == (1, CHANNELS)
        assert np.array_equal(out, np.zeros((1, CHANNELS), np.float32))

    def test_center_tap_identity_equals_maxpool(self):
        w = np.zeros((CHANNELS, CHANNELS, 3), np.float32)
        w[np.arange(CHANNELS), np.arange(CHANNELS), 1] = 1.0
        weights = {"tcn.weight": w, "tcn.bias": np.zeros(CHANNELS, np.float32)}
        rng = np.random.default_rng(87)
        x = rng.standard_normal((9, CHANNELS))
        out = tcn_forward(x, weights)
        ref = temporal_max_pool(x)
        assert np.allclose(out, ref, atol=1e-6)

    def test_length_preserved_before_pool(self):
        # K=3, dilation 2, padding 2 keeps T' = T for any T
        for t in (1, 2, 32):
            spec = Conv1dSpec(4, 4, 3, padding=2, dilation=2, has_bias=False)
            out = conv1d(np.zeros((t, 4)), spec, np.zeros((4, 4, 3)))
            assert out.shape[0] == t

    def test_against_composed_oracle(self):
        rng = np.random.default_rng(88)
        weights = random_weights("tcn", seed=3)
        x = rng.standard_normal((6, CHANNELS))
        out = tcn_forward(x, weights)
        ref = composed_tcn(x, weights)
        assert np.allclose(out, ref, atol=1e-5)

    def test_missing_weights(self):
        with pytest.raises(ValueError, match="tcn.weight"):
            tcn_forward(np.zeros((3, CHANNELS)), {})

    def test_wrong_channel_count(self):
        with pytest.raises(ValueError):
            tcn_forward(np.zeros((3, 64)), random_weights("tcn"))


class TestAsppForward:
    def test_zero_input_zero_biases(self):
        weights = {name: np.zeros(shape, np.float32)
                   for name, shape in ASPP_WEIGHT_SHAPES.items()}
        out = aspp_forward(np.zeros((4, CHANNELS)), weights)
        assert out.shape == (1, CHANNELS)
        assert np.array_equal(out, np.zeros((1, CHANNELS), np.float32))

    @pytest.mark.parametrize("t", [1, 2, 32])
    def test_shapes_across_lengths(self, t):
        weights = random_weights("aspp", seed=5)
        rng = np.random.default_rng(89 + t)
        out = aspp_forward(rng.standard_normal((t, CHANNELS)), weights)
        assert out.shape == (1, CHANNELS)

    def test_output_nonnegative(self):
        weights = random_weights("aspp", seed=6)
        rng = np.random.default_rng(90)
        out = aspp_forward(rng.standard_normal((8, CHANNELS)), weights)
        assert np.all(out >= 0.0)

    def test_against_composed_oracle(self):
        rng = np.random.default_rng(91)
        weights = random_weights("aspp", seed=7)
        x = rng.standard_normal((3, CHANNELS))
        out = aspp_forward(x, weights)
        ref = composed_aspp(x, weights)
        assert np.allclose(out, ref, atol=1e-5)

    def test_missing_weight_names_offender(self):
        weights = random_weights("aspp", seed=8)
        del weights["aspp.convs.3.weight"]
        with pytest.raises(ValueError, match="aspp.convs.3.weight"):
            aspp_forward(np.zeros((4, CHANNELS)), weights)

    def test_misshaped_weight_names_offender(self):
        weights = random_weights("aspp", seed=9)
        weights["aspp.project.weight"] = np.zeros((1, 1, 1), np.float32)
        with pytest.raises(ValueError, match="aspp.project.weight"):
            aspp_forward(np.zeros((4, CHANNELS)), weights)


class TestDeterminismAndWeights:
    def test_kernels_bitwise_deterministic(self):
        rng = np.random.default_rng(92)
        x = rng.standard_normal((5, CHANNELS))
        tw = random_weights("tcn", seed=1)
        aw = random_weights("aspp", seed=1)
        assert np.array_equal(tcn_forward(x, tw), tcn_forward(x, tw))
        assert np.array_equal(aspp_forward(x, aw), aspp_forward(x, aw))
        assert np.array_equal(temporal_max_pool(x), temporal_max_pool(x))

    def test_random_weights_seeded_and_bounded(self):
        a = random_weights("tcn", seed=11)
        b = random_weights("tcn", seed=11)
        c = random_weights("tcn", seed=12)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert any(not np.array_equal(a[k], c[k]) for k in a)
        bound = 1.0 / np.sqrt(CHANNELS * 3)
        assert np.abs(a["tcn.weight"]).max() <= bound
        assert np.abs(a["tcn.bias"]).max() <= bound

    def test_random_weights_cover_all_names(self):
        w = random_weights("aspp", seed=13)
        assert set(w) == set(ASPP_WEIGHT_SHAPES)
        assert random_weights("maxpool") == {}
        with pytest.raises(ValueError):
            random_weights("swin")
