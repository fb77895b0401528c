from fractions import Fraction

import numpy as np
import pytest

from common.errors import ConfigError, ShapeError, SizeError
from motionforge.tensor import Tensor
from motionforge.vla import (
    GroupWeights,
    ShiftConfig,
    channel_shift,
    group_weighted_sum,
    shift_backward,
    vla_forward,
    vla_trace,
)

THIRD = ShiftConfig(Fraction(1, 3))


def segment_features(rng, n, channels=8, height=4, width=5):
    return [Tensor(rng.standard_normal((channels, height, width)), "CHW") for _ in range(n)]


class TestShiftConfig:
    def test_default_fraction(self):
        cfg = ShiftConfig()
        assert cfg.group_fraction == Fraction(1, 4)
        assert cfg.fold(32) == 8

    def test_fold_floor(self):
        assert ShiftConfig.parse("1/4").fold(10) == 2

    @pytest.mark.parametrize("raw", ["0", "1/2", "-1/4", "abc"])
    def test_invalid_fraction(self, raw):
        with pytest.raises(ConfigError):
            ShiftConfig.parse(raw)

    def test_too_few_channels(self):
        with pytest.raises(ConfigError, match="C >= 4"):
            ShiftConfig().fold(3)

    def test_only_zero_fill(self):
        with pytest.raises(ConfigError):
            ShiftConfig(boundary="circular")


class TestChannelShift:
    def test_hand_example(self):
        a, b, c, d, e, f, g, h, i = range(1, 10)
        x = Tensor(np.array([[a, b, c], [d, e, f], [g, h, i]], dtype=np.float32), "CT")
        out = channel_shift(x, THIRD).data
        assert out.tolist() == [[0, a, b], [e, f, 0], [g, h, i]]

    def test_single_time_step(self, rng):
        x = Tensor(rng.standard_normal((8, 1)), "CT")
        out = channel_shift(x, ShiftConfig()).data
        assert not out[:4].any()
        assert np.array_equal(out[4:], x.data[4:])

    def test_inverse_reconstructs_interior(self, rng):
        x = rng.standard_normal((8, 6)).astype(np.float32)
        shifted = channel_shift(Tensor(x, "CT"), ShiftConfig()).data
        back = shift_backward(shifted, 2)
        assert np.array_equal(back[:4, 1:5], x[:4, 1:5])

    def test_residual_group_untouched(self, rng):
        x = Tensor(rng.standard_normal((12, 5)), "CT")
        out = channel_shift(x, ShiftConfig()).data
        assert out.shape == x.shape
        assert np.array_equal(out[6:], x.data[6:])

    def test_rank_checked(self):
        with pytest.raises(ShapeError):
            channel_shift(Tensor(np.ones(4), "C"), ShiftConfig())


class TestGroupWeightedSum:
    def test_unit_weights_identity(self, rng):
        x = Tensor(rng.standard_normal((8, 3)), "CT")
        assert np.array_equal(group_weighted_sum(x, GroupWeights(), ShiftConfig()).data, x.data)

    def test_zero_residual_weight(self, rng):
        x = Tensor(rng.standard_normal((6, 3)), "CT")
        out = group_weighted_sum(x, GroupWeights(1.0, 1.0, 0.0), THIRD).data
        assert not out[4:].any()
        assert np.array_equal(out[:4], x.data[:4])

    def test_group_scaling(self):
        x = Tensor(np.ones((8, 2)), "CT")
        out = group_weighted_sum(x, GroupWeights(2.0, 3.0, 0.5), ShiftConfig()).data
        assert out[:, 0].tolist() == [2, 2, 3, 3, 0.5, 0.5, 0.5, 0.5]

    def test_non_finite_weight(self):
        with pytest.raises(ConfigError):
            GroupWeights(float("nan"), 1.0, 1.0)


class TestVlaForward:
    def test_two_constant_segments(self):
        features = [Tensor(np.full((8, 3, 3), 0.7), "CHW")] * 2
        out = vla_forward(features, ShiftConfig(), GroupWeights(), (2, 2))
        assert out.shape == (8, 1)
        assert not out.data[:4].any()
        np.testing.assert_array_equal(out.data[4:, 0], np.float32(0.7))

    def test_four_identical_segments(self, rng):
        feature = segment_features(rng, 1)[0]
        out = vla_forward([feature] * 4, ShiftConfig(), GroupWeights(), (2, 2)).data
        assert out.shape == (8, 2)
        assert np.array_equal(out[4:, 0], out[4:, 1])

    @pytest.mark.parametrize("n", [2, 4])
    def test_matches_hand_traced_pipeline(self, rng, n):
        features = segment_features(rng, n)
        weights = GroupWeights(0.5, -1.5, 2.0)
        out = vla_forward(features, ShiftConfig(), weights, (2, 2)).data

        pooled = np.stack([f.data.max(axis=(1, 2)) for f in features], axis=1)
        t_out = n // 2
        temporal = np.stack([pooled[:, 2 * j:2 * j + 2].max(axis=1) for j in range(t_out)], axis=1)
        expected = np.zeros_like(temporal)
        for t in range(t_out):
            if t > 0:
                expected[:2, t] = 0.5 * temporal[:2, t - 1]
            if t < t_out - 1:
                expected[2:4, t] = -1.5 * temporal[2:4, t + 1]
            expected[4:, t] = 2.0 * temporal[4:, t]
        np.testing.assert_allclose(out, expected, rtol=1e-6)

    def test_spatial_shuffle_invariance(self, rng):
        for _ in range(100):
            features = segment_features(rng, 4)
            shuffled = []
            for feature in features:
                flat = feature.data.reshape(8, -1)
                shuffled.append(Tensor(flat[:, rng.permutation(flat.shape[1])].reshape(feature.shape), "CHW"))
            a = vla_forward(features, ShiftConfig(), GroupWeights(), (2, 2)).data
            b = vla_forward(shuffled, ShiftConfig(), GroupWeights(), (2, 2)).data
            assert np.array_equal(a, b)

    def test_monotone_pooling(self, rng):
        for _ in range(50):
            features = segment_features(rng, 4)
            before = vla_trace(features, ShiftConfig(), GroupWeights()).pooled.data
            k = int(rng.integers(4))
            bumped = features[k].data.copy()
            index = tuple(int(rng.integers(s)) for s in bumped.shape)
            bumped[index] += abs(float(rng.standard_normal())) + 0.01
            features[k] = Tensor(bumped, "CHW")
            after = vla_trace(features, ShiftConfig(), GroupWeights()).pooled.data
            assert (after >= before).all()

    def test_residual_only_weights(self, rng):
        features = segment_features(rng, 2)
        perturbed = [Tensor(np.concatenate([f.data[:4] + 5.0, f.data[4:]]), "CHW") for f in features]
        weights = GroupWeights(0.0, 0.0, 1.0)
        a = vla_forward(features, ShiftConfig(), weights).data
        b = vla_forward(perturbed, ShiftConfig(), weights).data
        assert np.array_equal(a, b)

    def test_too_few_segments_for_pool(self, rng):
        with pytest.raises(SizeError):
            vla_forward(segment_features(rng, 1), ShiftConfig(), GroupWeights(), (2, 2))

    def test_mismatched_segments(self, rng):
        features = segment_features(rng, 1) + segment_features(rng, 1, height=3)
        with pytest.raises(ShapeError):
            vla_forward(features, ShiftConfig(), GroupWeights())

    def test_trace_layouts(self, rng):
        trace = vla_trace(segment_features(rng, 4), ShiftConfig(), GroupWeights())
        assert trace.stacked.shape == (4, 8, 4, 5)
        assert trace.pooled_spatial.shape == (8, 4)
        assert trace.pooled.shape == (8, 2)
        assert trace.output.layout == "CT"
