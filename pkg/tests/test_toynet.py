import numpy as np
import pytest

from common.errors import ConfigError, ShapeError, SizeError
from conftest import random_clip
from motionforge.sampler import EVAL, SegmentPlan, plan_segments
from motionforge.synthetic import object_mask, render_clip
from motionforge.toynet.layers import SoftmaxCrossEntropy
from motionforge.toynet.model import (
    FusionConfig,
    ToyNet,
    VlaSpec,
    appearance_inputs,
    appearance_trace,
    forward_appearance_branch,
    forward_motion_branch,
    fuse,
    motion_inputs,
    pooled_length,
    transfer_init,
)
from motionforge.vla import GroupWeights


@pytest.fixture
def clip(rng):
    return random_clip(rng, frames=20, height=16, width=16)


class TestToyNet:
    def test_parameter_count_plain(self):
        # conv1 12*16*9+16, conv2 16*32*9+32, head 32*4+4
        assert ToyNet(12, 4, 8).parameter_count() == 1744 + 4640 + 132

    def test_parameter_count_with_vla(self):
        # head sees 32 channels x 2 pooled steps; the gate adds three scalars
        net = ToyNet(12, 4, 4, VlaSpec())
        assert net.parameter_count() == 1744 + 4640 + (64 * 4 + 4) + 3
        assert net.parameter_count() == ToyNet(12, 4, 4, VlaSpec()).parameter_count()

    def test_features_shape(self, rng):
        net = ToyNet(3, 2)
        assert net.features(rng.standard_normal((2, 3, 32, 32)).astype(np.float32)).shape == (2, 32, 8, 8)

    def test_head_init_scales_with_fan_in(self):
        weight = ToyNet(12, 4, 4, VlaSpec()).layers["head"].params["weight"]
        bound = 1 / np.sqrt(64)
        assert np.abs(weight).max() <= bound + 1e-7
        assert weight.std() > 0.5 * bound / np.sqrt(3)

    def test_stem_gradient_follows_head_scale(self, rng):
        x = rng.random((8, 12, 16, 16)).astype(np.float32)

        def conv1_grad_norm(net):
            criterion = SoftmaxCrossEntropy(np.arange(4))
            criterion.forward(net.forward(x, 2))
            net.backward(criterion.backward())
            return np.linalg.norm(net.layers["conv1"].grads["weight"])

        narrow = ToyNet(12, 4, 2)
        narrow.layers["head"].params["weight"] = (rng.standard_normal((4, 32)) * 0.01).astype(np.float32)
        assert conv1_grad_norm(ToyNet(12, 4, 2)) >= 3 * conv1_grad_norm(narrow)

    def test_seeded_initialisation(self):
        a, b = ToyNet(6, 3, seed=5).state_dict(), ToyNet(6, 3, seed=5).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_wrong_input_channels(self, rng):
        with pytest.raises(ShapeError):
            ToyNet(6, 3).forward(rng.standard_normal((1, 3, 8, 8)).astype(np.float32))

    def test_vla_net_fixed_segment_count(self, rng):
        net = ToyNet(3, 2, 4, VlaSpec())
        with pytest.raises(ConfigError):
            net.forward(rng.standard_normal((2, 3, 8, 8)).astype(np.float32), n_segments=2)

    def test_state_dict_round_trip(self):
        source, target = ToyNet(6, 3, seed=1), ToyNet(6, 3, seed=2)
        target.load_state_dict(source.state_dict())
        for name, value in source.state_dict().items():
            assert np.array_equal(target.state_dict()[name], value)

    def test_load_rejects_foreign_state(self):
        with pytest.raises(ConfigError):
            ToyNet(6, 3).load_state_dict(ToyNet(6, 3, 4, VlaSpec()).state_dict())

    def test_description_rebuilds_architecture(self):
        net = ToyNet(15, 8, 4, VlaSpec(), seed=3)
        rebuilt = ToyNet.from_description(net.describe())
        assert rebuilt.describe() == net.describe()

    def test_pooled_length(self):
        assert pooled_length(4, 2, 2) == 2
        assert pooled_length(5, 2, 2) == 2
        with pytest.raises(SizeError, match="temporal_maxpool1d"):
            pooled_length(1, 2, 2)


class TestMotionBranch:
    def test_single_segment_equals_its_logits(self, clip):
        plan = plan_segments(len(clip), 1, 5, EVAL)
        net = ToyNet(12, 4)
        direct = net.forward(motion_inputs(clip, plan), 1)[0]
        assert np.array_equal(forward_motion_branch(clip, plan, net), direct)

    def test_duplicated_segments_leave_mean_unchanged(self, clip):
        net = ToyNet(12, 4, 2)
        single = forward_motion_branch(clip, SegmentPlan(1, 5, (3,), EVAL, None, len(clip)), net)
        doubled = forward_motion_branch(clip, SegmentPlan(2, 5, (3, 3), EVAL, None, len(clip)), net)
        np.testing.assert_allclose(doubled, single, rtol=1e-6, atol=1e-7)

    def test_segment_order_irrelevant(self, clip):
        plan = plan_segments(len(clip), 3, 5, EVAL)
        net = ToyNet(12, 4, 3)
        x = motion_inputs(clip, plan)
        forward = net.forward(x, 3)
        backward = net.forward(x[::-1].copy(), 3)
        np.testing.assert_allclose(backward, forward, rtol=1e-6, atol=1e-7)

    def test_channel_mismatch(self, clip):
        with pytest.raises(ConfigError, match="motion stack"):
            forward_motion_branch(clip, plan_segments(len(clip), 2, 4, EVAL), ToyNet(12, 4, 2))

    def test_vla_not_allowed(self, clip):
        with pytest.raises(ConfigError):
            forward_motion_branch(clip, plan_segments(len(clip), 2, 5, EVAL), ToyNet(12, 4, 2, VlaSpec()))

    def test_rgbdiff_modality(self, clip):
        plan = plan_segments(len(clip), 2, 5, EVAL)
        assert forward_motion_branch(clip, plan, ToyNet(12, 4, 2), modality="rgbdiff").shape == (4,)


class TestAppearanceBranch:
    def test_scores_shape(self, clip):
        plan = plan_segments(len(clip), 4, 4, EVAL)
        assert forward_appearance_branch(clip, plan, ToyNet(12, 5, 4, VlaSpec())).shape == (5,)

    def test_requires_vla(self, clip):
        with pytest.raises(ConfigError, match="VLA"):
            forward_appearance_branch(clip, plan_segments(len(clip), 4, 4, EVAL), ToyNet(12, 5, 4))

    def test_channel_mismatch(self, clip):
        with pytest.raises(ConfigError, match="RGB-Super"):
            forward_appearance_branch(clip, plan_segments(len(clip), 4, 5, EVAL), ToyNet(12, 5, 4, VlaSpec()))

    def test_fewer_segments_than_pool_kernel(self):
        with pytest.raises(SizeError, match="temporal_maxpool1d"):
            ToyNet(12, 4, 1, VlaSpec())

    def test_trace_pools_global_max(self, clip):
        net = ToyNet(12, 4, 4, VlaSpec())
        features, trace = appearance_trace(clip, plan_segments(len(clip), 4, 4, EVAL), net)
        expected = np.stack([f.data.max(axis=(1, 2)) for f in features], axis=1)
        assert np.array_equal(trace.pooled_spatial.data, expected)

    def test_residual_only_gate(self, clip):
        net = ToyNet(12, 4, 2, VlaSpec(weights=GroupWeights(0.0, 0.0, 1.0)))
        features, trace = appearance_trace(clip, plan_segments(len(clip), 2, 4, EVAL), net)
        assert trace.output.shape == (32, 1)
        assert not trace.output.data[:16].any()
        np.testing.assert_array_equal(trace.output.data[16:], trace.pooled.data[16:])

    def test_residual_only_gate_ignores_shifted_channels(self, clip):
        net = ToyNet(12, 4, 2, VlaSpec(weights=GroupWeights(0.0, 0.0, 1.0)))
        plan = plan_segments(len(clip), 2, 4, EVAL)
        x = appearance_inputs(clip, plan)
        features = net.features(x)
        bumped = features.copy()
        bumped[:, :16] += 3.0
        top = [net.layers[name] for name in ("spatial", "temporal", "shift", "gate", "flatten", "head")]

        def head(maps):
            for layer in top:
                maps = layer.forward(maps)
            return maps

        assert np.array_equal(head(features), head(bumped))


class TestFuse:
    def test_motion_weight_zero(self, rng):
        scores_a = rng.standard_normal((6, 4))
        scores_m = rng.standard_normal((6, 4))
        prediction = fuse(scores_a, scores_m, FusionConfig(1.0, 0.0))
        assert np.array_equal(prediction.label, scores_a.argmax(axis=1))

    def test_identical_branches(self, rng):
        scores = rng.standard_normal(5)
        for alphas in [(1.0, 1.0), (0.2, 3.0), (7.0, 0.5)]:
            assert fuse(scores, scores, FusionConfig(*alphas)).label == int(scores.argmax())

    def test_positive_rescaling(self, rng):
        scores_a, scores_m = rng.standard_normal((8, 3)), rng.standard_normal((8, 3))
        base = fuse(scores_a, scores_m, FusionConfig(0.4, 1.3)).label
        scaled = fuse(scores_a, scores_m, FusionConfig(0.4 * 5, 1.3 * 5)).label
        assert np.array_equal(base, scaled)

    def test_probabilities_sum_to_alpha_total(self, rng):
        prediction = fuse(rng.standard_normal((2, 4)), rng.standard_normal((2, 4)), FusionConfig(0.5, 2.0))
        np.testing.assert_allclose(prediction.probabilities.sum(axis=1), 2.5)

    def test_class_count_mismatch(self):
        with pytest.raises(ShapeError):
            fuse(np.zeros(4), np.zeros(5))

    @pytest.mark.parametrize("alphas", [(0.0, 0.0), (-1.0, 1.0)])
    def test_invalid_weights(self, alphas):
        with pytest.raises(ConfigError):
            FusionConfig(*alphas)


class TestTransferInit:
    def test_conv_weights_copied_bitwise(self):
        motion = ToyNet(12, 4, 8, seed=0)
        appearance = ToyNet(12, 4, 4, VlaSpec(), seed=1)
        net = transfer_init(appearance, motion)
        for name in ("conv1", "conv2"):
            for key in ("weight", "bias"):
                assert net.layers[name].params[key].tobytes() == motion.layers[name].params[key].tobytes()
        assert net.vla == appearance.vla
        assert net.group_weights() == GroupWeights()

    def test_conv_activations_identical(self, rng):
        motion = ToyNet(15, 4, 8, seed=0)
        net = transfer_init(ToyNet(15, 4, 2, VlaSpec(), seed=1), motion)
        x = rng.random((3, 15, 32, 32), dtype=np.float32)
        assert net.features(x).tobytes() == motion.features(x).tobytes()

    def test_fifteen_channels_on_both_sides(self):
        # T_a=5 RGB frames against a 15-channel motion stack
        motion = ToyNet(3 * 5, 4, 8)
        appearance = ToyNet(3 * 5, 4, 4, VlaSpec())
        assert transfer_init(appearance, motion).in_channels == 15

    def test_constraint_named_on_mismatch(self):
        with pytest.raises(ConfigError, match=r"3\*T_a == C\*T_m"):
            transfer_init(ToyNet(15, 4, 4, VlaSpec()), ToyNet(12, 4, 8))

    def test_head_freshly_initialised(self):
        appearance = ToyNet(12, 4, 4, VlaSpec(), seed=1)
        net = transfer_init(appearance, ToyNet(12, 4, 8, seed=0))
        assert not np.array_equal(net.layers["head"].params["weight"], appearance.layers["head"].params["weight"])


class TestSyntheticClips:
    def test_disc_smaller_than_square(self):
        assert object_mask("disc", 9).sum() < object_mask("square", 9).sum()

    def test_toroidal_translation(self):
        rendered = render_clip("square", "right", np.random.default_rng(0), size=16, frames=6, speed=2, textured=False)
        frames = rendered.clip.as_array()
        for t in range(1, 6):
            assert np.array_equal(frames[t], np.roll(frames[t - 1], 2, axis=-1))
