import numpy as np
import pytest

from common.errors import ArityError, ConfigError, NumericError, RangeError, ShapeError
from conftest import random_frame
from motionforge.motion_enhance import (
    ADMISSIBLE_OFFSETS,
    MeConfig,
    displacement_search_oracle,
    extract_segments,
    me_stack_map_shape,
    motion_enhance,
    rgbdiff,
    verify_random_pairs,
)
from motionforge.tensor import Tensor, maxpool2d_3x3, subtract


def per_pixel_oracle(f_next: np.ndarray, f_prev: np.ndarray) -> np.ndarray:
    """Pixel-by-pixel displacement search, written out in loops."""
    channels, height, width = f_next.shape
    out = np.empty_like(f_next)
    for c in range(channels):
        for y in range(height):
            for x in range(width):
                best = -np.inf
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        if abs(dx) + abs(dy) > 2:
                            continue
                        yy = min(max(y + dy, 0), height - 1)
                        xx = min(max(x + dx, 0), width - 1)
                        best = max(best, f_next[c, yy, xx])
                out[c, y, x] = best - f_prev[c, y, x]
    return out


class TestRgbdiff:
    def test_identical_frames(self, rng):
        frame = random_frame(rng)
        assert not rgbdiff([frame, frame]).data.any()

    def test_constant_offset(self):
        a = Tensor(np.full((3, 4, 4), 0.25), "CHW")
        b = Tensor(np.full((3, 4, 4), 0.75), "CHW")
        assert np.array_equal(rgbdiff([a, b]).data, np.full((3, 4, 4), 0.5, dtype=np.float32))

    def test_stack_shape(self, rng):
        assert rgbdiff([random_frame(rng) for _ in range(5)]).shape == (12, 8, 8)

    def test_needs_two_frames(self, rng):
        with pytest.raises(ArityError):
            rgbdiff([random_frame(rng)])


class TestMotionEnhance:
    def test_static_frames_give_morphological_gradient(self, rng):
        frame = random_frame(rng, 10, 10)
        features = motion_enhance([frame, frame, frame])
        gradient = subtract(maxpool2d_3x3(frame), frame).data
        assert features.t_m == 2
        assert np.array_equal(features.tensor.data[:3], gradient)
        assert np.array_equal(features.tensor.data[3:], gradient)
        assert (gradient >= 0).all()

    def test_zero_at_local_maxima(self):
        data = np.zeros((3, 5, 5), dtype=np.float32)
        data[:, 2, 2] = 1.0
        frame = Tensor(data, "CHW")
        residual = motion_enhance([frame, frame]).tensor.data
        assert residual[0, 2, 2] == 0.0

    def test_impulse_dilates_to_block(self):
        prev = Tensor(np.zeros((3, 7, 7)), "CHW")
        impulse = np.zeros((3, 7, 7), dtype=np.float32)
        impulse[:, 3, 4] = 1.0
        residual = motion_enhance([prev, Tensor(impulse, "CHW")]).tensor.data
        expected = np.zeros((3, 7, 7), dtype=np.float32)
        expected[:, 2:5, 3:6] = 1.0
        assert np.array_equal(residual, expected)

    def test_stack_shape(self, rng):
        features = motion_enhance([random_frame(rng) for _ in range(5)])
        assert features.tensor.shape == (12, 8, 8)
        assert features.t_m == 4

    def test_brightness_offset_shifts_residual(self, rng):
        prev = Tensor(rng.random((3, 6, 6)) * 0.5, "CHW")
        nxt = Tensor(rng.random((3, 6, 6)) * 0.5, "CHW")
        brighter = Tensor(nxt.data + np.float32(0.25), "CHW")
        base = motion_enhance([prev, nxt]).tensor.data
        lifted = motion_enhance([prev, brighter]).tensor.data
        np.testing.assert_allclose(lifted - base, 0.25, atol=1e-6)

    def test_bounded_for_unit_inputs(self, rng):
        frames = [random_frame(rng, 12, 12) for _ in range(4)]
        data = motion_enhance(frames).tensor.data
        assert data.min() >= -1.0 and data.max() <= 1.0

    def test_needs_two_frames(self, rng):
        with pytest.raises(ArityError):
            motion_enhance([random_frame(rng)])

    @pytest.mark.parametrize("offset", [1.5, -0.25])
    def test_identity_rejects_values_outside_unit_range(self, rng, offset):
        frame = random_frame(rng)
        shifted = Tensor(np.clip(frame.data + offset, -1.0, 2.0), "CHW")
        with pytest.raises(RangeError, match="frame 1"):
            motion_enhance([frame, shifted])

    def test_identity_accepts_unit_bounds(self):
        zeros = Tensor(np.zeros((3, 4, 4), dtype=np.float32), "CHW")
        ones = Tensor(np.ones((3, 4, 4), dtype=np.float32), "CHW")
        assert np.array_equal(motion_enhance([zeros, ones]).tensor.data, np.ones((3, 4, 4), dtype=np.float32))

    def test_mixed_shapes(self, rng):
        with pytest.raises(ShapeError):
            motion_enhance([random_frame(rng, 4, 4), random_frame(rng, 4, 5)])


class TestConvTransform:
    def test_identity_kernel_matches_raw_pixels(self, rng):
        weights = np.zeros((3, 3, 3, 3), dtype=np.float32)
        for c in range(3):
            weights[c, c, 1, 1] = 1.0
        config = MeConfig.conv2d(weights, np.zeros(3))
        frames = [random_frame(rng) for _ in range(3)]
        assert np.array_equal(motion_enhance(frames, config).tensor.data, motion_enhance(frames).tensor.data)

    def test_output_channels_follow_weights(self, rng):
        config = MeConfig.conv2d(rng.standard_normal((5, 3, 3, 3)), np.zeros(5))
        features = motion_enhance([random_frame(rng) for _ in range(3)], config)
        assert features.tensor.shape == (10, 8, 8)
        assert config.describe() == {"transform": "conv2d", "out_channels": 5, "kernel": 3}

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ConfigError, match="odd"):
            MeConfig.conv2d(rng.standard_normal((2, 3, 2, 2)), np.zeros(2))

    def test_non_finite_weights(self):
        weights = np.zeros((1, 3, 1, 1))
        weights[0, 0, 0, 0] = np.inf
        with pytest.raises(NumericError):
            MeConfig.conv2d(weights, np.zeros(1))

    def test_overflowing_transform(self):
        config = MeConfig.conv2d(np.full((1, 3, 1, 1), 3e38), np.zeros(1))
        with pytest.raises(NumericError):
            motion_enhance([Tensor(np.ones((3, 2, 2)), "CHW")] * 2, config)


class TestOracle:
    def test_offsets_are_the_full_neighbourhood(self):
        assert sorted(ADMISSIBLE_OFFSETS) == [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]

    def test_matches_per_pixel_loop(self, rng):
        for shape in [(1, 1, 1), (3, 5, 4), (2, 9, 1), (3, 16, 16)]:
            nxt = rng.random(shape, dtype=np.float32)
            prev = rng.random(shape, dtype=np.float32)
            out = displacement_search_oracle(Tensor(nxt, "CHW"), Tensor(prev, "CHW")).data
            assert np.array_equal(out, per_pixel_oracle(nxt, prev))

    def test_mutual_equivalence_on_random_pairs(self, rng):
        for _ in range(200):
            prev, nxt = random_frame(rng, 16, 16), random_frame(rng, 16, 16)
            fast = motion_enhance([prev, nxt]).tensor.data
            assert np.array_equal(fast, displacement_search_oracle(nxt, prev).data)

    def test_constant_pair_is_zero(self):
        f = Tensor(np.full((3, 4, 4), 0.5), "CHW")
        assert not displacement_search_oracle(f, f).data.any()

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            displacement_search_oracle(random_frame(rng, 4, 4), random_frame(rng, 4, 5))

    def test_verify_random_pairs(self):
        result = verify_random_pairs(1000, max_size=64, seed=0)
        assert result == {"pairs": 1000, "mismatches": []}


class TestHelpers:
    @pytest.mark.parametrize(
        "args,expected",
        [((4, 3, 224, 224), (12, 224, 224)), ((1, 3, 8, 8), (3, 8, 8)), ((8, 3, 112, 112), (24, 112, 112))],
    )
    def test_stack_map_shape(self, args, expected):
        assert me_stack_map_shape(*args) == expected

    def test_stack_map_shape_rejects_zero(self):
        with pytest.raises(ConfigError):
            me_stack_map_shape(0, 3, 8, 8)

    @pytest.mark.parametrize("threads", [1, 3])
    def test_extract_segments(self, rng, threads):
        segments = [[random_frame(rng) for _ in range(5)] for _ in range(4)]
        stacks = extract_segments(segments, "me", threads=threads)
        for stack, frames in zip(stacks, segments):
            assert np.array_equal(stack.data, motion_enhance(frames).tensor.data)

    def test_extract_unknown_method(self, rng):
        with pytest.raises(ConfigError, match="unknown motion method"):
            extract_segments([[random_frame(rng)] * 2], "flow")
