import numpy as np
import pytest
from scipy import ndimage

from common.errors import ShapeError
from motionforge.flow import energy, horn_schunck, luma
from motionforge.tensor import Tensor


def smooth_image(rng, height=32, width=32) -> np.ndarray:
    noise = ndimage.gaussian_filter(rng.random((height, width)), sigma=3.0)
    noise -= noise.min()
    return noise / noise.max() * 255.0


class TestLuma:
    def test_white_is_255(self):
        out = luma(Tensor(np.ones((3, 2, 2)), "CHW"))
        np.testing.assert_allclose(out.data, 255.0, rtol=1e-6)

    def test_weights(self):
        frame = np.zeros((3, 1, 1))
        frame[1] = 1.0
        np.testing.assert_allclose(luma(Tensor(frame, "CHW")).data, 0.587 * 255.0, rtol=1e-6)

    def test_needs_rgb(self):
        with pytest.raises(ShapeError):
            luma(Tensor(np.ones((1, 2, 2)), "CHW"))


class TestHornSchunck:
    def test_identical_frames_stay_at_zero(self, rng):
        frame = Tensor(smooth_image(rng), "HW")
        seen = []
        flow = horn_schunck(frame, frame, iters=10, trace=lambda step, u, v: seen.append((u.any(), v.any())))
        assert not flow.u.data.any() and not flow.v.data.any()
        assert seen == [(False, False)] * 10

    @pytest.mark.parametrize("later", [10.0, 20.0])
    def test_single_pixel_frames(self, later):
        seen = []
        flow = horn_schunck(
            Tensor(np.array([[10.0]]), "HW"),
            Tensor(np.array([[later]]), "HW"),
            iters=5,
            trace=lambda step, u, v: seen.append((u.any(), v.any())),
        )
        assert flow.u.data.shape == (1, 1)
        assert not flow.u.data.any() and not flow.v.data.any()
        assert seen == [(False, False)] * 5

    def test_single_row_frames(self, rng):
        row = Tensor(smooth_image(rng, height=1, width=24), "HW")
        flow = horn_schunck(row, row, iters=5)
        assert not flow.u.data.any() and not flow.v.data.any()

    def test_zero_iterations(self, rng):
        flow = horn_schunck(Tensor(smooth_image(rng), "HW"), Tensor(smooth_image(rng), "HW"), iters=0)
        assert not flow.u.data.any() and not flow.v.data.any()

    def test_ramp_shift_recovers_one_pixel(self):
        xs = np.arange(64, dtype=np.float64)
        ramp = np.tile(3.0 * xs + 8.0 * np.sin(xs / 6.0), (48, 1))
        shifted = np.tile(3.0 * (xs - 1) + 8.0 * np.sin((xs - 1) / 6.0), (48, 1))
        flow = horn_schunck(Tensor(ramp, "HW"), Tensor(shifted, "HW"), alpha=15.0, iters=100)
        assert 0.5 <= flow.u.data.mean() <= 1.5
        assert -0.2 <= flow.v.data.mean() <= 0.2

    def test_energy_non_increasing(self, rng):
        prev = Tensor(smooth_image(rng), "HW")
        nxt = Tensor(np.roll(prev.data, 1, axis=1) + rng.normal(0, 0.5, prev.shape), "HW")
        energies = [energy(prev, nxt, np.zeros(prev.shape), np.zeros(prev.shape))]
        horn_schunck(prev, nxt, iters=20, trace=lambda step, u, v: energies.append(energy(prev, nxt, u, v)))
        for before, after in zip(energies, energies[1:]):
            assert after <= before + 1e-6 * abs(before)
        assert energies[-1] < energies[0]

    def test_deterministic(self, rng):
        prev, nxt = Tensor(smooth_image(rng), "HW"), Tensor(smooth_image(rng), "HW")
        a = horn_schunck(prev, nxt, iters=15)
        b = horn_schunck(prev, nxt, iters=15)
        assert a.u.data.tobytes() == b.u.data.tobytes()
        assert a.v.data.tobytes() == b.v.data.tobytes()

    def test_magnitude(self):
        u = Tensor(np.full((2, 2), 3.0), "HW")
        v = Tensor(np.full((2, 2), 4.0), "HW")
        from motionforge.flow import FlowField

        magnitude = FlowField(u, v).magnitude()
        assert magnitude.shape == (1, 2, 2)
        np.testing.assert_allclose(magnitude.data, 5.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            horn_schunck(Tensor(np.zeros((4, 4)), "HW"), Tensor(np.zeros((4, 5)), "HW"))
