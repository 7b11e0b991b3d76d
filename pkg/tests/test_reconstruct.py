"""Window and interval intensity estimators plus their fusion."""

import numpy as np
import pytest

from spikeflow.reconstruct import (
    ReconConfig,
    estimate_stack,
    fuse,
    fuse_stack,
    interval_estimate,
    window_estimate,
)
from spikeflow.simulate import CameraConfig, SceneSpec, simulate
from spikeflow.stream import NoLeftSpikeError, NoRightSpikeError, SpikeStream


def constant_stream(intensity, frames=400, h=4, w=4):
    scene = SceneSpec(kind="translate", height=h, width=w, velocity=(0.0, 0.0),
                      brightness=(intensity, intensity))
    return simulate(scene, CameraConfig(), frames=frames, substeps=1)


def periodic_stream(period, frames=64, phase=0):
    frames_arr = np.zeros((frames, 1, 1), np.uint8)
    frames_arr[phase::period] = 1
    return SpikeStream(frames_arr, 1.0)


class TestReconConfig:
    def test_defaults(self):
        cfg = ReconConfig()
        assert (cfg.short_half, cfg.long_half, cfg.orders, cfg.terms) == (40, 100, 2, 4)

    def test_validation(self):
        with pytest.raises(ValueError):
            ReconConfig(short_half=100, long_half=40)
        with pytest.raises(ValueError):
            ReconConfig(orders=0)


class TestWindowEstimate:
    def test_saturated_pixel(self):
        stream = SpikeStream(np.ones((100, 2, 2), np.uint8), 1.0)
        np.testing.assert_allclose(window_estimate(stream, 50, 20), 1.0)

    def test_zero_spike_pixel(self):
        stream = SpikeStream(np.zeros((100, 2, 2), np.uint8), 1.0)
        np.testing.assert_allclose(window_estimate(stream, 50, 20), 0.0)

    def test_interior_bound_at_one_fifth(self):
        stream = constant_stream(0.2)
        est = window_estimate(stream, 200, 40)
        assert np.isin(est * 81, (16, 17)).all()
        assert np.abs(est - 0.2).max() <= 1.0 / 81

    def test_matches_per_pixel_count_oracle(self):
        rng = np.random.default_rng(0)
        frames = (rng.random((60, 3, 4)) < 0.4).astype(np.uint8)
        stream = SpikeStream(frames, 1.0)
        for tau in (0, 5, 30, 59):
            for half in (1, 7, 100):
                est = window_estimate(stream, tau, half)
                for y in range(3):
                    for x in range(4):
                        count, length = stream.count_in_window(y, x, tau, half)
                        assert est[y, x] == count / length

    def test_boundary_uses_effective_length(self):
        # all-spike stream: clipped window must still read exactly 1.0
        stream = SpikeStream(np.ones((50, 1, 1), np.uint8), 1.0)
        assert window_estimate(stream, 2, 40)[0, 0] == 1.0

    def test_invariant_outside_dependency(self):
        rng = np.random.default_rng(1)
        frames = (rng.random((80, 2, 2)) < 0.3).astype(np.uint8)
        stream = SpikeStream(frames, 1.0)
        est = window_estimate(stream, 30, 10)
        tampered = frames.copy()
        tampered[50:] = 1 - tampered[50:]
        est2 = window_estimate(SpikeStream(tampered, 1.0), 30, 10)
        np.testing.assert_array_equal(est, est2)


class TestIntervalEstimate:
    def test_period_train_k1_exact(self):
        stream = periodic_stream(4, phase=3)
        est, valid = interval_estimate(stream, 9, 1)
        assert valid[0, 0]
        assert est[0, 0] == 0.25

    def test_period_train_k2_exact(self):
        stream = periodic_stream(4, phase=3)
        est, valid = interval_estimate(stream, 9, 2)
        assert valid[0, 0]
        assert est[0, 0] == 3.0 / 12.0

    def test_single_spike_invalid(self):
        frames = np.zeros((20, 1, 1), np.uint8)
        frames[10] = 1
        est, valid = interval_estimate(SpikeStream(frames, 1.0), 10, 1)
        assert not valid[0, 0]
        assert est[0, 0] == 0.0

    def test_matches_bracketing_oracle(self):
        rng = np.random.default_rng(2)
        frames = (rng.random((100, 3, 3)) < 0.25).astype(np.uint8)
        stream = SpikeStream(frames, 1.0)
        for tau in (10, 50, 90):
            for k in (1, 2):
                est, valid = interval_estimate(stream, tau, k)
                for y in range(3):
                    for x in range(3):
                        try:
                            m, n = stream.bracketing_spikes(y, x, tau)
                            left = m - k + 1
                            right = n + k - 1
                            total = int(frames[:, y, x].sum())
                            if left < 1 or right > total:
                                raise NoLeftSpikeError("insufficient order")
                            span = (stream.spike_timestamp(y, x, right)
                                    - stream.spike_timestamp(y, x, left))
                            assert valid[y, x]
                            assert est[y, x] == (2 * k - 1) / span
                        except (NoLeftSpikeError, NoRightSpikeError):
                            assert not valid[y, x]

    @pytest.mark.parametrize("intensity", [1.0, 0.5, 0.25, 0.1])
    @pytest.mark.parametrize("k", [1, 2])
    def test_quantization_bound_on_constant_scenes(self, intensity, k):
        stream = constant_stream(intensity)
        est, valid = interval_estimate(stream, 200, k)
        assert valid.all()
        span = (2 * k - 1) / est
        assert (np.abs(est - intensity) <= intensity / span + 1e-12).all()

    def test_reciprocal_intensities_exact(self):
        for intensity in (1.0, 0.5, 0.25, 0.1):
            stream = constant_stream(intensity)
            for k in (1, 2):
                est, valid = interval_estimate(stream, 200, k)
                assert valid.all()
                np.testing.assert_allclose(est, intensity, atol=1e-12)

    def test_invariant_outside_bracketing_spikes(self):
        stream = periodic_stream(5, frames=60, phase=2)
        est, _ = interval_estimate(stream, 30, 1)
        frames = stream.frames.copy()
        frames[50:] = 1  # beyond the bracketing spikes of order 1
        est2, _ = interval_estimate(SpikeStream(frames, 1.0), 30, 1)
        assert est[0, 0] == est2[0, 0]


class TestFusion:
    def _stack(self, h=3, w=3, seed=0):
        rng = np.random.default_rng(seed)
        est = rng.random((4, h, w))
        valid = np.ones((4, h, w), dtype=bool)
        return est, valid

    def test_one_hot_weight_is_exact(self):
        est, valid = self._stack()
        out = fuse_stack(est, valid, np.array([1.0, 0.0, 0.0, 0.0]))
        np.testing.assert_array_equal(out, est[0])

    def test_renormalization_on_invalid_intervals(self):
        est, valid = self._stack()
        valid[2:] = False
        weights = np.array([0.1, 0.1, 0.4, 0.4])
        out = fuse_stack(est, valid, weights)
        np.testing.assert_allclose(out, 0.5 * est[0] + 0.5 * est[1])

    def test_uniform_fallback_when_valid_weights_all_zero(self):
        est, valid = self._stack()
        valid[2:] = False
        out = fuse_stack(est, valid, np.array([0.0, 0.0, 0.5, 0.5]))
        np.testing.assert_allclose(out, 0.5 * (est[0] + est[1]))

    def test_convex_combination_bounds(self):
        rng = np.random.default_rng(4)
        est = rng.random((4, 5, 5))
        valid = rng.random((4, 5, 5)) < 0.8
        valid[0] = True
        weights = rng.random((4, 5, 5))
        out = fuse_stack(est, valid, weights)
        masked = np.where(valid, est, np.nan)
        lo = np.nanmin(masked, axis=0)
        hi = np.nanmax(masked, axis=0)
        assert (out >= lo - 1e-12).all()
        assert (out <= hi + 1e-12).all()

    def test_fuse_wrapper_signature(self):
        est, valid = self._stack()
        out = fuse((est[0], est[1]), (est[2], est[3]),
                   np.full(4, 0.25), (valid[2], valid[3]))
        np.testing.assert_allclose(out, est.mean(axis=0))

    def test_uniform_weights_keep_constant_scene_bound(self):
        stream = constant_stream(0.25)
        est, valid = estimate_stack(stream, 200, ReconConfig())
        fused = fuse_stack(est, valid, np.full(4, 0.25))
        worst = np.abs(est - 0.25).max()
        assert np.abs(fused - 0.25).max() <= worst + 1e-12

    def test_random_weights_stay_within_max_single_term_error(self):
        rng = np.random.default_rng(9)
        stream = constant_stream(0.5)
        est, valid = estimate_stack(stream, 200, ReconConfig())
        for _ in range(10):
            w = rng.random(4)
            w /= w.sum()
            fused = fuse_stack(est, valid, w)
            worst = np.abs(np.where(valid, est, 0.5) - 0.5).max()
            assert np.abs(fused - 0.5).max() <= worst + 1e-12

    def test_all_invalid_pixel_asserts(self):
        est, valid = self._stack()
        valid[:] = False
        with pytest.raises(AssertionError):
            fuse_stack(est, valid, np.full(4, 0.25))


class TestEstimateStack:
    def test_shapes_and_window_validity(self):
        stream = constant_stream(0.25, frames=300, h=5, w=6)
        est, valid = estimate_stack(stream, 150, ReconConfig())
        assert est.shape == (4, 5, 6)
        assert valid.shape == (4, 5, 6)
        assert valid[:2].all()

    def test_poisson_variance_ordering(self):
        # second-order interval estimates average more intervals, so their
        # spread across pixels must be markedly below first order
        scene = SceneSpec(kind="translate", height=32, width=32, velocity=(0.0, 0.0),
                          brightness=(0.25, 0.25))
        camera = CameraConfig(threshold=100.0, noise_mode="poisson", seed=123)
        stream = simulate(scene, camera, frames=300, substeps=1)
        est1, valid1 = interval_estimate(stream, 150, 1)
        est2, valid2 = interval_estimate(stream, 150, 2)
        both = valid1 & valid2
        assert both.mean() > 0.99
        std1 = est1[both].std(ddof=1)
        std2 = est2[both].std(ddof=1)
        assert std2 < 0.9 * std1
