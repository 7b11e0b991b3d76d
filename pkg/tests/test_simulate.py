"""Integrate-and-fire simulation and synthetic scenes."""

import numpy as np
import pytest

from spikeflow.flowfield import FlowField
from spikeflow.simulate import (
    CameraConfig,
    SceneSpec,
    ground_truth_flow,
    render_scene,
    simulate,
)


def constant_scene(value, h=5, w=5, seed=0):
    return SceneSpec(kind="translate", height=h, width=w, velocity=(0.0, 0.0),
                     brightness=(value, value), seed=seed)


def spike_oracle(intensity, frames, theta=1.0):
    """Cumulative-sum floor oracle for a constant normalized intensity:
    spike wherever cumulative charge crosses the next threshold multiple."""
    cum = np.cumsum(np.full(frames, intensity * theta))
    crossings = np.floor(cum / theta).astype(np.int64)
    before = np.concatenate([[0], crossings[:-1]])
    return (crossings > before).astype(np.uint8)


class TestConfigValidation:
    def test_camera_rejects_bad_values(self):
        for kw in (dict(threshold=0.0), dict(conversion_rate=-1.0),
                   dict(period=0.0), dict(noise_mode="gaussian")):
            with pytest.raises(ValueError):
                CameraConfig(**kw)

    def test_scene_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SceneSpec(kind="zoom")
        with pytest.raises(ValueError):
            SceneSpec(kind="translate", brightness=(0.0, 0.5))
        with pytest.raises(ValueError):
            SceneSpec(kind="translate", brightness=(0.4, 1.2))
        with pytest.raises(ValueError):
            SceneSpec(kind="translate", velocity=(np.inf, 0.0))
        with pytest.raises(ValueError):
            SceneSpec(kind="two_layer")  # needs fg_radius


class TestDeterministicSimulation:
    def test_saturation_all_ones(self):
        stream = simulate(constant_scene(1.0), CameraConfig(), frames=20, substeps=1)
        assert stream.frames.all()

    def test_quarter_intensity_spike_frames(self):
        stream = simulate(constant_scene(0.25), CameraConfig(), frames=16, substeps=1)
        for y in range(stream.height):
            for x in range(stream.width):
                assert list(np.flatnonzero(stream.frames[:, y, x])) == [3, 7, 11, 15]

    def test_quarter_intensity_substeps_exact(self):
        stream = simulate(constant_scene(0.25), CameraConfig(), frames=16, substeps=4)
        assert list(np.flatnonzero(stream.frames[:, 0, 0])) == [3, 7, 11, 15]

    def test_zero_intensity_no_spikes(self):
        # brightness must be positive; approximate zero with the tiniest scene
        scene = SceneSpec(kind="translate", height=2, width=2,
                          brightness=(1e-9, 1e-9))
        stream = simulate(scene, CameraConfig(), frames=50, substeps=1)
        assert not stream.frames.any()

    @pytest.mark.parametrize("intensity", [1.0, 0.5, 0.25, 0.1])
    def test_matches_cumsum_floor_oracle(self, intensity):
        frames = 400
        stream = simulate(constant_scene(intensity), CameraConfig(), frames=frames, substeps=1)
        expected = spike_oracle(intensity, frames)
        for y in range(stream.height):
            for x in range(stream.width):
                np.testing.assert_array_equal(stream.frames[:, y, x], expected)

    def test_deterministic_mode_ignores_seed(self):
        a = simulate(constant_scene(0.3), CameraConfig(seed=1), frames=60, substeps=1)
        b = simulate(constant_scene(0.3), CameraConfig(seed=2), frames=60, substeps=1)
        assert a == b

    def test_spike_count_identity_on_moving_scene(self):
        # cumulative-sum oracle on the exact per-substep increment sequence
        scene = SceneSpec(kind="translate", height=4, width=4, velocity=(0.3, -0.2), seed=3)
        camera = CameraConfig()
        frames, substeps = 120, 4
        stream = simulate(scene, camera, frames=frames, substeps=substeps)
        increments = np.stack([
            render_scene(scene, t + (j + 0.5) / substeps) / substeps
            for t in range(frames) for j in range(substeps)
        ])
        cum = np.cumsum(increments, axis=0)[substeps - 1::substeps]
        counts = np.floor(cum).astype(np.int64)
        expected = np.diff(np.concatenate([np.zeros((1, 4, 4), np.int64), counts]), axis=0)
        np.testing.assert_array_equal(stream.frames, expected.astype(np.uint8))


class TestPoissonSimulation:
    def test_mean_rate_matches_intensity(self):
        theta = 100.0
        scene = constant_scene(0.25, h=24, w=24)
        camera = CameraConfig(threshold=theta, noise_mode="poisson", seed=9)
        frames = 800
        stream = simulate(scene, camera, frames=frames, substeps=1)
        rates = stream.frames.mean(axis=0)
        # renewal process: rate -> intensity; 3 standard errors over all pixels
        mean_rate = rates.mean()
        stderr = rates.std(ddof=1) / np.sqrt(rates.size)
        assert abs(mean_rate - 0.25) < 3 * stderr + 1.0 / frames

    def test_poisson_seed_determinism(self):
        camera = CameraConfig(threshold=50.0, noise_mode="poisson", seed=4)
        a = simulate(constant_scene(0.3), camera, frames=50, substeps=2)
        b = simulate(constant_scene(0.3), camera, frames=50, substeps=2)
        assert a == b
        c = simulate(constant_scene(0.3), CameraConfig(threshold=50.0, noise_mode="poisson", seed=5),
                     frames=50, substeps=2)
        assert a != c

    def test_at_most_one_spike_per_frame(self):
        camera = CameraConfig(threshold=100.0, noise_mode="poisson", seed=4)
        stream = simulate(constant_scene(0.9, h=8, w=8), camera, frames=200, substeps=1)
        assert stream.frames.max() <= 1


class TestRenderScene:
    def test_static_scene_constant_over_time(self):
        scene = SceneSpec(kind="translate", height=8, width=8, velocity=(0.0, 0.0), seed=2)
        np.testing.assert_array_equal(render_scene(scene, 0.0), render_scene(scene, 17.3))

    def test_integer_shift_matches_roll(self):
        scene = SceneSpec(kind="translate", height=16, width=16, velocity=(1.0, 0.0), seed=5)
        base = render_scene(scene, 0.0)
        for tau in (1, 3, 7):
            np.testing.assert_array_equal(render_scene(scene, float(tau)),
                                          np.roll(base, tau, axis=1))

    def test_integer_shift_both_axes(self):
        scene = SceneSpec(kind="translate", height=12, width=12, velocity=(-1.0, 2.0), seed=8)
        out = render_scene(scene, 3.0)
        expected = np.roll(render_scene(scene, 0.0), (6, -3), axis=(0, 1))
        np.testing.assert_array_equal(out, expected)

    def test_rotation_by_pi_maps_diametrically(self):
        # odd size keeps the center on a pixel
        scene = SceneSpec(kind="rotate", height=15, width=15, spin=np.pi / 8, seed=1)
        base = render_scene(scene, 0.0)
        rotated = render_scene(scene, 8.0)  # spin * tau = pi
        np.testing.assert_allclose(rotated, base[::-1, ::-1], atol=1e-9)

    def test_brightness_range_respected(self):
        scene = SceneSpec(kind="translate", height=16, width=16, brightness=(0.2, 0.8), seed=3)
        img = render_scene(scene, 0.0)
        assert img.min() >= 0.2 - 1e-12
        assert img.max() <= 0.8 + 1e-12

    def test_two_layer_uses_both_textures(self):
        scene = SceneSpec(kind="two_layer", height=16, width=16, velocity=(0.5, 0.0),
                          fg_velocity=(-0.5, 0.0), fg_radius=4.0, seed=6)
        img = render_scene(scene, 0.0)
        bg_only = SceneSpec(kind="translate", height=16, width=16, velocity=(0.5, 0.0), seed=6)
        assert not np.array_equal(img, render_scene(bg_only, 0.0))


class TestGroundTruth:
    def test_translate_constant_flow(self):
        scene = SceneSpec(kind="translate", height=8, width=8, velocity=(0.5, -0.25))
        truth = ground_truth_flow(scene, 100, 110)
        np.testing.assert_allclose(truth.flow.u, 5.0)
        np.testing.assert_allclose(truth.flow.v, -2.5)
        np.testing.assert_allclose(truth.reverse_flow.u, -5.0)
        np.testing.assert_allclose(truth.reverse_flow.v, 2.5)

    def test_requires_ordered_timestamps(self):
        scene = SceneSpec(kind="translate", height=4, width=4)
        with pytest.raises(ValueError):
            ground_truth_flow(scene, 10, 10)

    def test_rotation_rigid_formula(self):
        scene = SceneSpec(kind="rotate", height=9, width=9, spin=0.01)
        truth = ground_truth_flow(scene, 0, 50)
        phi = 0.5
        cx = cy = 4.0
        ys, xs = np.mgrid[0:9, 0:9].astype(float)
        dx, dy = xs - cx, ys - cy
        np.testing.assert_allclose(truth.flow.u, (np.cos(phi) - 1) * dx - np.sin(phi) * dy)
        np.testing.assert_allclose(truth.flow.v, np.sin(phi) * dx + (np.cos(phi) - 1) * dy)

    def test_two_layer_mask_select(self):
        scene = SceneSpec(kind="two_layer", height=20, width=20, velocity=(0.2, 0.0),
                          fg_velocity=(-0.1, 0.3), fg_center=(10.0, 10.0), fg_radius=5.0)
        truth = ground_truth_flow(scene, 0, 10)
        ys, xs = np.mgrid[0:20, 0:20].astype(float)
        inside = (xs - 10.0) ** 2 + (ys - 10.0) ** 2 <= 25.0
        np.testing.assert_allclose(truth.flow.u, np.where(inside, -1.0, 2.0))
        np.testing.assert_allclose(truth.flow.v, np.where(inside, 3.0, 0.0))
        # reverse flow selects by the disk position at t1
        inside1 = (xs - 9.0) ** 2 + (ys - 13.0) ** 2 <= 25.0
        np.testing.assert_allclose(truth.reverse_flow.u, np.where(inside1, 1.0, -2.0))

    def test_intensity_at_matches_render(self):
        scene = SceneSpec(kind="translate", height=6, width=6, velocity=(0.1, 0.1), seed=4)
        truth = ground_truth_flow(scene, 0, 10)
        np.testing.assert_array_equal(truth.intensity_at(5.0), render_scene(scene, 5.0))

    def test_flow_field_type(self):
        truth = ground_truth_flow(SceneSpec(kind="translate", height=4, width=4), 0, 5)
        assert isinstance(truth.flow, FlowField)
        assert truth.flow.shape == (4, 4)
