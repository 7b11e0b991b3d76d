"""Endpoint error, .flo round trips, color coding, and reports."""

import json

import numpy as np
import pytest

from spikeflow.evaluate import (
    EvalReport,
    FloFormatError,
    aee,
    colorwheel,
    config_hash,
    flow_to_color,
    read_flo,
    report_json,
    write_flo,
    write_pgm,
    write_ppm,
)
from spikeflow.flowfield import FlowField


def random_flow(rng, shape=(7, 9), scale=4.0):
    return FlowField(rng.normal(0, scale, shape), rng.normal(0, scale, shape))


class TestAee:
    def test_identical_fields(self):
        rng = np.random.default_rng(0)
        f = random_flow(rng)
        assert aee(f, f) == 0.0

    def test_three_four_five(self):
        f = FlowField.constant((5, 5), 3.0, 4.0)
        g = FlowField.constant((5, 5), 0.0, 0.0)
        assert aee(f, g) == pytest.approx(5.0, abs=1e-15)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        f, g = random_flow(rng), random_flow(rng)
        naive = np.mean([
            np.sqrt((f.u[i, j] - g.u[i, j]) ** 2 + (f.v[i, j] - g.v[i, j]) ** 2)
            for i in range(7) for j in range(9)
        ])
        assert abs(aee(f, g) - naive) < 1e-12

    def test_masked(self):
        f = FlowField.constant((4, 4), 1.0, 0.0)
        g = FlowField.constant((4, 4), 0.0, 0.0)
        mask = np.zeros((4, 4), bool)
        mask[0, 0] = True
        assert aee(f, g, mask) == pytest.approx(1.0)

    def test_empty_mask_raises(self):
        f = FlowField.constant((4, 4), 1.0, 0.0)
        with pytest.raises(ValueError):
            aee(f, f, np.zeros((4, 4), bool))

    def test_scale_linearity(self):
        rng = np.random.default_rng(2)
        f, g = random_flow(rng), random_flow(rng)
        scaled = aee(FlowField(3 * f.u, 3 * f.v), FlowField(3 * g.u, 3 * g.v))
        assert scaled == pytest.approx(3 * aee(f, g), rel=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        f, g = random_flow(rng), random_flow(rng)
        perm = rng.permutation(7 * 9)
        fp = FlowField(f.u.ravel()[perm].reshape(7, 9), f.v.ravel()[perm].reshape(7, 9))
        gp = FlowField(g.u.ravel()[perm].reshape(7, 9), g.v.ravel()[perm].reshape(7, 9))
        assert aee(fp, gp) == pytest.approx(aee(f, g), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            aee(FlowField.constant((3, 3), 0, 0), FlowField.constant((4, 4), 0, 0))


class TestFloFormat:
    def test_roundtrip_random_fields(self, tmp_path):
        rng = np.random.default_rng(4)
        for i in range(50):
            h = int(rng.integers(1, 12))
            w = int(rng.integers(1, 12))
            f = FlowField(rng.normal(size=(h, w)).astype(np.float32).astype(np.float64),
                          rng.normal(size=(h, w)).astype(np.float32).astype(np.float64))
            path = tmp_path / f"f{i}.flo"
            write_flo(f, path)
            back = read_flo(path)
            np.testing.assert_array_equal(back.u, f.u)
            np.testing.assert_array_equal(back.v, f.v)

    def test_roundtrip_is_f32_exact(self, tmp_path):
        f = FlowField(np.array([[0.1, 1e-9]]), np.array([[1e9, -3.25]]))
        path = tmp_path / "f.flo"
        write_flo(f, path)
        back = read_flo(path)
        np.testing.assert_array_equal(back.u, f.u.astype(np.float32).astype(np.float64))

    def test_header_layout(self, tmp_path):
        path = tmp_path / "f.flo"
        write_flo(FlowField.constant((2, 3), 1.0, 2.0), path)
        blob = path.read_bytes()
        assert np.frombuffer(blob[:4], "<f4")[0] == np.float32(202021.25)
        assert np.frombuffer(blob[4:12], "<i4").tolist() == [3, 2]
        assert len(blob) == 12 + 2 * 3 * 2 * 4

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.flo"
        path.write_bytes(b"\x00" * 24)
        with pytest.raises(FloFormatError):
            read_flo(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "f.flo"
        write_flo(FlowField.constant((4, 4), 1.0, 2.0), path)
        (tmp_path / "t.flo").write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FloFormatError):
            read_flo(tmp_path / "t.flo")

    def test_zero_size_rejected(self, tmp_path):
        import struct
        path = tmp_path / "z.flo"
        path.write_bytes(struct.pack("<fii", 202021.25, 0, 0))
        with pytest.raises(FloFormatError):
            read_flo(path)


def reference_wheel():
    """Independent construction of the six-segment wheel from the published
    segment table: per segment, one channel saturated, one ramping."""
    ramps = [
        (15, 0, 1, +1),  # RY: R=255, G ramps up
        (6, 1, 0, -1),   # YG: G=255, R ramps down
        (4, 1, 2, +1),   # GC: G=255, B ramps up
        (11, 2, 1, -1),  # CB: B=255, G ramps down
        (13, 2, 0, +1),  # BM: B=255, R ramps up
        (6, 0, 2, -1),   # MR: R=255, B ramps down
    ]
    rows = []
    for count, hold, ramp, sign in ramps:
        for i in range(count):
            row = [0.0, 0.0, 0.0]
            row[hold] = 255.0
            level = np.floor(255.0 * i / count)
            row[ramp] = level if sign > 0 else 255.0 - level
            rows.append(row)
    return np.array(rows)


class TestColorMap:
    def test_wheel_matches_reference_table(self):
        np.testing.assert_array_equal(colorwheel(), reference_wheel())
        assert colorwheel().shape == (55, 3)

    def test_zero_flow_is_white(self):
        img = flow_to_color(FlowField.constant((4, 4), 0.0, 0.0), max_magnitude=1.0)
        assert (img == 255).all()

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        f = random_flow(rng)
        np.testing.assert_array_equal(flow_to_color(f), flow_to_color(f))

    def test_opposite_flows_get_complementary_hues(self):
        f = FlowField.constant((1, 1), 1.0, 0.0)
        g = FlowField.constant((1, 1), -1.0, 0.0)
        a = flow_to_color(f, max_magnitude=1.0)[0, 0].astype(int)
        b = flow_to_color(g, max_magnitude=1.0)[0, 0].astype(int)
        # opposite directions sit on opposite wheel sides: red-ish vs cyan-ish
        assert a[0] > a[2] and b[2] >= b[1] > b[0]

    def test_unit_vectors_hit_wheel_entries(self):
        # at |f| = max the whitening factor drops out, exposing raw wheel hues
        wheel = colorwheel()
        ncols = wheel.shape[0]
        r = np.sqrt(0.5)
        for u, v in ((1.0, 0.0), (0.0, 1.0), (-r, r)):
            img = flow_to_color(FlowField.constant((1, 1), u, v), max_magnitude=1.0)
            angle = np.arctan2(-v, -u) / np.pi
            fk = (angle + 1) / 2 * (ncols - 1)
            k0 = int(np.floor(fk)) % ncols
            k1 = (k0 + 1) % ncols
            frac = fk - np.floor(fk)
            expected = np.floor((1 - frac) * wheel[k0] + frac * wheel[k1]).astype(np.uint8)
            np.testing.assert_array_equal(img[0, 0], expected)

    def test_saturation_grows_with_magnitude(self):
        big = flow_to_color(FlowField.constant((1, 1), 1.0, 0.0), max_magnitude=2.0)[0, 0]
        small = flow_to_color(FlowField.constant((1, 1), 0.2, 0.0), max_magnitude=2.0)[0, 0]
        # closer to white at lower magnitude
        assert small.astype(int).sum() > big.astype(int).sum()

    def test_overrange_flow_darkened(self):
        img = flow_to_color(FlowField.constant((1, 1), 3.0, 0.0), max_magnitude=1.0)[0, 0]
        assert img.max() <= 192  # 0.75 * 255 rounded


class TestReportsAndImages:
    def test_report_mean_is_unweighted(self):
        report = EvalReport(config={"dt": 10})
        report.add_scene("a", 1.0, 100, 100)
        report.add_scene("b", 3.0, 50, 100)
        assert report.mean_aee == 2.0
        data = report.as_dict()
        assert data["scenes"]["b"]["valid_fraction"] == 0.5
        assert "config_hash" in data["config"]

    def test_report_json_is_canonical(self):
        r1 = EvalReport(config={"x": 1, "y": 2})
        r2 = EvalReport(config={"y": 2, "x": 1})
        for r in (r1, r2):
            r.add_scene("s", 0.5, 10, 10)
        assert report_json(r1) == report_json(r2)
        parsed = json.loads(report_json(r1))
        assert parsed["mean_aee"] == 0.5

    def test_config_hash_stable(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_ppm_layout(self, tmp_path):
        img = np.zeros((2, 3, 3), np.uint8)
        img[0, 0] = (255, 0, 0)
        path = tmp_path / "x.ppm"
        write_ppm(img, path)
        blob = path.read_bytes()
        assert blob.startswith(b"P6\n3 2\n255\n")
        assert blob[11:14] == b"\xff\x00\x00"

    def test_pgm_clamps_and_scales(self, tmp_path):
        path = tmp_path / "x.pgm"
        write_pgm(np.array([[0.0, 0.5], [1.0, 2.0]]), path)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n2 2\n255\n")
        assert list(blob[-4:]) == [0, 128, 255, 255]

    def test_png_roundtrip(self, tmp_path):
        from PIL import Image
        rng = np.random.default_rng(6)
        img = rng.integers(0, 255, (5, 4, 3)).astype(np.uint8)
        path = tmp_path / "x.png"
        from spikeflow.evaluate import write_image
        write_image(img, path)
        back = np.asarray(Image.open(path))
        np.testing.assert_array_equal(back, img)
