"""Flow metrics, Middlebury .flo I/O, color coding, and experiment reports."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .flowfield import FlowField

__all__ = [
    "aee",
    "FloFormatError",
    "read_flo",
    "write_flo",
    "colorwheel",
    "flow_to_color",
    "EvalReport",
    "config_hash",
    "report_json",
    "write_ppm",
    "write_pgm",
    "write_image",
]

FLO_MAGIC = 202021.25


class FloFormatError(ValueError):
    """Malformed .flo data."""


def aee(flow: FlowField, reference: FlowField, mask: np.ndarray | None = None) -> float:
    """Average endpoint error: mean Euclidean distance between flow vectors,
    over masked pixels when a mask is given."""
    if flow.shape != reference.shape:
        raise ValueError(f"shape mismatch: {flow.shape} vs {reference.shape}")
    err = np.hypot(flow.u - reference.u, flow.v - reference.v)
    if mask is None:
        return float(err.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != flow.shape:
        raise ValueError(f"mask shape {mask.shape} != flow shape {flow.shape}")
    if not mask.any():
        raise ValueError("empty mask")
    return float(err[mask].mean())


def write_flo(flow: FlowField, path) -> None:
    """Middlebury .flo: f32 magic 202021.25, i32 width, i32 height, then
    row-major interleaved (u, v) float32 pairs, little-endian."""
    height, width = flow.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, width, height))
        f.write(flow.as_array().astype("<f4").tobytes())


def read_flo(path) -> FlowField:
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) < 4 or struct.unpack("<f", header[:4])[0] != FLO_MAGIC:
            raise FloFormatError("bad magic: not a .flo file")
        if len(header) < 12:
            raise FloFormatError("truncated header")
        width, height = struct.unpack("<ii", header[4:])
        if width <= 0 or height <= 0:
            raise FloFormatError(f"non-positive dimensions {width}x{height}")
        data = f.read(8 * width * height)
    if len(data) < 8 * width * height:
        raise FloFormatError("truncated payload")
    uv = np.frombuffer(data, dtype="<f4").reshape(height, width, 2)
    return FlowField.from_array(uv.astype(np.float64))


def colorwheel() -> np.ndarray:
    """The 55-entry six-segment (RY/YG/GC/CB/BM/MR) color wheel, rows in
    [0, 255]."""
    segments = (15, 6, 4, 11, 13, 6)  # RY, YG, GC, CB, BM, MR
    ncols = sum(segments)
    wheel = np.zeros((ncols, 3))
    col = 0
    ry, yg, gc, cb, bm, mr = segments
    wheel[col:col + ry, 0] = 255
    wheel[col:col + ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col:col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col:col + yg, 1] = 255
    col += yg
    wheel[col:col + gc, 1] = 255
    wheel[col:col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col:col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col:col + cb, 2] = 255
    col += cb
    wheel[col:col + bm, 2] = 255
    wheel[col:col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col:col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col:col + mr, 0] = 255
    return wheel


def flow_to_color(flow: FlowField, max_magnitude: float | None = None) -> np.ndarray:
    """Middlebury color coding as (H, W, 3) uint8: hue from direction,
    saturation from |f| / max. Zero flow maps to white. When max_magnitude is
    None it is set to the 99th percentile of |f| so single outliers do not
    dominate the scale."""
    magnitude = flow.magnitude()
    if max_magnitude is None:
        max_magnitude = float(np.percentile(magnitude, 99.0))
    scale = max(max_magnitude, 1e-9)
    u = flow.u / scale
    v = flow.v / scale
    rad = np.hypot(u, v)

    wheel = colorwheel()
    ncols = wheel.shape[0]
    angle = np.arctan2(-v, -u) / np.pi
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    frac = fk - k0

    image = np.zeros(flow.shape + (3,), dtype=np.uint8)
    for channel in range(3):
        col0 = wheel[k0, channel] / 255.0
        col1 = wheel[k1, channel] / 255.0
        col = (1.0 - frac) * col0 + frac * col1
        inside = rad <= 1.0
        col = np.where(inside, 1.0 - rad * (1.0 - col), col * 0.75)
        image[:, :, channel] = np.floor(255.0 * col).astype(np.uint8)
    return image


@dataclass
class EvalReport:
    """Per-scene endpoint errors plus run metadata; mean is unweighted."""

    scenes: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def add_scene(self, name: str, aee_value: float, n_valid: int, n_total: int) -> None:
        if aee_value < 0:
            raise ValueError("AEE cannot be negative")
        self.scenes[name] = {
            "aee": aee_value,
            "n_valid": int(n_valid),
            "valid_fraction": n_valid / n_total if n_total else 0.0,
        }

    @property
    def mean_aee(self) -> float:
        if not self.scenes:
            raise ValueError("no scenes recorded")
        return float(np.mean([s["aee"] for s in self.scenes.values()]))

    def as_dict(self) -> dict:
        return {
            "scenes": self.scenes,
            "mean_aee": self.mean_aee,
            "config": dict(self.config, config_hash=config_hash(self.config)),
        }


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def report_json(report) -> str:
    """Canonical JSON (sorted keys) so identical runs give identical bytes."""
    obj = report.as_dict() if isinstance(report, EvalReport) else report
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_ppm(image: np.ndarray, path) -> None:
    """Binary P6 PPM from an (H, W, 3) uint8 image."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {image.shape}")
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def write_pgm(gray01: np.ndarray, path) -> None:
    """Binary P5 PGM from an (H, W) map in [0, 1]; values clamp then scale to 255."""
    gray01 = np.asarray(gray01, dtype=np.float64)
    if gray01.ndim != 2:
        raise ValueError(f"expected (H, W) map, got {gray01.shape}")
    pixels = np.rint(np.clip(gray01, 0.0, 1.0) * 255.0).astype(np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def write_image(image: np.ndarray, path) -> None:
    """Write (H, W, 3) uint8 as PPM or PNG based on the file suffix."""
    path = str(path)
    if path.lower().endswith(".png"):
        from PIL import Image

        Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path)
    else:
        write_ppm(image, path)
