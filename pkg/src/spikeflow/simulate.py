"""Integrate-and-fire spike camera simulation over parametric synthetic scenes.

The camera accumulates charge proportional to incident intensity; whenever the
accumulator crosses the threshold at a readout boundary it emits a one-bit
spike and keeps the residual. Scene brightness is expressed in normalized
units where 1.0 produces exactly one spike per frame, so the threshold,
conversion rate, and period act as metadata rather than extra scale factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .flowfield import FlowField
from .stream import SpikeStream

__all__ = [
    "CameraConfig",
    "SceneSpec",
    "GroundTruth",
    "simulate",
    "render_scene",
    "ground_truth_flow",
]

NOISE_MODES = ("deterministic", "poisson")
SCENE_KINDS = ("translate", "rotate", "two_layer")


@dataclass(frozen=True)
class CameraConfig:
    """Sensor parameters: firing threshold, photoelectric conversion rate,
    readout period (seconds per frame), noise mode, and RNG seed.

    The seed is only consulted in poisson mode.
    """

    threshold: float = 1.0
    conversion_rate: float = 1.0
    period: float = 1.0
    noise_mode: str = "deterministic"
    seed: int = 0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if not self.conversion_rate > 0:
            raise ValueError(f"conversion_rate must be positive, got {self.conversion_rate}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}, got {self.noise_mode!r}")


@dataclass(frozen=True)
class SceneSpec:
    """Parametric scene with closed-form motion.

    kind:
      translate -- the whole texture moves with ``velocity`` (vx, vy) px/frame.
      rotate    -- the texture spins about the image center at ``spin`` rad/frame.
      two_layer -- a foreground disk (own texture and velocity) over a
                   translating background.

    Brightness is normalized intensity: values in (0, 1], 1.0 = one spike per
    frame. Textures are band-limited smooth noise (a seeded coarse grid
    resampled bilinearly with periodic extension).
    """

    kind: str
    height: int = 32
    width: int = 32
    velocity: tuple[float, float] = (0.0, 0.0)
    spin: float = 0.0
    brightness: tuple[float, float] = (0.15, 0.95)
    texture_cells: int = 8
    seed: int = 0
    fg_velocity: tuple[float, float] = (0.0, 0.0)
    fg_center: tuple[float, float] | None = None
    fg_radius: float = 0.0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"kind must be one of {SCENE_KINDS}, got {self.kind!r}")
        if self.height < 1 or self.width < 1:
            raise ValueError("height and width must be >= 1")
        if self.texture_cells < 1:
            raise ValueError("texture_cells must be >= 1")
        lo, hi = self.brightness
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"brightness must satisfy 0 < lo <= hi <= 1, got {self.brightness}")
        for name, vec in (("velocity", self.velocity), ("fg_velocity", self.fg_velocity)):
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} must be finite, got {vec}")
        if not np.isfinite(self.spin):
            raise ValueError(f"spin must be finite, got {self.spin}")
        if self.kind == "two_layer" and not self.fg_radius > 0:
            raise ValueError("two_layer scenes need fg_radius > 0")

    @property
    def center(self) -> tuple[float, float]:
        """Image center (cx, cy) in pixel coordinates."""
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    @property
    def foreground_center(self) -> tuple[float, float]:
        return self.fg_center if self.fg_center is not None else self.center


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Analytic flow between two frame indices plus the scene's intensity."""

    flow: FlowField
    reverse_flow: FlowField
    scene: SceneSpec
    t0: int
    t1: int

    def intensity_at(self, tau: float) -> np.ndarray:
        return render_scene(self.scene, tau)


@lru_cache(maxsize=128)
def _texture_grid(seed: int, cells: int, lo: float, hi: float, salt: int) -> np.ndarray:
    """Seeded coarse random grid spanning exactly [lo, hi]."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(salt,)))
    g = rng.random((cells, cells))
    span = np.ptp(g)
    if span > 0:
        g = (g - g.min()) / span
    tex = lo + (hi - lo) * g
    tex.setflags(write=False)
    return tex


def _sample_texture(grid: np.ndarray, ys: np.ndarray, xs: np.ndarray,
                    height: int, width: int) -> np.ndarray:
    """Bilinear periodic sample of a coarse grid; texture period = image size.

    Wrapping happens in pixel space before rescaling to grid units so that
    integer pixel shifts reproduce np.roll bit-for-bit.
    """
    cy, cx = grid.shape
    sy = (np.asarray(ys, dtype=np.float64) % height) * (cy / height)
    sx = (np.asarray(xs, dtype=np.float64) % width) * (cx / width)
    y0f = np.floor(sy)
    x0f = np.floor(sx)
    ty = sy - y0f
    tx = sx - x0f
    y0 = y0f.astype(np.int64) % cy
    x0 = x0f.astype(np.int64) % cx
    y1 = (y0 + 1) % cy
    x1 = (x0 + 1) % cx
    return (grid[y0, x0] * (1 - ty) * (1 - tx)
            + grid[y0, x1] * (1 - ty) * tx
            + grid[y1, x0] * ty * (1 - tx)
            + grid[y1, x1] * ty * tx)


def _pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:height, 0:width]
    return ys.astype(np.float64), xs.astype(np.float64)


def render_scene(scene: SceneSpec, tau: float) -> np.ndarray:
    """Analytic normalized intensity frame at (possibly fractional) time tau."""
    lo, hi = scene.brightness
    ys, xs = _pixel_grid(scene.height, scene.width)
    bg = _texture_grid(scene.seed, scene.texture_cells, lo, hi, 0)

    if scene.kind == "translate":
        vx, vy = scene.velocity
        return _sample_texture(bg, ys - vy * tau, xs - vx * tau, scene.height, scene.width)

    if scene.kind == "rotate":
        cx, cy = scene.center
        phi = scene.spin * tau
        c, s = np.cos(phi), np.sin(phi)
        dx = xs - cx
        dy = ys - cy
        # inverse map: rotate sample coordinates by -phi
        sxs = c * dx + s * dy + cx
        sys_ = -s * dx + c * dy + cy
        return _sample_texture(bg, sys_, sxs, scene.height, scene.width)

    # two_layer
    vx, vy = scene.velocity
    background = _sample_texture(bg, ys - vy * tau, xs - vx * tau, scene.height, scene.width)
    fg = _texture_grid(scene.seed, scene.texture_cells, lo, hi, 1)
    fvx, fvy = scene.fg_velocity
    foreground = _sample_texture(fg, ys - fvy * tau, xs - fvx * tau, scene.height, scene.width)
    mask = _foreground_mask(scene, tau)
    return np.where(mask, foreground, background)


def _foreground_mask(scene: SceneSpec, tau: float) -> np.ndarray:
    """Boolean mask of the foreground disk at time tau."""
    ys, xs = _pixel_grid(scene.height, scene.width)
    cx0, cy0 = scene.foreground_center
    fvx, fvy = scene.fg_velocity
    cx = cx0 + fvx * tau
    cy = cy0 + fvy * tau
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= scene.fg_radius ** 2


def ground_truth_flow(scene: SceneSpec, t0: int, t1: int) -> GroundTruth:
    """Closed-form displacement field from t0 to t1 plus its reverse."""
    if not t0 < t1:
        raise ValueError(f"need t0 < t1, got {t0} >= {t1}")
    dt = float(t1 - t0)
    shape = (scene.height, scene.width)

    if scene.kind == "translate":
        vx, vy = scene.velocity
        flow = FlowField.constant(shape, vx * dt, vy * dt)
        reverse = FlowField.constant(shape, -vx * dt, -vy * dt)
        return GroundTruth(flow, reverse, scene, t0, t1)

    if scene.kind == "rotate":
        flow = _rotation_flow(scene, scene.spin * dt)
        reverse = _rotation_flow(scene, -scene.spin * dt)
        return GroundTruth(flow, reverse, scene, t0, t1)

    # two_layer: pixels inside the foreground disk move with the foreground
    vx, vy = scene.velocity
    fvx, fvy = scene.fg_velocity
    mask0 = _foreground_mask(scene, t0)
    mask1 = _foreground_mask(scene, t1)
    flow = FlowField(np.where(mask0, fvx * dt, vx * dt), np.where(mask0, fvy * dt, vy * dt))
    reverse = FlowField(np.where(mask1, -fvx * dt, -vx * dt), np.where(mask1, -fvy * dt, -vy * dt))
    return GroundTruth(flow, reverse, scene, t0, t1)


def _rotation_flow(scene: SceneSpec, phi: float) -> FlowField:
    ys, xs = _pixel_grid(scene.height, scene.width)
    cx, cy = scene.center
    dx = xs - cx
    dy = ys - cy
    c, s = np.cos(phi), np.sin(phi)
    return FlowField((c - 1.0) * dx - s * dy, s * dx + (c - 1.0) * dy)


def simulate(scene: SceneSpec, camera: CameraConfig, frames: int, substeps: int = 4) -> SpikeStream:
    """Run the integrate-and-fire model over ``frames`` readout periods.

    Each frame integrates ``substeps`` midpoint samples of the scene. The
    accumulator is tracked cumulatively (never reset) and a spike is emitted
    whenever the integral crosses the next threshold multiple at a readout
    boundary, so deterministic spike trains agree exactly with a
    cumulative-sum floor oracle. Poisson mode replaces each increment with a
    Poisson draw of the same mean and starts from a uniform residual in
    [0, threshold) to avoid phase-locked trains.
    """
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")

    theta = camera.threshold
    shape = (scene.height, scene.width)
    poisson = camera.noise_mode == "poisson"
    rng = np.random.default_rng(np.random.SeedSequence(camera.seed)) if poisson else None

    accum = rng.uniform(0.0, theta, size=shape) if poisson else np.zeros(shape)
    fired_total = np.zeros(shape, dtype=np.int64)
    bits = np.zeros((frames,) + shape, dtype=np.uint8)

    for t in range(frames):
        for j in range(substeps):
            tau = t + (j + 0.5) / substeps
            mean = render_scene(scene, tau) * (theta / substeps)
            accum += rng.poisson(mean) if poisson else mean
        crossings = np.floor(accum / theta).astype(np.int64)
        if not poisson and np.any(crossings - fired_total > 1):
            raise AssertionError("more than one threshold crossing in a single frame; "
                                 "scene brightness violates the one-spike-per-frame regime")
        bits[t] = crossings > fired_total
        fired_total = crossings

    return SpikeStream(bits, camera.period)
