"""Dense per-pixel displacement fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FlowField"]


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement in pixels: u along x (columns), v along y (rows)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.shape != v.shape or u.ndim != 2:
            raise ValueError(f"u and v must be equal-shape 2D arrays, got {u.shape} and {v.shape}")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValueError("flow components must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def as_array(self) -> np.ndarray:
        """Interleaved (H, W, 2) array, last axis (u, v)."""
        return np.stack([self.u, self.v], axis=-1)

    def planes(self) -> np.ndarray:
        """Stacked (2, H, W) array, first axis (u, v)."""
        return np.stack([self.u, self.v], axis=0)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FlowField":
        """Build from (H, W, 2) interleaved or (2, H, W) planar layout.

        An ambiguous (2, W, 2) array is read as interleaved with height 2.
        """
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"expected 3D flow array, got shape {arr.shape}")
        if arr.shape[-1] == 2:
            return cls(arr[..., 0], arr[..., 1])
        if arr.shape[0] == 2:
            return cls(arr[0], arr[1])
        raise ValueError(f"cannot interpret shape {arr.shape} as a flow field")

    @classmethod
    def constant(cls, shape: tuple[int, int], u: float, v: float) -> "FlowField":
        return cls(np.full(shape, float(u)), np.full(shape, float(v)))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def negated(self) -> "FlowField":
        return FlowField(-self.u, -self.v)
