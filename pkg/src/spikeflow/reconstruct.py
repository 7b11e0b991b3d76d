"""Light-intensity reconstruction from spike streams.

Two complementary estimators in normalized intensity units (1.0 = one spike
per frame):

* window estimate -- spike count over a centered window divided by the
  effective window length; robust where motion is slow.
* interval estimate -- (2k-1) thresholds' worth of charge divided by the
  frame span of the (2k-1) inter-spike intervals bracketing the query frame;
  short support, suited to fast motion.

A per-pixel convex fusion combines two window scales with interval orders
k=1 and k=2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stream import SpikeStream

__all__ = [
    "ReconConfig",
    "window_estimate",
    "interval_estimate",
    "estimate_stack",
    "fuse",
    "fuse_stack",
]


@dataclass(frozen=True)
class ReconConfig:
    """Window half-lengths (short, long) and the number of interval orders."""

    short_half: int = 40
    long_half: int = 100
    orders: int = 2

    def __post_init__(self):
        if not 0 < self.short_half < self.long_half:
            raise ValueError(
                f"need 0 < short_half < long_half, got {self.short_half}, {self.long_half}")
        if self.orders < 1:
            raise ValueError(f"orders must be >= 1, got {self.orders}")

    @property
    def terms(self) -> int:
        """Number of fusion terms: two windows plus one per interval order."""
        return 2 + self.orders


def window_estimate(stream: SpikeStream, tau: int, half: int) -> np.ndarray:
    """Per-pixel spike count over [tau-half, tau+half] divided by the clipped
    window length. Dividing by the effective length avoids darkening at the
    stream boundaries."""
    if half < 1:
        raise ValueError(f"half must be >= 1, got {half}")
    lo = max(0, tau - half)
    hi = min(stream.length - 1, tau + half)
    if hi < lo:
        raise ValueError(f"window around frame {tau} does not intersect the stream")
    counts = stream.frames[lo:hi + 1].sum(axis=0, dtype=np.int64)
    return counts / float(hi - lo + 1)


def interval_estimate(stream: SpikeStream, tau: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (2k-1) / span estimate plus a validity mask.

    The span runs from the (M-k+1)-th to the (N+k-1)-th spike, where M indexes
    the last spike strictly before tau and N the first at or after it. Pixels
    lacking those spikes are marked invalid (estimate 0) rather than raising.
    """
    if k < 1:
        raise ValueError(f"interval order must be >= 1, got {k}")
    n, h, w = stream.frames.shape
    occ = stream.frames.reshape(n, h * w)
    counts = occ.sum(axis=0, dtype=np.int64)

    n_before = occ[:tau].sum(axis=0, dtype=np.int64) if tau > 0 else np.zeros(h * w, np.int64)
    left_ord = n_before - (k - 1)      # ordinal of spike M - k + 1
    right_ord = n_before + k           # ordinal of spike N + k - 1
    valid = (left_ord >= 1) & (right_ord <= counts)

    est = np.zeros(h * w)
    if valid.any():
        # ragged per-pixel spike times: nonzero of (pixels, time) is sorted by
        # pixel then frame, so offsets + (ordinal - 1) index the z-th spike
        pixel_ids, times = np.nonzero(occ.T)
        del pixel_ids
        offsets = np.concatenate([[0], np.cumsum(counts)])[:-1]
        li = offsets + np.where(valid, left_ord, 1) - 1
        ri = offsets + np.where(valid, right_ord, 1) - 1
        span = times[ri] - times[li]
        with np.errstate(divide="ignore"):
            est = np.where(valid, (2 * k - 1) / span.astype(np.float64), 0.0)

    return est.reshape(h, w), valid.reshape(h, w)


def estimate_stack(stream: SpikeStream, tau: int,
                   config: ReconConfig = ReconConfig()) -> tuple[np.ndarray, np.ndarray]:
    """All fusion terms at tau: estimates (terms, H, W) and validity (terms, H, W).

    Term order: short window, long window, then interval orders 1..K. Window
    terms are always valid.
    """
    shape = (stream.height, stream.width)
    estimates = [window_estimate(stream, tau, config.short_half),
                 window_estimate(stream, tau, config.long_half)]
    validity = [np.ones(shape, dtype=bool), np.ones(shape, dtype=bool)]
    for k in range(1, config.orders + 1):
        est, valid = interval_estimate(stream, tau, k)
        estimates.append(est)
        validity.append(valid)
    return np.stack(estimates), np.stack(validity)


def fuse_stack(estimates: np.ndarray, validity: np.ndarray, weights):
    """Convex fusion of stacked estimates under per-pixel weights.

    ``weights`` may be a numpy array broadcastable to (terms, H, W) or an
    autodiff tensor of that shape (the gradient then flows into the weights).
    Weights on invalid terms are redistributed proportionally onto the valid
    ones; if every valid term carries exactly zero weight the valid terms are
    averaged uniformly instead (softmax-produced weights never hit that path).
    """
    estimates = np.where(validity, estimates, 0.0)
    masks = validity.astype(np.float64)
    if not validity.any(axis=0).all():
        raise AssertionError("a pixel with no valid fusion term should be impossible: "
                             "window terms are always valid")

    if isinstance(weights, np.ndarray) or np.isscalar(weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim == 1:
            w = w[:, None, None]
        masked = np.broadcast_to(w, estimates.shape) * masks
        denom = masked.sum(axis=0)
        dead = denom == 0.0
        if dead.any():
            masked = np.where(dead[None], masks, masked)
            denom = masked.sum(axis=0)
        return (masked * estimates).sum(axis=0) / denom

    # autodiff path: strictly positive weights assumed (softmax output)
    masked = weights * masks
    return (masked * estimates).sum(axis=0) / masked.sum(axis=0)


def fuse(windows, intervals, weights, validity):
    """Fuse (short, long) window maps and interval maps with their validity
    masks under per-pixel weights ordered (short, long, k=1, .., k=K)."""
    short, long_ = windows
    ones = np.ones_like(short, dtype=bool)
    est = np.stack([short, long_, *intervals])
    masks = np.stack([ones, ones, *[np.asarray(v, dtype=bool) for v in validity]])
    return fuse_stack(est, masks, weights)
