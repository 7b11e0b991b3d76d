"""Spike-based unsupervised objective.

The flow estimate drives a small conv head that outputs per-pixel convex
fusion weights over the four intensity estimators; the fused intensity maps
feed a bidirectional Charbonnier photometric loss, regularized by first-order
total-variation smoothness on both flows. Intensity estimates enter the loss
as constants (spike counting is not differentiable); gradients reach the flow
through warping and the weight head through the fusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import reconstruct
from .autodiff import DiffTensor, Parameter

__all__ = ["LossConfig", "FusionWeightHead", "photometric_loss", "smoothness_loss", "total_loss"]

FUSION_MODES = ("learned", "windows", "intervals")


@dataclass(frozen=True)
class LossConfig:
    """Loss knobs: smoothness weight, Charbonnier constants, fusion mode.

    fusion_mode "windows"/"intervals" pins the fusion weights to the window or
    interval terms only (ablation switches); "learned" uses the weight head.
    """

    smoothness_weight: float = 0.1
    charbonnier_eps: float = 1e-3
    charbonnier_gamma: float = 0.45
    fusion_mode: str = "learned"

    def __post_init__(self):
        if self.smoothness_weight < 0:
            raise ValueError(f"smoothness_weight must be >= 0, got {self.smoothness_weight}")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")


class FusionWeightHead:
    """Two-conv head mapping flow (u, v, |f|) to per-pixel softmax weights
    over the fusion terms. The final conv is zero-initialized so a fresh head
    emits uniform weights everywhere."""

    def __init__(self, terms: int = 4, hidden: int = 8,
                 rng: np.random.Generator | None = None, prefix: str = "fusion"):
        self.terms = terms
        rng = rng if rng is not None else np.random.default_rng(0)
        self._params: dict[str, Parameter] = {}
        w1 = Parameter(rng.normal(0.0, np.sqrt(2.0 / (3 * 9)), (hidden, 3, 3, 3)),
                       f"{prefix}.conv1.weight")
        b1 = Parameter(np.zeros(hidden), f"{prefix}.conv1.bias")
        w2 = Parameter(np.zeros((terms, hidden, 3, 3)), f"{prefix}.head.weight")
        b2 = Parameter(np.zeros(terms), f"{prefix}.head.bias")
        for p in (w1, b1, w2, b2):
            self._params[p.name] = p
        self._conv1 = (w1, b1)
        self._head = (w2, b2)

    def parameters(self) -> dict[str, Parameter]:
        return dict(self._params)

    def param_count(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def forward(self, flow) -> DiffTensor:
        """Per-pixel fusion weights (terms, H, W); non-negative, sum to 1."""
        flow = ad.as_tensor(flow)
        magnitude = ad.sqrt((flow * flow).sum(axis=0, keepdims=True) + 1e-12)
        stack = ad.concat([flow, magnitude], axis=0)
        hidden = ad.leaky_relu(ad.conv2d(stack, *self._conv1), 0.1)
        logits = ad.conv2d(hidden, *self._head)
        return ad.softmax(logits, axis=0)


def _masked_charbonnier_mean(diff: DiffTensor, valid: np.ndarray, cfg: LossConfig) -> DiffTensor:
    mask = valid.astype(np.float64)[None]
    penalty = ad.charbonnier(diff, cfg.charbonnier_eps, cfg.charbonnier_gamma)
    return (penalty * mask).sum() / max(float(mask.sum()), 1.0)


def photometric_loss(flow_fwd, flow_bwd, intensity0, intensity1,
                     cfg: LossConfig = LossConfig()) -> DiffTensor:
    """Bidirectional warped-intensity penalty.

    Warps the t1 intensity by the forward flow against t0, and the t0
    intensity by the backward flow against t1; each direction averages the
    Charbonnier penalty over its in-bounds pixels. Symmetric under swapping
    (intensity0, intensity1) together with (flow_fwd, flow_bwd).
    """
    i0 = _as_image(intensity0)
    i1 = _as_image(intensity1)
    warped1, valid1 = ad.warp_bilinear(i1, flow_fwd)
    warped0, valid0 = ad.warp_bilinear(i0, flow_bwd)
    forward = _masked_charbonnier_mean(i0 - warped1, valid1, cfg)
    backward_ = _masked_charbonnier_mean(warped0 - i1, valid0, cfg)
    return forward + backward_


def _as_image(x) -> DiffTensor:
    t = ad.as_tensor(x)
    return t.reshape((1,) + t.value.shape) if t.ndim == 2 else t


def smoothness_loss(flow, cfg: LossConfig = LossConfig()) -> DiffTensor:
    """First-order total variation under the Charbonnier penalty: mean over
    horizontal plus mean over vertical differences of both flow components."""
    flow = ad.as_tensor(flow)
    dx = ad.finite_diff(flow, axis=2)
    dy = ad.finite_diff(flow, axis=1)
    return (ad.charbonnier(dx, cfg.charbonnier_eps, cfg.charbonnier_gamma).mean()
            + ad.charbonnier(dy, cfg.charbonnier_eps, cfg.charbonnier_gamma).mean())


def fixed_fusion_weights(mode: str, terms: int = 4) -> np.ndarray:
    """Constant weights for the ablation modes (windows-only / intervals-only)."""
    w = np.zeros(terms)
    if mode == "windows":
        w[:2] = 0.5
    elif mode == "intervals":
        w[2:] = 1.0 / (terms - 2)
    else:
        raise ValueError(f"no fixed weights for mode {mode!r}")
    return w


def total_loss(estimates0: np.ndarray, validity0: np.ndarray,
               estimates1: np.ndarray, validity1: np.ndarray,
               flow_fwd, flow_bwd, weight_head: FusionWeightHead | None,
               cfg: LossConfig = LossConfig()) -> tuple[DiffTensor, dict]:
    """Full objective for one stream pair.

    One weight field, predicted from the forward flow, gates the fusion at
    both timestamps; feeding the backward flow into the head instead hands it
    a second, non-geometric job (tuning the t1 mixture to mimic t0) and the
    trained backward flow collapses onto the forward one. The total is
    photo + lambda * (smooth(f) + smooth(f')).
    """
    if cfg.fusion_mode == "learned":
        if weight_head is None:
            raise ValueError("learned fusion needs a weight head")
        weights0 = weights1 = weight_head.forward(flow_fwd)
    else:
        weights0 = weights1 = fixed_fusion_weights(cfg.fusion_mode, estimates0.shape[0])

    fused0 = reconstruct.fuse_stack(estimates0, validity0, weights0)
    fused1 = reconstruct.fuse_stack(estimates1, validity1, weights1)
    photo = photometric_loss(flow_fwd, flow_bwd, fused0, fused1, cfg)
    smooth = smoothness_loss(flow_fwd, cfg) + smoothness_loss(flow_bwd, cfg)
    total = photo + cfg.smoothness_weight * smooth
    return total, {"photometric": float(photo.value),
                   "smoothness": float(smooth.value),
                   "total": float(total.value)}
