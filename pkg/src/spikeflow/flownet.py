"""Two-level coarse-to-fine flow network over representation feature maps.

Level 1 keeps full resolution; level 2 is a stride-2 encoder whose features
feed a normalized dot-product cost volume and a coarse flow head. The coarse
flow (expressed in full-resolution pixels throughout, so upsampling never
rescales values) is upsampled, used to warp level-1 features of the second
input, and refined by a small conv stack. Both flow heads are zero-initialized
so a fresh network outputs exactly zero flow for any input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor, Parameter

__all__ = ["BackboneConfig", "CoarseToFineFlowNet"]


@dataclass(frozen=True)
class BackboneConfig:
    """Pyramid shape: per-level feature channels, correlation range at the
    coarse level, refinement widths, and the trainable-parameter budget."""

    channels: tuple[int, int] = (16, 32)
    max_displacement: int = 3
    coarse_channels: int = 32
    refine_channels: tuple[int, int] = (32, 16)
    max_parameters: int = 700_000

    def __post_init__(self):
        if len(self.channels) != 2:
            raise ValueError("exactly two pyramid levels are supported")
        if self.max_displacement < 1:
            raise ValueError("max_displacement must be >= 1")
        if len(self.refine_channels) != 2:
            raise ValueError("refinement stack is three convs: two hidden widths plus the head")

    @property
    def cost_channels(self) -> int:
        return (2 * self.max_displacement + 1) ** 2


class CoarseToFineFlowNet:
    """Shared-weight flow estimator mapping two feature maps to a (2, H, W) flow."""

    def __init__(self, in_channels: int, config: BackboneConfig = BackboneConfig(),
                 rng: np.random.Generator | None = None, prefix: str = "flow"):
        self.config = config
        self.in_channels = in_channels
        rng = rng if rng is not None else np.random.default_rng(0)
        self._params: dict[str, Parameter] = {}

        c1, c2 = config.channels
        r1, r2 = config.refine_channels
        self._enc1 = self._conv_pair(rng, in_channels, c1, f"{prefix}.enc1")
        self._enc2 = self._conv_pair(rng, c1, c2, f"{prefix}.enc2")
        self._coarse1 = self._conv_pair(rng, config.cost_channels, config.coarse_channels,
                                        f"{prefix}.coarse1")
        self._coarse_head = self._conv_pair(rng, config.coarse_channels, 2,
                                            f"{prefix}.coarse_head", zero=True)
        refine_in = 2 * c1 + 2
        self._refine1 = self._conv_pair(rng, refine_in, r1, f"{prefix}.refine1")
        self._refine2 = self._conv_pair(rng, r1, r2, f"{prefix}.refine2")
        self._refine_head = self._conv_pair(rng, r2, 2, f"{prefix}.refine_head", zero=True)

        # soft-argmax decoder over the cost volume: mirror-equivariant, so the
        # swapped-input direction starts out as the negated flow instead of
        # having to learn the sign from the tiny rep0/rep1 asymmetry; the gate
        # starts at zero to keep the exact zero-flow initialization
        self._match_temperature = Parameter(np.float64(20.0), f"{prefix}.match_temperature")
        self._match_gate = Parameter(np.float64(0.0), f"{prefix}.match_gate")
        self._params[self._match_temperature.name] = self._match_temperature
        self._params[self._match_gate.name] = self._match_gate
        d = config.max_displacement
        offsets = np.arange(-d, d + 1, dtype=np.float64)
        self._disp_x = np.tile(offsets, 2 * d + 1)[:, None, None]
        self._disp_y = np.repeat(offsets, 2 * d + 1)[:, None, None]

        count = self.param_count()
        if count > config.max_parameters:
            raise ValueError(f"flow network has {count} parameters, "
                             f"budget is {config.max_parameters}")

    def _conv_pair(self, rng, c_in: int, c_out: int, name: str,
                   zero: bool = False) -> tuple[Parameter, Parameter]:
        if zero:
            w = np.zeros((c_out, c_in, 3, 3))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / (c_in * 9)), (c_out, c_in, 3, 3))
        weight = Parameter(w, f"{name}.weight")
        bias = Parameter(np.zeros(c_out), f"{name}.bias")
        self._params[weight.name] = weight
        self._params[bias.name] = bias
        return weight, bias

    def parameters(self) -> dict[str, Parameter]:
        return dict(self._params)

    def param_count(self) -> int:
        return sum(p.value.size for p in self._params.values())

    @staticmethod
    def _normalize(features: DiffTensor) -> DiffTensor:
        norm = ad.sqrt((features * features).sum(axis=0, keepdims=True) + 1e-12)
        return features / norm

    def _soft_argmax(self, cost: DiffTensor) -> DiffTensor:
        """Expected displacement under a softmax over the cost channels, in
        full-resolution pixels (the cost level sits one stride-2 down)."""
        prob = ad.softmax(cost * self._match_temperature, axis=0)
        _, hc, wc = cost.value.shape
        u = (prob * self._disp_x).sum(axis=0).reshape((1, hc, wc))
        v = (prob * self._disp_y).sum(axis=0).reshape((1, hc, wc))
        return ad.concat([u, v], axis=0) * 2.0

    def estimate_flow(self, rep0, rep1) -> DiffTensor:
        """Flow from the first feature map to the second, in pixels."""
        rep0, rep1 = ad.as_tensor(rep0), ad.as_tensor(rep1)
        if rep0.value.shape != rep1.value.shape:
            raise ValueError(f"feature shapes differ: {rep0.shape} vs {rep1.shape}")
        if rep0.value.shape[0] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {rep0.value.shape[0]}")
        _, height, width = rep0.value.shape
        if height % 2 or width % 2:
            raise ValueError(f"spatial size must be even for the 2-level pyramid, got {height}x{width}")

        f0_fine = ad.leaky_relu(ad.conv2d(rep0, *self._enc1), 0.1)
        f1_fine = ad.leaky_relu(ad.conv2d(rep1, *self._enc1), 0.1)
        f0_coarse = ad.leaky_relu(ad.conv2d(f0_fine, *self._enc2, stride=2), 0.1)
        f1_coarse = ad.leaky_relu(ad.conv2d(f1_fine, *self._enc2, stride=2), 0.1)

        cost = ad.correlation(self._normalize(f0_coarse), self._normalize(f1_coarse),
                              self.config.max_displacement)
        hidden = ad.leaky_relu(ad.conv2d(cost, *self._coarse1), 0.1)
        matched = self._soft_argmax(cost)
        coarse_flow = matched * self._match_gate + ad.conv2d(hidden, *self._coarse_head)

        up_flow = ad.upsample2x(coarse_flow)
        warped, _ = ad.warp_bilinear(f1_fine, up_flow)
        stack = ad.concat([f0_fine, warped, up_flow], axis=0)
        refined = ad.leaky_relu(ad.conv2d(stack, *self._refine1), 0.1)
        refined = ad.leaky_relu(ad.conv2d(refined, *self._refine2), 0.1)
        delta = ad.conv2d(refined, *self._refine_head)
        return up_flow + delta
