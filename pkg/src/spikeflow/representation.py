"""Temporal multi-dilated spike representation with layer attention.

A stack of 1D dilated convolutions runs over each pixel's spike sequence with
weights shared across pixels; every layer summarizes the stream at a different
temporal scale. A small MLP turns the per-layer pooled descriptor into
sigmoid gates that reweight the layers before they are concatenated along
channels and collapsed over time into a per-pixel feature map.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor, Parameter
from .stream import StreamWindow

__all__ = ["TmrConfig", "RepresentationOut", "DynamicTimingRepresentation"]


@dataclass(frozen=True)
class TmrConfig:
    """Dilated-stack shape: layer count, dilations, kernel size, channels per
    layer, and the temporal window length the trainer feeds in."""

    layers: int = 4
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    kernel: int = 3
    channels: int = 8
    window_length: int = 41

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one layer")
        if len(self.dilations) != self.layers:
            raise ValueError(f"{self.layers} layers need {self.layers} dilations, "
                             f"got {self.dilations}")
        if any(d2 <= d1 for d1, d2 in zip(self.dilations, self.dilations[1:])):
            raise ValueError(f"dilations must be strictly increasing, got {self.dilations}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")

    @property
    def receptive_field(self) -> int:
        """Temporal extent one output sample can see: 1 + (k-1) * sum(dilations)."""
        return 1 + (self.kernel - 1) * sum(self.dilations)

    @property
    def feature_channels(self) -> int:
        return self.layers * self.channels


@dataclass(frozen=True, eq=False)
class RepresentationOut:
    """Per-pixel features (layers*channels, H, W) and the per-sample layer
    gates, each in (0, 1)."""

    features: DiffTensor
    attention: DiffTensor


class DynamicTimingRepresentation:
    """Pixel-shared dilated temporal convolution stack fused by layer attention."""

    MAX_PARAMETERS = 60_000

    def __init__(self, config: TmrConfig = TmrConfig(), rng: np.random.Generator | None = None,
                 prefix: str = "rep"):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(0)
        self._params: dict[str, Parameter] = {}

        c, k, n = config.channels, config.kernel, config.layers
        c_in = 1
        self._convs: list[tuple[Parameter, Parameter, int]] = []
        for i, dilation in enumerate(config.dilations):
            w = self._param(rng.normal(0.0, np.sqrt(2.0 / (c_in * k)), (c, c_in, k)),
                            f"{prefix}.conv{i + 1}.weight")
            b = self._param(np.zeros(c), f"{prefix}.conv{i + 1}.bias")
            self._convs.append((w, b, dilation))
            c_in = c

        scale = np.sqrt(2.0 / n)
        self._mlp_w1 = self._param(rng.normal(0.0, scale, (n, n)), f"{prefix}.attention.fc1.weight")
        self._mlp_b1 = self._param(np.zeros(n), f"{prefix}.attention.fc1.bias")
        self._mlp_w2 = self._param(rng.normal(0.0, scale, (n, n)), f"{prefix}.attention.fc2.weight")
        self._mlp_b2 = self._param(np.zeros(n), f"{prefix}.attention.fc2.bias")

        count = self.param_count()
        if count > self.MAX_PARAMETERS:
            raise ValueError(f"representation has {count} parameters, "
                             f"budget is {self.MAX_PARAMETERS}")

    def _param(self, value: np.ndarray, name: str) -> Parameter:
        p = Parameter(value, name)
        self._params[name] = p
        return p

    def parameters(self) -> dict[str, Parameter]:
        return dict(self._params)

    def param_count(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def tmr_forward(self, sequences) -> list[DiffTensor]:
        """Run the dilated stack over channel-major (1, P, L) pixel sequences;
        returns the n per-layer outputs, each (channels, P, L)."""
        x = ad.as_tensor(sequences)
        length = x.value.shape[-1]
        if length < self.config.receptive_field:
            warnings.warn(f"window length {length} is shorter than the receptive field "
                          f"{self.config.receptive_field}; zero padding covers the rest",
                          stacklevel=2)
        outputs = []
        for w, b, dilation in self._convs:
            x = ad.leaky_relu(ad.conv1d_dilated(x, w, b, dilation=dilation), 0.1)
            outputs.append(x)
        return outputs

    def attention_gates(self, layer_outputs: list[DiffTensor]) -> DiffTensor:
        """Per-layer sigmoid gates from the MLP over the pooled descriptor."""
        n = self.config.layers
        descriptors = [out.mean().reshape((1, 1)) for out in layer_outputs]
        desc = ad.concat(descriptors, axis=1)                    # (1, n)
        hidden = ad.relu(ad.matmul(desc, self._mlp_w1) + self._mlp_b1.reshape((1, n)))
        logits = ad.matmul(hidden, self._mlp_w2) + self._mlp_b2.reshape((1, n))
        return ad.sigmoid(logits).reshape((n,))

    def layer_attention(self, layer_outputs: list[DiffTensor]) -> tuple[DiffTensor, DiffTensor]:
        """Gate each layer's features and concatenate along channels;
        returns ((n*channels, P, L) features, (n,) gates)."""
        n = self.config.layers
        attention = self.attention_gates(layer_outputs)
        c, p, length = layer_outputs[0].value.shape
        stacked = ad.concat([out.reshape((1, c, p, length)) for out in layer_outputs], axis=0)
        gated = stacked * attention.reshape((n, 1, 1, 1))
        features = gated.reshape((n * c, p, length))
        return features, attention

    def forward(self, window, shape: tuple[int, int] | None = None) -> RepresentationOut:
        """Full representation of a stream window (or raw channel-major
        (1, P, L) sequences with an explicit (H, W) shape): gated features
        collapsed over time into a (n*channels, H, W) map.

        The temporal mean commutes with the scalar gates, so each layer is
        collapsed before gating and concatenation; the result equals collapsing
        ``layer_attention``'s output but moves far less data.
        """
        if isinstance(window, StreamWindow):
            sequences = window.pixel_sequences()
            shape = (window.parent.height, window.parent.width)
        else:
            if shape is None:
                raise ValueError("raw sequences need an explicit (H, W) shape")
            sequences = window
        height, width = shape
        n, c = self.config.layers, self.config.channels

        layer_outputs = self.tmr_forward(sequences)
        attention = self.attention_gates(layer_outputs)
        p = layer_outputs[0].value.shape[1]
        stacked = ad.concat([out.mean(axis=2).reshape((1, c, p)) for out in layer_outputs],
                            axis=0)                              # (n, channels, P)
        gated = stacked * attention.reshape((n, 1, 1))
        fmap = gated.reshape((self.config.feature_channels, height, width))
        return RepresentationOut(features=fmap, attention=attention)
