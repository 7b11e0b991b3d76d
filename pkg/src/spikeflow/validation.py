"""Input validation helpers shared by the public API surfaces."""

from __future__ import annotations

import numpy as np

from .flowfield import FlowField
from .stream import SpikeStream

__all__ = ["ensure_stream", "ensure_streams", "as_flow_field", "check_frame_index"]


def ensure_stream(x) -> SpikeStream:
    if not isinstance(x, SpikeStream):
        raise TypeError(f"expected a SpikeStream, got {type(x).__name__}")
    return x


def ensure_streams(x) -> list[SpikeStream]:
    """Accept a single stream or a sequence of streams; all must share geometry."""
    streams = [x] if isinstance(x, SpikeStream) else list(x)
    if not streams:
        raise ValueError("need at least one spike stream")
    for s in streams:
        ensure_stream(s)
    shapes = {(s.height, s.width) for s in streams}
    if len(shapes) > 1:
        raise ValueError(f"streams must share spatial shape, got {sorted(shapes)}")
    return streams


def as_flow_field(x) -> FlowField:
    if isinstance(x, FlowField):
        return x
    return FlowField.from_array(np.asarray(x, dtype=np.float64))


def check_frame_index(stream: SpikeStream, tau: int, name: str = "frame index") -> int:
    tau = int(tau)
    if not 0 <= tau < stream.length:
        raise ValueError(f"{name} {tau} outside stream of length {stream.length}")
    return tau
