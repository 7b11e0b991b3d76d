"""Spike-camera toolkit: simulation, intensity reconstruction, and
unsupervised optical flow learned directly from spike streams."""

from .estimator import SpikeFlowEstimator
from .evaluate import aee, flow_to_color, read_flo, write_flo
from .flowfield import FlowField
from .model import SpikeFlowModel
from .reconstruct import ReconConfig, fuse, interval_estimate, window_estimate
from .simulate import CameraConfig, GroundTruth, SceneSpec, ground_truth_flow, render_scene, simulate
from .stream import SpikeStream, StreamWindow, decode, encode, read_spk, write_spk
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "SpikeFlowEstimator",
    "SpikeFlowModel",
    "SpikeStream",
    "StreamWindow",
    "FlowField",
    "CameraConfig",
    "SceneSpec",
    "GroundTruth",
    "ReconConfig",
    "TrainConfig",
    "aee",
    "decode",
    "encode",
    "flow_to_color",
    "fuse",
    "ground_truth_flow",
    "interval_estimate",
    "read_flo",
    "read_spk",
    "render_scene",
    "simulate",
    "train",
    "window_estimate",
    "write_flo",
    "write_spk",
    "__version__",
]
