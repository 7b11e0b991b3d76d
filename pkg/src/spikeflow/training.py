"""Unsupervised training loop over spike streams.

Each iteration samples a frame pair (t0, t0 + dt), runs both windows through
the representation and the bidirectional flow network, evaluates the
spike-based loss on cached intensity reconstructions, and takes an Adam step.
All randomness derives from one seed through named substreams (scene, init,
sampling), so runs are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .evaluate import aee
from .flowfield import FlowField
from .flownet import BackboneConfig
from .losses import LossConfig, total_loss
from .model import SpikeFlowModel
from .reconstruct import ReconConfig, estimate_stack
from .representation import TmrConfig
from .simulate import SceneSpec, ground_truth_flow
from .stream import SpikeStream, StreamWindow

__all__ = ["TrainConfig", "TrainResult", "SeedStreams", "derive_seeds", "train"]


@dataclass(frozen=True)
class TrainConfig:
    dt: int = 10
    window_length: int = 41
    iters: int = 2000
    lr: float = 1e-3
    batch: int = 1
    smoothness_weight: float = 0.1
    short_half: int = 40
    long_half: int = 100
    orders: int = 2
    channels: int = 8
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    kernel: int = 3
    fusion_mode: str = "learned"
    # the fusion head rides a slower timescale than the flow pathway: joint
    # equal-rate updates let it chase whichever estimator pair happens to
    # match best before the flow has aligned anything
    head_lr_scale: float = 0.05
    seed: int = 0
    eval_every: int = 100
    taus: int = 48

    def __post_init__(self):
        if self.dt < 1:
            raise ValueError("dt must be >= 1")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.taus < 1:
            raise ValueError("need at least one candidate center")
        if self.window_length % 2 != 1:
            raise ValueError("window_length must be odd (centered windows)")

    def tmr_config(self) -> TmrConfig:
        return TmrConfig(layers=len(self.dilations), dilations=self.dilations,
                         kernel=self.kernel, channels=self.channels,
                         window_length=self.window_length)

    def recon_config(self) -> ReconConfig:
        return ReconConfig(short_half=self.short_half, long_half=self.long_half,
                           orders=self.orders)

    def loss_config(self) -> LossConfig:
        return LossConfig(smoothness_weight=self.smoothness_weight,
                          fusion_mode=self.fusion_mode)


@dataclass(frozen=True)
class SeedStreams:
    """Named substreams of the run seed."""

    scene_seed: int
    init: np.random.SeedSequence
    sampling: np.random.SeedSequence


def derive_seeds(seed: int) -> SeedStreams:
    scene_ss, init_ss, sample_ss = np.random.SeedSequence(seed).spawn(3)
    return SeedStreams(scene_seed=int(scene_ss.generate_state(1)[0]),
                       init=init_ss, sampling=sample_ss)


@dataclass
class TrainResult:
    model: SpikeFlowModel
    history: list = field(default_factory=list)
    final_loss: float = float("nan")
    final_aee: float | None = None
    config: dict = field(default_factory=dict)


def _candidate_taus(n_frames: int, cfg: TrainConfig) -> np.ndarray:
    """Evenly spaced window centers whose representation windows never clip;
    when the stream is long enough the reconstruction windows stay interior too."""
    margin = cfg.window_length // 2
    lo, hi = margin, n_frames - 1 - margin - cfg.dt
    if hi < lo:
        raise ValueError(f"stream of {n_frames} frames is too short for "
                         f"window_length={cfg.window_length} and dt={cfg.dt}")
    wide_lo = max(lo, cfg.long_half)
    wide_hi = min(hi, n_frames - 1 - cfg.long_half - cfg.dt)
    if wide_hi >= wide_lo:
        lo, hi = wide_lo, wide_hi
    return np.unique(np.linspace(lo, hi, cfg.taus).round().astype(int))


def _flow_reference(gt, t0: int, t1: int) -> FlowField | None:
    if gt is None:
        return None
    if isinstance(gt, FlowField):
        return gt
    if isinstance(gt, SceneSpec):
        return ground_truth_flow(gt, t0, t1).flow
    raise TypeError(f"cannot derive reference flow from {type(gt).__name__}")


def train(streams, cfg: TrainConfig = TrainConfig(), references=None,
          progress=None) -> TrainResult:
    """Train a fresh model on one or more spike streams.

    ``references`` optionally carries, per stream, a SceneSpec or a constant
    FlowField used only to log endpoint error during training. ``progress``
    is called with each history entry as it is appended.
    """
    if isinstance(streams, SpikeStream):
        streams = [streams]
    if not streams:
        raise ValueError("need at least one stream")
    if references is None:
        references = [None] * len(streams)
    if len(references) != len(streams):
        raise ValueError("one reference entry per stream required")

    seeds = derive_seeds(cfg.seed)
    init_rng = np.random.default_rng(seeds.init)
    sample_rng = np.random.default_rng(seeds.sampling)

    model = SpikeFlowModel(cfg.tmr_config(), BackboneConfig(), rng=init_rng)
    params = model.parameters()
    head_params = [p for name, p in params.items() if name.startswith("fusion.")]
    body_params = [p for name, p in params.items() if not name.startswith("fusion.")]
    optimizers = [ad.Adam(body_params, lr=cfg.lr)]
    if head_params:
        optimizers.append(ad.Adam(head_params, lr=cfg.lr * cfg.head_lr_scale))
    loss_cfg = cfg.loss_config()
    recon_cfg = cfg.recon_config()
    half = cfg.window_length // 2

    taus = [_candidate_taus(s.length, cfg) for s in streams]
    recon_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def cached_stack(si: int, tau: int):
        key = (si, tau)
        if key not in recon_cache:
            recon_cache[key] = estimate_stack(streams[si], tau, recon_cfg)
        return recon_cache[key]

    result = TrainResult(model=model, config=asdict(cfg))
    last_flow = None
    last_pair = None

    for it in range(cfg.iters):
        for opt in optimizers:
            opt.zero_grad()
        loss_sum = 0.0
        for _ in range(cfg.batch):
            si = int(sample_rng.integers(len(streams)))
            t0 = int(sample_rng.choice(taus[si]))
            t1 = t0 + cfg.dt
            window0 = StreamWindow(streams[si], t0, half)
            window1 = StreamWindow(streams[si], t1, half)
            flow_fwd, flow_bwd = model.bidirectional_flow(window0, window1)
            est0, valid0 = cached_stack(si, t0)
            est1, valid1 = cached_stack(si, t1)
            loss, parts = total_loss(est0, valid0, est1, valid1,
                                     flow_fwd, flow_bwd, model.weight_head, loss_cfg)
            ad.backward(loss)
            loss_sum += parts["total"]
            last_flow, last_pair = flow_fwd, (si, t0, t1)
        for opt in optimizers:
            opt.step()

        mean_loss = loss_sum / cfg.batch
        result.final_loss = mean_loss
        if cfg.eval_every and (it % cfg.eval_every == 0 or it == cfg.iters - 1):
            entry = {"iter": it, "loss": mean_loss}
            si, t0, t1 = last_pair
            reference = _flow_reference(references[si], t0, t1)
            if reference is not None:
                predicted = FlowField(last_flow.value[0], last_flow.value[1])
                entry["aee"] = aee(predicted, reference)
                result.final_aee = entry["aee"]
            result.history.append(entry)
            if progress is not None:
                progress(entry)

    return result


def predict_flow(model: SpikeFlowModel, stream: SpikeStream, t0: int, dt: int) -> FlowField:
    """Run the trained model on one frame pair and return the forward flow."""
    half = model.tmr_config.window_length // 2
    window0 = StreamWindow(stream, t0, half)
    window1 = StreamWindow(stream, t0 + dt, half)
    flow_fwd, _ = model.bidirectional_flow(window0, window1)
    return FlowField(flow_fwd.value[0], flow_fwd.value[1])
