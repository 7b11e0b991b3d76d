"""Scikit-learn style front end for the unsupervised flow pipeline.

``SpikeFlowEstimator`` follows the estimator contract (constructor stores
hyperparameters verbatim, ``fit`` learns, fitted state carries a trailing
underscore, ``get_params``/``set_params`` work), so it clones and composes
with the wider ecosystem. X is one SpikeStream or a list of them; there is no
``y`` because training is unsupervised.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .flowfield import FlowField
from .training import TrainConfig, predict_flow, train
from .validation import check_frame_index, ensure_streams

__all__ = ["SpikeFlowEstimator"]


class SpikeFlowEstimator(BaseEstimator):
    """Learn optical flow from raw spike streams without labels.

    Parameters mirror the training configuration; see ``TrainConfig`` for
    semantics. ``fit(X)`` trains from scratch on the given stream(s);
    ``predict(X, t0)`` returns the flow between frames t0 and t0 + dt.
    """

    def __init__(self, dt: int = 10, window_length: int = 41, iters: int = 600,
                 lr: float = 2e-3, batch: int = 1, smoothness_weight: float = 0.1,
                 short_half: int = 40, long_half: int = 100, interval_orders: int = 2,
                 channels: int = 8, dilations: tuple = (1, 2, 4, 8),
                 fusion_mode: str = "learned", seed: int = 0,
                 eval_every: int = 100, taus: int = 8):
        self.dt = dt
        self.window_length = window_length
        self.iters = iters
        self.lr = lr
        self.batch = batch
        self.smoothness_weight = smoothness_weight
        self.short_half = short_half
        self.long_half = long_half
        self.interval_orders = interval_orders
        self.channels = channels
        self.dilations = dilations
        self.fusion_mode = fusion_mode
        self.seed = seed
        self.eval_every = eval_every
        self.taus = taus

    def _train_config(self) -> TrainConfig:
        return TrainConfig(dt=self.dt, window_length=self.window_length,
                           iters=self.iters, lr=self.lr, batch=self.batch,
                           smoothness_weight=self.smoothness_weight,
                           short_half=self.short_half, long_half=self.long_half,
                           orders=self.interval_orders, channels=self.channels,
                           dilations=tuple(self.dilations),
                           fusion_mode=self.fusion_mode, seed=self.seed,
                           eval_every=self.eval_every, taus=self.taus)

    def fit(self, X, y=None, references=None):
        """Train on spike stream(s). ``references`` optionally provides
        per-stream SceneSpec or FlowField ground truth for logged AEE."""
        streams = ensure_streams(X)
        result = train(streams, self._train_config(), references=references)
        self.model_ = result.model
        self.history_ = result.history
        self.final_loss_ = result.final_loss
        self.config_ = result.config
        return self

    def predict(self, X, t0: int | None = None) -> FlowField:
        """Forward flow between frames t0 and t0 + dt of one stream."""
        check_is_fitted(self, "model_")
        (stream,) = ensure_streams(X)
        if t0 is None:
            t0 = (stream.length - self.dt) // 2
        t0 = check_frame_index(stream, t0, "t0")
        check_frame_index(stream, t0 + self.dt, "t0 + dt")
        return predict_flow(self.model_, stream, t0, self.dt)
