"""Full trainable model: representation, flow backbone, and fusion weight head.

Checkpoints store every parameter plus enough configuration (as ``meta.*``
entries in the same format) to rebuild the model without outside context.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor, Parameter
from .flownet import BackboneConfig, CoarseToFineFlowNet
from .losses import FusionWeightHead
from .representation import DynamicTimingRepresentation, RepresentationOut, TmrConfig
from .stream import StreamWindow

__all__ = ["SpikeFlowModel"]

MAX_MODEL_PARAMETERS = 700_000


class SpikeFlowModel:
    """End-to-end model over spike windows; all parts share one parameter table."""

    def __init__(self, tmr_config: TmrConfig = TmrConfig(),
                 backbone_config: BackboneConfig = BackboneConfig(),
                 fusion_terms: int = 4,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.tmr_config = tmr_config
        self.backbone_config = backbone_config
        self.representation = DynamicTimingRepresentation(tmr_config, rng, prefix="rep")
        self.flownet = CoarseToFineFlowNet(tmr_config.feature_channels, backbone_config,
                                           rng, prefix="flow")
        self.weight_head = FusionWeightHead(terms=fusion_terms, rng=rng, prefix="fusion")

        count = self.param_count()
        if count > MAX_MODEL_PARAMETERS:
            raise ValueError(f"model has {count} parameters, budget is {MAX_MODEL_PARAMETERS}")

    def parameters(self) -> dict[str, Parameter]:
        merged: dict[str, Parameter] = {}
        for part in (self.representation, self.flownet, self.weight_head):
            for name, p in part.parameters().items():
                if name in merged:
                    raise ValueError(f"duplicate parameter name {name}")
                merged[name] = p
        return merged

    def param_count(self) -> int:
        return sum(p.value.size for p in self.parameters().values())

    def represent(self, window: StreamWindow) -> RepresentationOut:
        return self.representation.forward(window)

    def bidirectional_flow(self, window0: StreamWindow,
                           window1: StreamWindow) -> tuple[DiffTensor, DiffTensor]:
        """Forward and backward flow with shared weights in both directions:
        swapping the windows swaps the outputs exactly."""
        rep0 = self.represent(window0)
        rep1 = self.represent(window1)
        flow_fwd = self.flownet.estimate_flow(rep0.features, rep1.features)
        flow_bwd = self.flownet.estimate_flow(rep1.features, rep0.features)
        return flow_fwd, flow_bwd

    def fusion_weights(self, flow) -> DiffTensor:
        return self.weight_head.forward(flow)

    # -- persistence ---------------------------------------------------------

    def _meta(self) -> dict[str, np.ndarray]:
        t, b = self.tmr_config, self.backbone_config
        return {
            "meta.tmr.layers": np.float64(t.layers),
            "meta.tmr.dilations": np.asarray(t.dilations, dtype=np.float64),
            "meta.tmr.kernel": np.float64(t.kernel),
            "meta.tmr.channels": np.float64(t.channels),
            "meta.tmr.window_length": np.float64(t.window_length),
            "meta.backbone.channels": np.asarray(b.channels, dtype=np.float64),
            "meta.backbone.max_displacement": np.float64(b.max_displacement),
            "meta.backbone.coarse_channels": np.float64(b.coarse_channels),
            "meta.backbone.refine_channels": np.asarray(b.refine_channels, dtype=np.float64),
            "meta.fusion.terms": np.float64(self.weight_head.terms),
        }

    def save(self, path, extra_meta: dict[str, float] | None = None) -> int:
        arrays = {name: p.value for name, p in self.parameters().items()}
        arrays.update(self._meta())
        for key, value in (extra_meta or {}).items():
            arrays[f"meta.{key}"] = np.float64(value)
        return ad.save_checkpoint(path, arrays)

    @classmethod
    def load(cls, path) -> tuple["SpikeFlowModel", dict[str, float]]:
        """Rebuild a model from a checkpoint; returns it plus any extra
        ``meta.*`` scalars that were stored alongside (dt, seed, ...)."""
        arrays = ad.load_checkpoint(path)
        meta = {k[len("meta."):]: arrays.pop(k) for k in list(arrays) if k.startswith("meta.")}
        tmr = TmrConfig(layers=int(meta.pop("tmr.layers")),
                        dilations=tuple(int(d) for d in np.atleast_1d(meta.pop("tmr.dilations"))),
                        kernel=int(meta.pop("tmr.kernel")),
                        channels=int(meta.pop("tmr.channels")),
                        window_length=int(meta.pop("tmr.window_length")))
        backbone = BackboneConfig(
            channels=tuple(int(c) for c in np.atleast_1d(meta.pop("backbone.channels"))),
            max_displacement=int(meta.pop("backbone.max_displacement")),
            coarse_channels=int(meta.pop("backbone.coarse_channels")),
            refine_channels=tuple(int(c) for c in np.atleast_1d(meta.pop("backbone.refine_channels"))))
        model = cls(tmr, backbone, fusion_terms=int(meta.pop("fusion.terms")))
        params = model.parameters()
        missing = set(params) - set(arrays)
        unexpected = set(arrays) - set(params)
        if missing or unexpected:
            raise ad.CheckpointError(f"parameter mismatch: missing {sorted(missing)}, "
                                     f"unexpected {sorted(unexpected)}")
        for name, p in params.items():
            if arrays[name].shape != p.value.shape:
                raise ad.CheckpointError(f"shape mismatch for {name}: "
                                         f"{arrays[name].shape} vs {p.value.shape}")
            p.value = np.array(arrays[name])
        extra = {k: float(v) for k, v in meta.items()}
        return model, extra
